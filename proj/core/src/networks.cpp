#include <gzood/error.hpp>
#include <gzood/networks.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace gzood::nn {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_cols(const Matrix& x, Index expected, const char* what) {
  if (x.cols() != expected) {
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(expected) + " columns, got " +
                          std::to_string(x.cols()));
  }
}

}  // namespace

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& d_out, Linear& grad) const {
  grad.weight.noalias() += d_out.transpose() * x;
  grad.bias.noalias() += d_out.colwise().sum().transpose();
  return d_out * weight;
}

void EncoderSpec::validate() const {
  if (input_dim < 1) throw InvalidArgument("encoder input_dim must be >= 1");
  if (hidden_dim < 1) throw InvalidArgument("encoder hidden_dim must be >= 1");
  if (latent_dim < 2) throw InvalidArgument("encoder latent_dim must be >= 2");
  if (!(kappa_max > 0.0)) throw InvalidArgument("kappa_max must be > 0");
}

void DecoderSpec::validate() const {
  if (latent_dim < 2) throw InvalidArgument("decoder latent_dim must be >= 2");
  if (hidden_dim < 1) throw InvalidArgument("decoder hidden_dim must be >= 1");
  if (output_dim < 1) throw InvalidArgument("decoder output_dim must be >= 1");
}

PosteriorBatch encode(const EncoderSpec& spec, const EncoderParams& params, const Matrix& x, EncoderCache* cache) {
  check_cols(x, spec.input_dim, "encode");
  Matrix hidden = params.trunk.forward(x).cwiseMax(0.0);
  Matrix raw_mean = params.mean_head.forward(hidden);
  Vector raw_kappa = params.kappa_head.forward(hidden).col(0);

  PosteriorBatch out{Matrix(x.rows(), spec.latent_dim), Vector(x.rows())};
  for (Index i = 0; i < x.rows(); ++i) {
    const double norm = raw_mean.row(i).norm();
    if (!(norm > 0.0)) throw NumericFailure("encoder produced a zero mean direction", -1, "encode");
    out.mu.row(i) = raw_mean.row(i) / norm;
    out.kappa[i] = std::min(softplus(raw_kappa[i]), spec.kappa_max);
  }
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
    cache->raw_mean = std::move(raw_mean);
    cache->raw_kappa = std::move(raw_kappa);
  }
  return out;
}

void encode_backward(const EncoderSpec& spec, const EncoderParams& params, const EncoderCache& cache,
                     const PosteriorBatch& out, const Matrix& d_mu, const Vector& d_kappa, EncoderParams& grad) {
  const Index n = cache.input.rows();
  Matrix d_raw_mean(n, spec.latent_dim);
  Matrix d_raw_kappa(n, 1);
  for (Index i = 0; i < n; ++i) {
    // d normalize(o) = (I - mu mu^T) / |o|
    const double norm = cache.raw_mean.row(i).norm();
    const double along = out.mu.row(i).dot(d_mu.row(i));
    d_raw_mean.row(i) = (d_mu.row(i) - along * out.mu.row(i)) / norm;
    const bool clamped = softplus(cache.raw_kappa[i]) > spec.kappa_max;
    d_raw_kappa(i, 0) = clamped ? 0.0 : d_kappa[i] * sigmoid(cache.raw_kappa[i]);
  }
  Matrix d_hidden = params.mean_head.backward(cache.hidden, d_raw_mean, grad.mean_head);
  d_hidden += params.kappa_head.backward(cache.hidden, d_raw_kappa, grad.kappa_head);
  d_hidden = d_hidden.cwiseProduct((cache.hidden.array() > 0.0).cast<double>().matrix());
  params.trunk.backward(cache.input, d_hidden, grad.trunk);
}

Matrix decode(const DecoderSpec& spec, const DecoderParams& params, const Matrix& z, DecoderCache* cache) {
  check_cols(z, spec.latent_dim, "decode");
  Matrix hidden = params.hidden.forward(z).cwiseMax(0.0);
  Matrix out = params.output.forward(hidden);
  if (cache) {
    cache->input = z;
    cache->hidden = std::move(hidden);
  }
  return out;
}

Matrix decode(const DecoderSpec& spec, const DecoderParams& params, const LatentBatch& z) {
  return decode(spec, params, z.matrix(), nullptr);
}

Matrix decode_backward(const DecoderParams& params, const DecoderCache& cache, const Matrix& d_out,
                       DecoderParams& grad) {
  Matrix d_hidden = params.output.backward(cache.hidden, d_out, grad.output);
  d_hidden = d_hidden.cwiseProduct((cache.hidden.array() > 0.0).cast<double>().matrix());
  return params.hidden.backward(cache.input, d_hidden, grad.hidden);
}

Matrix classify_latent(const ClassifierParams& params, const Matrix& z) {
  check_cols(z, params.head.in_dim(), "classify_latent");
  Matrix logits = params.head.forward(z);
  for (Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

Matrix classify_latent(const ClassifierParams& params, const LatentBatch& z) { return classify_latent(params, z.matrix()); }

Matrix classify_nll_backward(const ClassifierParams& params, const Matrix& z, const Matrix& log_probs,
                             const std::vector<int>& labels, double scale, ClassifierParams& grad) {
  Matrix d_logits = scale * log_probs.array().exp().matrix();
  for (Index i = 0; i < d_logits.rows(); ++i) d_logits(i, labels[static_cast<std::size_t>(i)]) -= scale;
  return params.head.backward(z, d_logits, grad.head);
}

ModelSpec ModelSpec::make(Index feature_dim, Index attribute_dim, Index hidden_dim, Index latent_dim,
                          std::vector<int> seen_class_ids, double kappa_max) {
  ModelSpec spec;
  spec.feature_encoder = {feature_dim, hidden_dim, latent_dim, kappa_max};
  spec.attribute_encoder = {attribute_dim, hidden_dim, latent_dim, kappa_max};
  spec.feature_decoder = {latent_dim, hidden_dim, feature_dim};
  spec.attribute_decoder = {latent_dim, hidden_dim, attribute_dim};
  spec.class_ids = std::move(seen_class_ids);
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  feature_encoder.validate();
  attribute_encoder.validate();
  feature_decoder.validate();
  attribute_decoder.validate();
  const Index m = feature_encoder.latent_dim;
  if (attribute_encoder.latent_dim != m || feature_decoder.latent_dim != m || attribute_decoder.latent_dim != m) {
    throw InvalidArgument("all encoders and decoders must share one latent dimension");
  }
  if (feature_decoder.output_dim != feature_encoder.input_dim ||
      attribute_decoder.output_dim != attribute_encoder.input_dim) {
    throw InvalidArgument("decoder output_dim must equal the reconstructed modality's dimension");
  }
  if (class_ids.empty()) throw InvalidArgument("model needs at least one seen class");
}

namespace {

EncoderParams zero_encoder(const EncoderSpec& s) {
  return {Linear(s.input_dim, s.hidden_dim), Linear(s.hidden_dim, s.latent_dim), Linear(s.hidden_dim, 1)};
}

DecoderParams zero_decoder(const DecoderSpec& s) {
  return {Linear(s.latent_dim, s.hidden_dim), Linear(s.hidden_dim, s.output_dim)};
}

template <typename View, typename Params>
std::vector<View> collect(Params& p) {
  std::vector<View> out;
  auto add = [&out](const std::string& prefix, auto& linear) {
    out.push_back({prefix + ".weight", linear.weight.data(), linear.weight.rows(), linear.weight.cols()});
    out.push_back({prefix + ".bias", linear.bias.data(), linear.bias.size(), 1});
  };
  add("theta_f.trunk", p.theta_f.trunk);
  add("theta_f.mean_head", p.theta_f.mean_head);
  add("theta_f.kappa_head", p.theta_f.kappa_head);
  add("theta_a.trunk", p.theta_a.trunk);
  add("theta_a.mean_head", p.theta_a.mean_head);
  add("theta_a.kappa_head", p.theta_a.kappa_head);
  add("phi_f.hidden", p.phi_f.hidden);
  add("phi_f.output", p.phi_f.output);
  add("phi_a.hidden", p.phi_a.hidden);
  add("phi_a.output", p.phi_a.output);
  add("phi_cls.head", p.phi_cls.head);
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelSpec& spec) {
  ModelParams p;
  p.theta_f = zero_encoder(spec.feature_encoder);
  p.theta_a = zero_encoder(spec.attribute_encoder);
  p.phi_f = zero_decoder(spec.feature_decoder);
  p.phi_a = zero_decoder(spec.attribute_decoder);
  p.phi_cls.head = Linear(spec.latent_dim(), spec.num_classes());
  return p;
}

std::vector<ModelParams::TensorView> ModelParams::tensors() { return collect<TensorView>(*this); }
std::vector<ModelParams::ConstTensorView> ModelParams::tensors() const { return collect<ConstTensorView>(*this); }

Index ModelParams::parameter_count() const {
  Index total = 0;
  for (const auto& t : tensors()) total += t.size();
  return total;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors()) {
    for (Index k = 0; k < t.size(); ++k) {
      if (!std::isfinite(t.data[k])) return false;
    }
  }
  return true;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model model{spec, ModelParams::zeros(spec)};
  auto views = model.params.tensors();
  // Weights and the bias that follows share fan_in = weight.cols.
  Index fan_in = 1;
  for (std::size_t k = 0; k < views.size(); ++k) {
    auto& view = views[k];
    if (view.name.ends_with(".weight")) fan_in = view.cols;
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    Rng rng(seq);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < view.size(); ++i) view.data[i] = dist(rng);
  }
  return model;
}

}  // namespace gzood::nn
