#include <gzood/error.hpp>
#include <gzood/training.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace gzood::train {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw InvalidArgument("config key '" + key + "' expects a number, got '" + text + "'");
  }
}

long long parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw InvalidArgument("config key '" + key + "' expects an integer, got '" + text + "'");
  }
}

// Squared error per row, averaged over rows.
double mean_sq_error(const Matrix& residual) { return residual.rowwise().squaredNorm().sum() / residual.rows(); }

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  for (double w : {lambda_f, lambda_a, alpha, beta}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("loss weights must be finite and >= 0");
  }
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (latent_dim < 2) throw InvalidArgument("latent_dim must be >= 2");
  if (hidden_dim < 1) throw InvalidArgument("hidden_dim must be >= 1");
  if (samples_per_posterior < 1) throw InvalidArgument("samples_per_posterior must be >= 1");
  if (!(kappa_max > 0.0)) throw InvalidArgument("kappa_max must be > 0");
  sinkhorn.validate();
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"lambda_f", format_double(lambda_f)},
      {"lambda_a", format_double(lambda_a)},
      {"alpha", format_double(alpha)},
      {"beta", format_double(beta)},
      {"learning_rate", format_double(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"latent_dim", std::to_string(latent_dim)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"samples_per_posterior", std::to_string(samples_per_posterior)},
      {"kappa_max", format_double(kappa_max)},
      {"sinkhorn_eps", format_double(sinkhorn.epsilon)},
      {"sinkhorn_max_iters", std::to_string(sinkhorn.max_iters)},
      {"sinkhorn_tol", format_double(sinkhorn.convergence_tol)},
      {"seed", std::to_string(seed)},
  };
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  auto num = [&](const char* key, double& dst) {
    if (auto it = kv.find(key); it != kv.end()) dst = parse_double(key, it->second);
  };
  auto integer = [&](const char* key, int& dst) {
    if (auto it = kv.find(key); it != kv.end()) dst = static_cast<int>(parse_int(key, it->second));
  };
  num("lambda_f", cfg.lambda_f);
  num("lambda_a", cfg.lambda_a);
  num("alpha", cfg.alpha);
  num("beta", cfg.beta);
  num("learning_rate", cfg.learning_rate);
  integer("batch_size", cfg.batch_size);
  integer("epochs", cfg.epochs);
  integer("latent_dim", cfg.latent_dim);
  integer("hidden_dim", cfg.hidden_dim);
  integer("samples_per_posterior", cfg.samples_per_posterior);
  num("kappa_max", cfg.kappa_max);
  num("sinkhorn_eps", cfg.sinkhorn.epsilon);
  integer("sinkhorn_max_iters", cfg.sinkhorn.max_iters);
  num("sinkhorn_tol", cfg.sinkhorn.convergence_tol);
  if (auto it = kv.find("seed"); it != kv.end()) cfg.seed = static_cast<std::uint64_t>(parse_int("seed", it->second));
  return cfg;
}

namespace {

void check_batch(const nn::Model& model, const Batch& batch) {
  const Index n = batch.size();
  if (n == 0) throw InvalidArgument("empty batch");
  if (batch.a.rows() != n || static_cast<Index>(batch.y.size()) != n) {
    throw InvalidArgument("batch features, attributes and labels are not index-aligned");
  }
  for (int y : batch.y) {
    if (y < 0 || y >= model.spec.num_classes()) throw InvalidArgument("batch label outside classifier range");
  }
}

}  // namespace

Evaluation evaluate(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, const TermWeights& weights,
                    Rng& rng, nn::ModelParams* grad) {
  check_batch(model, batch);
  const auto& spec = model.spec;
  const PosteriorBatch post_f = nn::encode(spec.feature_encoder, model.params.theta_f, batch.x);
  const PosteriorBatch post_a = nn::encode(spec.attribute_encoder, model.params.theta_a, batch.a);
  const ot::PairSamples drawn = ot::draw_pair_samples(post_f, post_a, cfg.samples_per_posterior, rng);
  return evaluate(model, batch, cfg, weights, drawn, grad);
}

Evaluation evaluate(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, const TermWeights& weights,
                    const ot::PairSamples& drawn, nn::ModelParams* grad) {
  const auto& spec = model.spec;
  const auto& params = model.params;
  const Index n = batch.size();
  const Index m = spec.latent_dim();
  check_batch(model, batch);
  if (static_cast<Index>(drawn.f.size()) != n || static_cast<Index>(drawn.a.size()) != n) {
    throw InvalidArgument("one draw per datum and modality required");
  }

  nn::EncoderCache cache_f, cache_a;
  const PosteriorBatch post_f = nn::encode(spec.feature_encoder, params.theta_f, batch.x, grad ? &cache_f : nullptr);
  const PosteriorBatch post_a = nn::encode(spec.attribute_encoder, params.theta_a, batch.a, grad ? &cache_a : nullptr);
  // Samples are recomputed from the noise so that they follow the current parameters exactly.
  ot::PairSamples samples = drawn;
  for (Index i = 0; i < n; ++i) {
    auto& df = samples.f[static_cast<std::size_t>(i)];
    auto& da = samples.a[static_cast<std::size_t>(i)];
    df.samples = vmf::reparameterize(post_f.mu.row(i).transpose(), post_f.kappa[i], df.noise);
    da.samples = vmf::reparameterize(post_a.mu.row(i).transpose(), post_a.kappa[i], da.noise);
  }

  Matrix z_f(n, m), z_a(n, m);
  for (Index i = 0; i < n; ++i) {
    z_f.row(i) = samples.f[static_cast<std::size_t>(i)].samples.row(0);
    z_a.row(i) = samples.a[static_cast<std::size_t>(i)].samples.row(0);
  }

  // Feature decoder sees [z_f; z_a] (reconstruction, cross), attribute
  // decoder and classifier see [z_a; z_f].
  nn::DecoderCache dec_f, dec_a;
  const Matrix in_f = stack(z_f, z_a);
  const Matrix in_a = stack(z_a, z_f);
  const Matrix res_f = nn::decode(spec.feature_decoder, params.phi_f, in_f, &dec_f) - stack(batch.x, batch.x);
  const Matrix res_a = nn::decode(spec.attribute_decoder, params.phi_a, in_a, &dec_a) - stack(batch.a, batch.a);
  const double recon_f = mean_sq_error(res_f.topRows(n));
  const double cross_f = mean_sq_error(res_f.bottomRows(n));
  const double recon_a = mean_sq_error(res_a.topRows(n));
  const double cross_a = mean_sq_error(res_a.bottomRows(n));

  const Matrix log_probs = nn::classify_latent(params.phi_cls, in_a);
  double nll = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = batch.y[static_cast<std::size_t>(i)];
    nll -= log_probs(i, y) + log_probs(n + i, y);
  }
  nll /= static_cast<double>(n);

  const bool emd_grad = grad != nullptr && weights.emd != 0.0;
  const ot::BatchEmd emd = ot::batch_pair_emd(post_f, post_a, samples, cfg.sinkhorn, emd_grad);

  Evaluation ev;
  ev.emd_nonconverged = emd.nonconverged;
  ev.parts.l_f_svae = recon_f + cfg.lambda_f * emd.value;
  ev.parts.l_a_svae = recon_a + cfg.lambda_a * emd.value;
  ev.parts.l_cr = cross_f + cross_a;
  ev.parts.l_cls = nll;
  ev.parts.l_overall = ev.parts.l_f_svae + ev.parts.l_a_svae + cfg.alpha * ev.parts.l_cr + cfg.beta * ev.parts.l_cls;
  ev.value = weights.recon_f * recon_f + weights.recon_a * recon_a + weights.emd * emd.value +
             weights.cross * ev.parts.l_cr + weights.cls * nll;
  if (!grad) return ev;

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dz_f = Matrix::Zero(n, m);
  Matrix dz_a = Matrix::Zero(n, m);

  if (weights.recon_f != 0.0 || weights.cross != 0.0) {
    Matrix d_out(2 * n, res_f.cols());
    d_out.topRows(n) = (2.0 * weights.recon_f * inv_n) * res_f.topRows(n);
    d_out.bottomRows(n) = (2.0 * weights.cross * inv_n) * res_f.bottomRows(n);
    const Matrix dz = nn::decode_backward(params.phi_f, dec_f, d_out, grad->phi_f);
    dz_f += dz.topRows(n);
    dz_a += dz.bottomRows(n);
  }
  if (weights.recon_a != 0.0 || weights.cross != 0.0) {
    Matrix d_out(2 * n, res_a.cols());
    d_out.topRows(n) = (2.0 * weights.recon_a * inv_n) * res_a.topRows(n);
    d_out.bottomRows(n) = (2.0 * weights.cross * inv_n) * res_a.bottomRows(n);
    const Matrix dz = nn::decode_backward(params.phi_a, dec_a, d_out, grad->phi_a);
    dz_a += dz.topRows(n);
    dz_f += dz.bottomRows(n);
  }
  if (weights.cls != 0.0) {
    std::vector<int> labels2(batch.y);
    labels2.insert(labels2.end(), batch.y.begin(), batch.y.end());
    const Matrix dz =
        nn::classify_nll_backward(params.phi_cls, in_a, log_probs, labels2, weights.cls * inv_n, grad->phi_cls);
    dz_a += dz.topRows(n);
    dz_f += dz.bottomRows(n);
  }

  Matrix d_mu_f = Matrix::Zero(n, m), d_mu_a = Matrix::Zero(n, m);
  Vector d_kappa_f = Vector::Zero(n), d_kappa_a = Vector::Zero(n);
  if (emd_grad) {
    d_mu_f += weights.emd * emd.d_mu_f;
    d_mu_a += weights.emd * emd.d_mu_a;
    d_kappa_f += weights.emd * emd.d_kappa_f;
    d_kappa_a += weights.emd * emd.d_kappa_a;
  }
  auto first_sample_backward = [&](const vmf::Draw& draw, const PosteriorBatch& post, Index i, const Matrix& dz,
                                   Matrix& d_mu, Vector& d_kappa) {
    if (dz.row(i).isZero(0.0)) return;
    const vmf::SamplerNoise first{draw.noise.beta.head(1), draw.noise.tangent.topRows(1)};
    const auto g = vmf::reparameterize_backward(post.mu.row(i).transpose(), post.kappa[i], first, dz.row(i));
    d_mu.row(i) += g.mu.transpose();
    d_kappa[i] += g.kappa;
  };
  for (Index i = 0; i < n; ++i) {
    first_sample_backward(samples.f[static_cast<std::size_t>(i)], post_f, i, dz_f, d_mu_f, d_kappa_f);
    first_sample_backward(samples.a[static_cast<std::size_t>(i)], post_a, i, dz_a, d_mu_a, d_kappa_a);
  }
  nn::encode_backward(spec.feature_encoder, params.theta_f, cache_f, post_f, d_mu_f, d_kappa_f, grad->theta_f);
  nn::encode_backward(spec.attribute_encoder, params.theta_a, cache_a, post_a, d_mu_a, d_kappa_a, grad->theta_a);
  return ev;
}

TermWeights overall_weights(const TrainConfig& cfg) {
  return {1.0, 1.0, cfg.lambda_f + cfg.lambda_a, cfg.alpha, cfg.beta};
}

Evaluation loss_f_svae(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                       nn::ModelParams* grad) {
  return evaluate(model, batch, cfg, {.recon_f = 1.0, .emd = cfg.lambda_f}, rng, grad);
}

Evaluation loss_a_svae(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                       nn::ModelParams* grad) {
  return evaluate(model, batch, cfg, {.recon_a = 1.0, .emd = cfg.lambda_a}, rng, grad);
}

Evaluation loss_cross_recon(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                            nn::ModelParams* grad) {
  return evaluate(model, batch, cfg, {.cross = 1.0}, rng, grad);
}

Evaluation loss_cls(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                    nn::ModelParams* grad) {
  return evaluate(model, batch, cfg, {.cls = 1.0}, rng, grad);
}

Evaluation loss_overall(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                        nn::ModelParams* grad) {
  return evaluate(model, batch, cfg, overall_weights(cfg), rng, grad);
}

Adam::Adam(const nn::ModelSpec& spec, double learning_rate)
    : lr_(learning_rate), m_(nn::ModelParams::zeros(spec)), v_(nn::ModelParams::zeros(spec)) {}

void Adam::step(nn::ModelParams& params, const nn::ModelParams& grad) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto p = params.tensors();
  const auto g = grad.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    Eigen::Map<Eigen::ArrayXd> pk(p[k].data, p[k].size());
    Eigen::Map<const Eigen::ArrayXd> gk(g[k].data, g[k].size());
    Eigen::Map<Eigen::ArrayXd> mk(m[k].data, m[k].size());
    Eigen::Map<Eigen::ArrayXd> vk(v[k].data, v[k].size());
    mk = b1 * mk + (1.0 - b1) * gk;
    vk = b2 * vk + (1.0 - b2) * gk.square();
    pk -= lr_ * (mk / c1) / ((vk / c2).sqrt() + eps);
  }
}

nn::ModelSpec model_spec_for(const data::DatasetBundle& bundle, const TrainConfig& cfg) {
  std::vector<int> seen;
  for (auto c : bundle.seen_classes) seen.push_back(static_cast<int>(c));
  std::sort(seen.begin(), seen.end());
  return nn::ModelSpec::make(bundle.feature_dim(), bundle.attribute_dim(), cfg.hidden_dim, cfg.latent_dim,
                             std::move(seen), cfg.kappa_max);
}

FitResult fit(const data::DatasetBundle& bundle, const TrainConfig& cfg, const FitCallbacks& callbacks) {
  cfg.validate();
  bundle.validate();
  if (bundle.train_idx.empty()) throw InvalidArgument("bundle has no training rows");

  FitResult result;
  result.model = nn::init_model(model_spec_for(bundle, cfg), cfg.seed);
  if (cfg.epochs == 0) return result;

  const auto& class_ids = result.model.spec.class_ids;
  const Matrix x_all = bundle.feature_rows(bundle.train_idx);
  std::vector<std::int64_t> row_labels;
  std::vector<int> y_all;
  for (auto row : bundle.train_idx) {
    const auto label = bundle.labels[static_cast<std::size_t>(row)];
    row_labels.push_back(label);
    y_all.push_back(static_cast<int>(std::lower_bound(class_ids.begin(), class_ids.end(), label) - class_ids.begin()));
  }
  const Matrix a_all = bundle.attribute_rows(row_labels);
  const Index n_train = x_all.rows();

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0x7261696eu};
  Rng rng(seq);
  Adam adam(result.model.spec, cfg.learning_rate);
  const TermWeights weights = overall_weights(cfg);
  const auto start = std::chrono::steady_clock::now();

  std::vector<Index> order(static_cast<std::size_t>(n_train));
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    for (Index begin = 0; begin < n_train; begin += cfg.batch_size) {
      const Index count = std::min<Index>(cfg.batch_size, n_train - begin);
      Batch batch{Matrix(count, x_all.cols()), Matrix(count, a_all.cols()), std::vector<int>(static_cast<std::size_t>(count))};
      for (Index k = 0; k < count; ++k) {
        const Index r = order[static_cast<std::size_t>(begin + k)];
        batch.x.row(k) = x_all.row(r);
        batch.a.row(k) = a_all.row(r);
        batch.y[static_cast<std::size_t>(k)] = y_all[static_cast<std::size_t>(r)];
      }
      ++step;
      nn::ModelParams grad = nn::ModelParams::zeros(result.model.spec);
      const Evaluation ev = evaluate(result.model, batch, cfg, weights, rng, &grad);
      const std::pair<const char*, double> parts[] = {{"l_f_svae", ev.parts.l_f_svae},
                                                      {"l_a_svae", ev.parts.l_a_svae},
                                                      {"l_cr", ev.parts.l_cr},
                                                      {"l_cls", ev.parts.l_cls},
                                                      {"l_overall", ev.parts.l_overall}};
      for (const auto& [name, value] : parts) {
        if (!std::isfinite(value)) {
          throw NumericFailure("non-finite " + std::string(name) + " at batch " + std::to_string(step), step, name);
        }
      }
      adam.step(result.model.params, grad);
      if (!result.model.params.all_finite()) {
        throw NumericFailure("non-finite parameters after batch " + std::to_string(step), step, "parameters");
      }
      result.emd_nonconverged += ev.emd_nonconverged;

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.loss = ev.parts;
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.steps.push_back(rec);
      if (callbacks.on_step) callbacks.on_step(rec);

      const double w = static_cast<double>(count);
      sum.l_f_svae += w * ev.parts.l_f_svae;
      sum.l_a_svae += w * ev.parts.l_a_svae;
      sum.l_cr += w * ev.parts.l_cr;
      sum.l_cls += w * ev.parts.l_cls;
      sum.l_overall += w * ev.parts.l_overall;
    }
    const double inv = 1.0 / static_cast<double>(n_train);
    const LossBreakdown mean{sum.l_f_svae * inv, sum.l_a_svae * inv, sum.l_cr * inv, sum.l_cls * inv,
                             sum.l_overall * inv};
    result.epoch_losses.push_back(mean);
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, mean, result.model);
  }
  return result;
}

void write_log_header(std::ostream& out) {
  out << "epoch,step,l_f_svae,l_a_svae,l_cr,l_cls,l_overall,wall_clock_s\n";
}

void write_log_record(std::ostream& out, const StepRecord& r) {
  out << r.epoch << ',' << r.step << ',' << format_double(r.loss.l_f_svae) << ',' << format_double(r.loss.l_a_svae)
      << ',' << format_double(r.loss.l_cr) << ',' << format_double(r.loss.l_cls) << ','
      << format_double(r.loss.l_overall) << ',' << r.wall_seconds << '\n';
  out.flush();
}

}  // namespace gzood::train
