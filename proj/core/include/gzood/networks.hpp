#pragma once

// Fully connected encoders/decoders for the two modalities and the linear
// softmax head on the latent sphere. Every forward has a matching backward
// that accumulates parameter gradients into a structure of the same shape.

#include <gzood/types.hpp>
#include <gzood/vmf.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gzood::nn {

/// y = x W^T + b, applied row-wise. `weight` is out x in.
struct Linear {
  Matrix weight;
  Vector bias;

  Linear() = default;
  Linear(Index in, Index out) : weight(Matrix::Zero(out, in)), bias(Vector::Zero(out)) {}

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }

  Matrix forward(const Matrix& x) const;
  /// Accumulates dW, db into `grad` and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& d_out, Linear& grad) const;
};

struct EncoderSpec {
  Index input_dim = 0;
  Index hidden_dim = 4096;
  Index latent_dim = 128;
  double kappa_max = 5000.0;

  void validate() const;
};

struct DecoderSpec {
  Index latent_dim = 128;
  Index hidden_dim = 4096;
  Index output_dim = 0;

  void validate() const;
};

struct EncoderParams {
  Linear trunk;
  Linear mean_head;
  Linear kappa_head;
};

struct DecoderParams {
  Linear hidden;
  Linear output;
};

struct ClassifierParams {
  Linear head;  // latent_dim -> number of seen classes
};

struct EncoderCache {
  Matrix input;
  Matrix hidden;     // after ReLU
  Matrix raw_mean;   // before normalization
  Vector raw_kappa;  // before softplus
};

struct DecoderCache {
  Matrix input;
  Matrix hidden;  // after ReLU
};

/// hidden = relu(trunk(x)); mu = normalize(mean_head(hidden));
/// kappa = min(softplus(kappa_head(hidden)), kappa_max).
PosteriorBatch encode(const EncoderSpec& spec, const EncoderParams& params, const Matrix& x,
                      EncoderCache* cache = nullptr);

/// Backprop from (d_mu, d_kappa) into the encoder parameters.
void encode_backward(const EncoderSpec& spec, const EncoderParams& params, const EncoderCache& cache,
                     const PosteriorBatch& out, const Matrix& d_mu, const Vector& d_kappa, EncoderParams& grad);

Matrix decode(const DecoderSpec& spec, const DecoderParams& params, const Matrix& z, DecoderCache* cache = nullptr);
Matrix decode(const DecoderSpec& spec, const DecoderParams& params, const LatentBatch& z);

/// Returns dL/dz.
Matrix decode_backward(const DecoderParams& params, const DecoderCache& cache, const Matrix& d_out,
                       DecoderParams& grad);

/// Row-wise log-softmax of the affine map. Output is n x num_classes.
Matrix classify_latent(const ClassifierParams& params, const Matrix& z);
Matrix classify_latent(const ClassifierParams& params, const LatentBatch& z);

/// Gradient of scale * sum_i -log p(labels[i] | z_i). Returns dL/dz.
Matrix classify_nll_backward(const ClassifierParams& params, const Matrix& z, const Matrix& log_probs,
                             const std::vector<int>& labels, double scale, ClassifierParams& grad);

/// Shapes of the full two-modality model.
struct ModelSpec {
  EncoderSpec feature_encoder;
  EncoderSpec attribute_encoder;
  DecoderSpec feature_decoder;
  DecoderSpec attribute_decoder;
  std::vector<int> class_ids;  // classifier output k predicts class_ids[k]

  static ModelSpec make(Index feature_dim, Index attribute_dim, Index hidden_dim, Index latent_dim,
                        std::vector<int> seen_class_ids, double kappa_max = 5000.0);
  Index latent_dim() const { return feature_encoder.latent_dim; }
  Index num_classes() const { return static_cast<Index>(class_ids.size()); }
  void validate() const;
};

/// theta_f, theta_a, phi_f, phi_a, phi_cls.
struct ModelParams {
  EncoderParams theta_f;
  EncoderParams theta_a;
  DecoderParams phi_f;
  DecoderParams phi_a;
  ClassifierParams phi_cls;

  /// Zero-valued parameters with the shapes implied by `spec`.
  static ModelParams zeros(const ModelSpec& spec);

  struct TensorView {
    std::string name;  // e.g. "theta_f.trunk.weight"
    double* data;
    Index rows;
    Index cols;
    Index size() const { return rows * cols; }
  };
  struct ConstTensorView {
    std::string name;
    const double* data;
    Index rows;
    Index cols;
    Index size() const { return rows * cols; }
  };

  /// Every tensor in a fixed order.
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;

  Index parameter_count() const;
  bool all_finite() const;
};

struct Model {
  ModelSpec spec;
  ModelParams params;
};

/// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// for weights and biases. Each tensor is drawn from its own stream seeded by
/// (seed, tensor index), so the result does not depend on anything but the seed.
Model init_model(const ModelSpec& spec, std::uint64_t seed);

}  // namespace gzood::nn
