#pragma once

// Joint objective of the feature/attribute hyperspherical VAEs:
//
//   L = [rec_f + lambda_f EMD] + [rec_a + lambda_a EMD] + alpha L_cr + beta L_cls
//
// written as a quantity to minimize. Reconstruction terms are squared
// Euclidean errors per datum, averaged over the batch. EMD is the batch mean
// of per-pair Sinkhorn costs between S samples of each posterior; the first
// sample of every posterior also feeds reconstruction, cross-reconstruction
// and classification.

#include <gzood/data.hpp>
#include <gzood/networks.hpp>
#include <gzood/sinkhorn.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gzood::train {

struct TrainConfig {
  double lambda_f = 1.0;
  double lambda_a = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 100;
  int latent_dim = 128;
  int hidden_dim = 4096;
  int samples_per_posterior = 16;
  double kappa_max = 5000.0;
  ot::SinkhornConfig sinkhorn;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  /// Keys missing from `kv` keep their defaults.
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

struct LossBreakdown {
  double l_f_svae = 0.0;
  double l_a_svae = 0.0;
  double l_cr = 0.0;
  double l_cls = 0.0;
  double l_overall = 0.0;
};

/// One minibatch. `y` holds classifier indices (positions in ModelSpec::class_ids).
struct Batch {
  Matrix x;
  Matrix a;
  std::vector<int> y;

  Index size() const { return x.rows(); }
};

/// Scalar weight of every primitive term. A zero weight skips that term's
/// backward pass entirely, so no gradient flows through it.
struct TermWeights {
  double recon_f = 0.0;
  double recon_a = 0.0;
  double emd = 0.0;
  double cross = 0.0;
  double cls = 0.0;
};

struct Evaluation {
  double value = 0.0;   // weighted sum selected by TermWeights
  LossBreakdown parts;  // all components at this draw
  int emd_nonconverged = 0;
};

/// Forward pass of every term. Draws 2 * S samples per datum from `rng` in a
/// fixed order. If `grad` is non-null it must be shaped like the model and
/// receives d(value)/d(params) (accumulated).
Evaluation evaluate(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, const TermWeights& weights,
                    Rng& rng, nn::ModelParams* grad);

/// Same, with the posterior noise given. Samples are recomputed from the
/// noise under the current parameters, so the result is a deterministic,
/// differentiable function of the parameters.
Evaluation evaluate(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, const TermWeights& weights,
                    const ot::PairSamples& samples, nn::ModelParams* grad);

TermWeights overall_weights(const TrainConfig& cfg);

Evaluation loss_f_svae(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                       nn::ModelParams* grad = nullptr);
Evaluation loss_a_svae(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                       nn::ModelParams* grad = nullptr);
Evaluation loss_cross_recon(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                            nn::ModelParams* grad = nullptr);
Evaluation loss_cls(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                    nn::ModelParams* grad = nullptr);
Evaluation loss_overall(const nn::Model& model, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                        nn::ModelParams* grad = nullptr);

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
 public:
  Adam(const nn::ModelSpec& spec, double learning_rate);
  void step(nn::ModelParams& params, const nn::ModelParams& grad);
  long steps() const { return t_; }

 private:
  double lr_;
  long t_ = 0;
  nn::ModelParams m_;
  nn::ModelParams v_;
};

struct StepRecord {
  int epoch = 0;  // 1-based
  long step = 0;  // global, 1-based
  LossBreakdown loss;
  double wall_seconds = 0.0;
};

struct FitResult {
  nn::Model model;
  std::vector<LossBreakdown> epoch_losses;  // batch-size weighted means
  std::vector<StepRecord> steps;
  long emd_nonconverged = 0;
};

struct FitCallbacks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(int epoch, const LossBreakdown&, const nn::Model&)> on_epoch;
};

/// Model shape for a bundle: classifier over the sorted seen classes.
nn::ModelSpec model_spec_for(const data::DatasetBundle& bundle, const TrainConfig& cfg);

/// Trains on the bundle's train split (seen classes only). Parameters are
/// initialized from cfg.seed; shuffling and sampling use an independent
/// stream derived from the same seed, so a seed reproduces the run exactly.
FitResult fit(const data::DatasetBundle& bundle, const TrainConfig& cfg, const FitCallbacks& callbacks = {});

/// Comma-separated training log: epoch,step,l_f_svae,l_a_svae,l_cr,l_cls,l_overall,wall_clock_s
void write_log_header(std::ostream& out);
void write_log_record(std::ostream& out, const StepRecord& record);

}  // namespace gzood::train
