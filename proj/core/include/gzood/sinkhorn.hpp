#pragma once

// Entropic optimal transport between two uniformly weighted point clouds with
// Euclidean (not squared) ground cost.

#include <gzood/types.hpp>
#include <gzood/vmf.hpp>

#include <vector>

namespace gzood::ot {

struct SinkhornConfig {
  double epsilon = 0.05;
  int max_iters = 200;
  double convergence_tol = 1e-6;  // max row-marginal violation

  void validate() const;
};

struct EmdResult {
  double value = 0.0;  // <P, C>, entropy term excluded
  bool converged = true;
  int iterations = 0;
  double marginal_violation = 0.0;
};

/// Entry (i, j) is |z1_i - z2_j|.
Matrix pairwise_cost(const Matrix& z1, const Matrix& z2);
Matrix pairwise_cost(const LatentBatch& z1, const LatentBatch& z2);

/// Log-domain Sinkhorn. The plan is solved on C and on C^T and the two costs
/// are averaged, which makes the result exactly symmetric in its arguments.
/// Non-convergence is reported through `converged`, not thrown.
EmdResult emd(const Matrix& z1, const Matrix& z2, const SinkhornConfig& cfg);
EmdResult emd(const LatentBatch& z1, const LatentBatch& z2, const SinkhornConfig& cfg);

struct EmdGradient {
  EmdResult result;
  Matrix d_z1;
  Matrix d_z2;
};

/// Value and exact gradient of `emd` with respect to both point sets,
/// obtained by reverse-mode differentiation through every Sinkhorn update.
EmdGradient emd_with_gradient(const Matrix& z1, const Matrix& z2, const SinkhornConfig& cfg);

/// Per-datum sample clouds for a pair of index-aligned posterior batches.
struct PairSamples {
  std::vector<vmf::Draw> f;
  std::vector<vmf::Draw> a;
};

/// For each pair i draws S samples from f.at(i) then S from a.at(i).
PairSamples draw_pair_samples(const PosteriorBatch& f, const PosteriorBatch& a, int samples_per_posterior, Rng& rng);

struct BatchEmd {
  double value = 0.0;  // mean over pairs
  int nonconverged = 0;
  Matrix d_mu_f, d_mu_a;
  Vector d_kappa_f, d_kappa_a;
};

/// Mean EMD over the batch; gradients (of the mean) flow to both posteriors'
/// (mu, kappa) through the sampler when `with_gradient` is set.
BatchEmd batch_pair_emd(const PosteriorBatch& f, const PosteriorBatch& a, const PairSamples& samples,
                        const SinkhornConfig& cfg, bool with_gradient);

double batch_pair_emd(const PosteriorBatch& f, const PosteriorBatch& a, int samples_per_posterior,
                      const SinkhornConfig& cfg, Rng& rng);

}  // namespace gzood::ot
