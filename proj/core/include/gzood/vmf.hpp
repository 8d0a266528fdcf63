#pragma once

// von Mises-Fisher distribution on the unit hypersphere S^{m-1}.
//
// All quantities are evaluated in double precision. Bessel functions are
// handled in log space so concentrations in the thousands stay finite.

#include <gzood/types.hpp>

namespace gzood {

/// A point on the unit hypersphere (dimension >= 2, norm 1 within 1e-6).
class UnitVector {
 public:
  static constexpr double kNormTolerance = 1e-6;

  /// Validates that `values` already has unit norm.
  explicit UnitVector(Vector values);

  /// Rescales a nonzero vector onto the sphere.
  static UnitVector normalized(const Vector& v);

  const Vector& values() const { return values_; }
  Index dim() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

 private:
  Vector values_;
};

struct VMFParams {
  VMFParams(UnitVector mu, double kappa);

  UnitVector mu;
  double kappa;

  int dim() const { return static_cast<int>(mu.dim()); }
};

/// n x m matrix whose rows are unit vectors.
class LatentBatch {
 public:
  explicit LatentBatch(Matrix samples);

  const Matrix& matrix() const { return samples_; }
  Index size() const { return samples_.rows(); }
  Index dim() const { return samples_.cols(); }
  UnitVector row(Index i) const { return UnitVector(samples_.row(i).transpose()); }

 private:
  Matrix samples_;
};

/// A batch of posteriors as produced by an encoder: row i of `mu` with `kappa[i]`.
struct PosteriorBatch {
  Matrix mu;     // n x m, unit rows
  Vector kappa;  // n, strictly positive

  Index size() const { return mu.rows(); }
  Index dim() const { return mu.cols(); }
  VMFParams at(Index i) const;
};

namespace vmf {

/// log I_order(x) for order >= 0 and x >= 0 (returns -inf at x = 0 unless order = 0).
double log_bessel_i(double order, double x);

/// log of the surface area of S^{m-1}: log(2 pi^{m/2} / Gamma(m/2)).
double log_surface_area(int m);

/// log C_m(kappa). kappa = 0 gives the uniform density -log_surface_area(m).
double log_norm_const(int m, double kappa);

double log_pdf(const VMFParams& params, const UnitVector& z);

/// A_m(kappa) = I_{m/2}(kappa) / I_{m/2-1}(kappa), the expected value of mu^T z.
double mean_resultant_ratio(int m, double kappa);

/// dA_m/dkappa.
double mean_resultant_ratio_derivative(int m, double kappa);

/// KL(vMF(mu, kappa) || uniform on the sphere).
double kl_to_uniform(const VMFParams& params);

struct SamplerOptions {
  int max_proposals = 1000;  // per returned sample
};

/// The random inputs consumed by an accepted draw. Together with (mu, kappa)
/// they determine the sample, which makes the sample differentiable in both.
struct SamplerNoise {
  Vector beta;     // accepted Beta((m-1)/2, (m-1)/2) draw per sample
  Matrix tangent;  // n x (m-1), uniform directions on S^{m-2}
};

struct Draw {
  Matrix samples;  // n x m
  SamplerNoise noise;
};

/// Wood's rejection sampler for the component along mu, a uniform tangent
/// direction, and a Householder reflection taking e1 to mu.
Draw draw(const Vector& mu, double kappa, int n, Rng& rng, const SamplerOptions& options = {});

LatentBatch sample(const VMFParams& params, int n, Rng& rng, const SamplerOptions& options = {});

/// Deterministic map from noise to samples. `draw` returns exactly this.
Matrix reparameterize(const Vector& mu, double kappa, const SamplerNoise& noise);

struct ParamGradient {
  Vector mu;
  double kappa = 0.0;
};

/// Pathwise gradient of a scalar loss with upstream gradient `d_samples`
/// (n x m) through `reparameterize`, holding the noise fixed.
ParamGradient reparameterize_backward(const Vector& mu, double kappa, const SamplerNoise& noise,
                                      const Matrix& d_samples);

}  // namespace vmf
}  // namespace gzood
