#include <gzood/error.hpp>
#include <gzood/vmf.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace gzood {

namespace {

void check_dim(int m) {
  if (m < 2) throw InvalidArgument("vMF dimension must be >= 2, got " + std::to_string(m));
}

void check_kappa(double kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw InvalidArgument("vMF concentration must be finite and >= 0, got " + std::to_string(kappa));
  }
}

// log of S(v, x) = sum_k (x^2/4)^k Gamma(v+1) / (k! Gamma(v+k+1)), so that
// I_v(x) = (x/2)^v / Gamma(v+1) * S(v, x). Every term is positive; the running
// sum is rescaled whenever it grows large, so x in the tens of thousands is fine.
double log_scaled_bessel_series(double v, double x) {
  if (x == 0.0) return 0.0;
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  double log_scale = 0.0;
  constexpr double kRescale = 1e250;
  for (long k = 1; k < 10'000'000; ++k) {
    term *= q / (static_cast<double>(k) * (v + static_cast<double>(k)));
    sum += term;
    if (sum > kRescale) {
      sum /= kRescale;
      term /= kRescale;
      log_scale += std::log(kRescale);
    }
    // Terms decrease monotonically once k(v+k) > q.
    if (static_cast<double>(k) * (v + static_cast<double>(k)) > q &&
        term < sum * std::numeric_limits<double>::epsilon() * 0.25) {
      break;
    }
  }
  return std::log(sum) + log_scale;
}

}  // namespace

UnitVector::UnitVector(Vector values) : values_(std::move(values)) {
  if (values_.size() < 2) throw InvalidArgument("unit vector needs dimension >= 2");
  const double norm = values_.norm();
  if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
    throw InvalidArgument("vector is not unit norm (norm = " + std::to_string(norm) + ")");
  }
}

UnitVector UnitVector::normalized(const Vector& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidArgument("cannot normalize a zero or non-finite vector");
  return UnitVector(v / norm);
}

VMFParams::VMFParams(UnitVector mu_in, double kappa_in) : mu(std::move(mu_in)), kappa(kappa_in) {
  check_kappa(kappa);
}

LatentBatch::LatentBatch(Matrix samples) : samples_(std::move(samples)) {
  if (samples_.cols() < 2) throw InvalidArgument("latent batch needs dimension >= 2");
  for (Index i = 0; i < samples_.rows(); ++i) {
    const double norm = samples_.row(i).norm();
    if (!(std::abs(norm - 1.0) <= UnitVector::kNormTolerance)) {
      throw InvalidArgument("latent batch row " + std::to_string(i) + " is not unit norm");
    }
  }
}

VMFParams PosteriorBatch::at(Index i) const {
  return VMFParams(UnitVector(mu.row(i).transpose()), kappa[i]);
}

namespace vmf {

double log_bessel_i(double order, double x) {
  if (!(order >= 0.0)) throw InvalidArgument("Bessel order must be >= 0");
  if (!(x >= 0.0)) throw InvalidArgument("Bessel argument must be >= 0");
  if (x == 0.0) return order == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return order * std::log(0.5 * x) - std::lgamma(order + 1.0) + log_scaled_bessel_series(order, x);
}

double log_surface_area(int m) {
  check_dim(m);
  const double half = 0.5 * m;
  return std::log(2.0) + half * std::log(std::numbers::pi) - std::lgamma(half);
}

double log_norm_const(int m, double kappa) {
  check_dim(m);
  check_kappa(kappa);
  // (v) log kappa - (m/2) log 2pi - log I_v(kappa), with the kappa^v factors
  // cancelled analytically so kappa -> 0 is continuous.
  const double v = 0.5 * m - 1.0;
  return v * std::log(2.0) - 0.5 * m * std::log(2.0 * std::numbers::pi) + std::lgamma(v + 1.0) -
         log_scaled_bessel_series(v, kappa);
}

double log_pdf(const VMFParams& params, const UnitVector& z) {
  if (z.dim() != params.mu.dim()) throw InvalidArgument("log_pdf: dimension mismatch");
  return log_norm_const(params.dim(), params.kappa) + params.kappa * params.mu.values().dot(z.values());
}

double mean_resultant_ratio(int m, double kappa) {
  check_dim(m);
  check_kappa(kappa);
  if (kappa == 0.0) return 0.0;
  // A = x / (b1 + x^2 / (b2 + x^2 / (b3 + ...))), b_k = 2(v + k), modified Lentz.
  const double v = 0.5 * m - 1.0;
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double x2 = kappa * kappa;
  double f = 2.0 * (v + 1.0);
  double c = f;
  double d = 0.0;
  for (int k = 2; k < 1'000'000; ++k) {
    const double b = 2.0 * (v + k);
    d = b + x2 * d;
    if (std::abs(d) < tiny) d = tiny;
    c = b + x2 / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return kappa / f;
}

double mean_resultant_ratio_derivative(int m, double kappa) {
  check_dim(m);
  check_kappa(kappa);
  if (kappa == 0.0) return 1.0 / m;
  const double a = mean_resultant_ratio(m, kappa);
  return 1.0 - a * a - (m - 1.0) * a / kappa;
}

double kl_to_uniform(const VMFParams& params) {
  const int m = params.dim();
  if (params.kappa == 0.0) return 0.0;
  const double kl = params.kappa * mean_resultant_ratio(m, params.kappa) + log_norm_const(m, params.kappa) +
                    log_surface_area(m);
  return std::max(kl, 0.0);
}

namespace {

struct WoodEnvelope {
  double b;
  double a;
  double d;
};

WoodEnvelope envelope(int m, double kappa) {
  const double m1 = m - 1.0;
  const double s = std::sqrt(4.0 * kappa * kappa + m1 * m1);
  const double b = m1 / (2.0 * kappa + s);
  const double a = 0.25 * (m1 + 2.0 * kappa + s);
  const double d = 4.0 * a * b / (1.0 + b) - m1 * std::log(m1);
  return {b, a, d};
}

// b(kappa) and its derivative in the cancellation-free form m1 / (2k + s).
std::pair<double, double> b_and_derivative(int m, double kappa) {
  const double m1 = m - 1.0;
  const double s = std::sqrt(4.0 * kappa * kappa + m1 * m1);
  const double denom = 2.0 * kappa + s;
  const double b = m1 / denom;
  return {b, -b * (2.0 + 4.0 * kappa / s) / denom};
}

// Householder reflection H = I - 2 d d^T / (d^T d), d = e1 - mu, maps e1 to mu.
constexpr double kHouseholderEps = 1e-24;

}  // namespace

Draw draw(const Vector& mu, double kappa, int n, Rng& rng, const SamplerOptions& options) {
  const int m = static_cast<int>(mu.size());
  check_dim(m);
  check_kappa(kappa);
  if (n < 1) throw InvalidArgument("sample count must be >= 1");

  const double m1 = m - 1.0;
  const WoodEnvelope env = envelope(m, kappa);
  std::gamma_distribution<double> gamma(0.5 * m1, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SamplerNoise noise{Vector(n), Matrix(n, m - 1)};
  for (int i = 0; i < n; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < options.max_proposals; ++attempt) {
      const double g1 = gamma(rng);
      const double g2 = gamma(rng);
      const double eps = g1 / (g1 + g2);
      const double denom = 1.0 - (1.0 - env.b) * eps;
      const double t = 2.0 * env.a * env.b / denom;
      const double u = uniform(rng);
      if (m1 * std::log(t) - t + env.d >= std::log(u)) {
        noise.beta[i] = eps;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw SamplingFailure("vMF rejection sampler exceeded " + std::to_string(options.max_proposals) +
                                " proposals at kappa = " + std::to_string(kappa),
                            kappa);
    }
    double norm = 0.0;
    while (norm == 0.0) {
      for (int j = 0; j < m - 1; ++j) noise.tangent(i, j) = normal(rng);
      norm = noise.tangent.row(i).norm();
    }
    noise.tangent.row(i) /= norm;
  }
  Matrix samples = reparameterize(mu, kappa, noise);
  return {std::move(samples), std::move(noise)};
}

LatentBatch sample(const VMFParams& params, int n, Rng& rng, const SamplerOptions& options) {
  return LatentBatch(draw(params.mu.values(), params.kappa, n, rng, options).samples);
}

Matrix reparameterize(const Vector& mu, double kappa, const SamplerNoise& noise) {
  const Index m = mu.size();
  const Index n = noise.beta.size();
  const double b = b_and_derivative(static_cast<int>(m), kappa).first;

  Matrix local(n, m);
  for (Index i = 0; i < n; ++i) {
    const double eps = noise.beta[i];
    const double denom = 1.0 - (1.0 - b) * eps;
    local(i, 0) = (1.0 - (1.0 + b) * eps) / denom;
    // sqrt(1 - w^2) without cancellation near w = 1.
    const double radius = 2.0 * std::sqrt(b * eps * (1.0 - eps)) / denom;
    local.row(i).tail(m - 1) = radius * noise.tangent.row(i);
  }

  Vector d = -mu;
  d[0] += 1.0;
  const double q = d.squaredNorm();
  if (q < kHouseholderEps) return local;
  // rows: z = z' - 2 d (d^T z') / q
  const Vector proj = local * d;
  local.noalias() -= (2.0 / q) * proj * d.transpose();
  return local;
}

ParamGradient reparameterize_backward(const Vector& mu, double kappa, const SamplerNoise& noise,
                                      const Matrix& d_samples) {
  const Index m = mu.size();
  const Index n = noise.beta.size();
  const auto [b, db] = b_and_derivative(static_cast<int>(m), kappa);

  Matrix local(n, m);
  Vector dw_db(n);
  Vector dr_db(n);
  for (Index i = 0; i < n; ++i) {
    const double eps = noise.beta[i];
    const double denom = 1.0 - (1.0 - b) * eps;
    const double root = std::sqrt(eps * (1.0 - eps));
    local(i, 0) = (1.0 - (1.0 + b) * eps) / denom;
    const double radius = 2.0 * std::sqrt(b) * root / denom;
    local.row(i).tail(m - 1) = radius * noise.tangent.row(i);
    dw_db[i] = -2.0 * eps * (1.0 - eps) / (denom * denom);
    dr_db[i] = b > 0.0 ? 2.0 * root * (0.5 / std::sqrt(b) / denom - std::sqrt(b) * eps / (denom * denom)) : 0.0;
  }

  ParamGradient grad{Vector::Zero(m), 0.0};
  Vector d = -mu;
  d[0] += 1.0;
  const double q = d.squaredNorm();

  Matrix d_local;
  if (q < kHouseholderEps) {
    d_local = d_samples;
  } else {
    // H is symmetric, so dL/dz' = H dL/dz.
    const Vector gd = d_samples * d;  // c_i = g_i^T d
    const Vector sd = local * d;      // s_i = d^T z'_i
    d_local = d_samples - (2.0 / q) * gd * d.transpose();
    // dL/dd = -2 sum_i [ (s_i g_i + c_i z'_i) / q - 2 c_i s_i d / q^2 ], dmu = -dL/dd
    Vector d_d = (d_samples.transpose() * sd + local.transpose() * gd) / q;
    d_d -= (2.0 * gd.dot(sd) / (q * q)) * d;
    d_d *= -2.0;
    grad.mu = -d_d;
  }

  double d_b = 0.0;
  for (Index i = 0; i < n; ++i) {
    d_b += d_local(i, 0) * dw_db[i] + dr_db[i] * d_local.row(i).tail(m - 1).dot(noise.tangent.row(i));
  }
  grad.kappa = d_b * db;
  return grad;
}

}  // namespace vmf
}  // namespace gzood
