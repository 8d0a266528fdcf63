#include <gzood/error.hpp>
#include <gzood/sinkhorn.hpp>

#include <algorithm>
#include <cmath>

namespace gzood::ot {

namespace {

constexpr double kCoincident = 1e-15;

// Row-wise log-sum-exp of M (n1 x n2) -> n1.
Vector row_lse(const Eigen::ArrayXXd& m) {
  const Eigen::ArrayXd peak = m.rowwise().maxCoeff();
  return (peak + (m.colwise() - peak).exp().rowwise().sum().log()).matrix();
}

Vector col_lse(const Eigen::ArrayXXd& m) {
  const Eigen::ArrayXd peak = m.colwise().maxCoeff().transpose();
  return (peak + (m.rowwise() - peak.transpose()).exp().colwise().sum().transpose().log()).matrix();
}

struct Solve {
  std::vector<Vector> f;  // f[t-1] = f^t, t = 1..T
  std::vector<Vector> g;  // g[t] = g^t, t = 0..T
  Matrix plan;
  EmdResult result;
};

Solve sinkhorn(const Matrix& cost, const SinkhornConfig& cfg, bool keep_history) {
  const Index n1 = cost.rows();
  const Index n2 = cost.cols();
  const double eps = cfg.epsilon;
  const double log_a = -std::log(static_cast<double>(n1));
  const double log_b = -std::log(static_cast<double>(n2));
  const Eigen::ArrayXXd scaled = -cost.array() / eps;

  Solve s;
  Vector f = Vector::Zero(n1);
  Vector g = Vector::Zero(n2);
  s.g.push_back(g);
  bool converged = false;
  int t = 0;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    Vector f_new = eps * log_a - eps * row_lse(scaled.rowwise() + (g / eps).array().transpose()).array();
    if (iter > 1) {
      // Row sums of the current plan are a_i exp((f_i - f_new_i) / eps).
      const double violation =
          (std::exp(log_a) * (((f - f_new) / eps).array().exp() - 1.0).abs()).maxCoeff();
      s.result.marginal_violation = violation;
      if (violation <= cfg.convergence_tol) {
        converged = true;
        break;
      }
    }
    f = std::move(f_new);
    g = eps * log_b - eps * col_lse(scaled.colwise() + (f / eps).array()).array();
    t = iter;
    if (keep_history) {
      s.f.push_back(f);
      s.g.push_back(g);
    }
  }
  if (!keep_history) {
    s.f.assign(1, f);
    s.g.assign(1, g);
  }

  s.plan = ((scaled.colwise() + (f / eps).array()).rowwise() + (g / eps).array().transpose()).exp().matrix();
  if (!converged) {
    const Vector rows = s.plan.rowwise().sum();
    s.result.marginal_violation = (rows.array() - std::exp(log_a)).abs().maxCoeff();
    converged = s.result.marginal_violation <= cfg.convergence_tol;
  }
  s.result.converged = converged;
  s.result.iterations = t;
  s.result.value = s.plan.cwiseProduct(cost).sum();
  return s;
}

// dV/dC for V = <P, C> of one oriented solve, unrolled through all updates.
Matrix sinkhorn_backward(const Matrix& cost, const Solve& s, const SinkhornConfig& cfg) {
  const double eps = cfg.epsilon;
  const Index n1 = cost.rows();
  const Index n2 = cost.cols();
  const double log_a = -std::log(static_cast<double>(n1));
  const double log_b = -std::log(static_cast<double>(n2));
  const Eigen::ArrayXXd scaled = -cost.array() / eps;

  const Matrix pc = s.plan.cwiseProduct(cost);
  Matrix d_cost = s.plan - pc / eps;
  Vector d_f = pc.rowwise().sum() / eps;
  Vector d_g = pc.colwise().sum().transpose() / eps;

  const int T = static_cast<int>(s.f.size());
  for (int t = T; t >= 1; --t) {
    const Vector& f_t = s.f[t - 1];
    const Vector& g_t = s.g[t];
    const Vector& g_prev = s.g[t - 1];
    // g^t_j = eps log b_j - eps LSE_i((f^t_i - C_ij)/eps)
    const Matrix pi = (((scaled.colwise() + (f_t / eps).array()).rowwise() + (g_t / eps).array().transpose()) - log_b)
                          .exp()
                          .matrix();
    d_f.noalias() -= pi * d_g;
    d_cost.noalias() += pi * d_g.asDiagonal();
    // f^t_i = eps log a_i - eps LSE_j((g^{t-1}_j - C_ij)/eps)
    const Matrix sigma =
        (((scaled.colwise() + (f_t / eps).array()).rowwise() + (g_prev / eps).array().transpose()) - log_a)
            .exp()
            .matrix();
    d_g = -(sigma.transpose() * d_f);
    d_cost.noalias() += d_f.asDiagonal() * sigma;
    d_f.setZero();
  }
  return d_cost;
}

void check_points(const Matrix& z1, const Matrix& z2) {
  if (z1.cols() != z2.cols()) throw InvalidArgument("point clouds have different dimensions");
  if (z1.rows() < 1 || z2.rows() < 1) throw InvalidArgument("point clouds must be nonempty");
}

EmdResult combine(const EmdResult& forward, const EmdResult& reverse) {
  EmdResult r;
  r.value = 0.5 * (forward.value + reverse.value);
  r.converged = forward.converged && reverse.converged;
  r.iterations = std::max(forward.iterations, reverse.iterations);
  r.marginal_violation = std::max(forward.marginal_violation, reverse.marginal_violation);
  return r;
}

}  // namespace

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("sinkhorn epsilon must be > 0");
  if (max_iters < 1) throw InvalidArgument("sinkhorn max_iters must be >= 1");
  if (!(convergence_tol > 0.0)) throw InvalidArgument("sinkhorn convergence_tol must be > 0");
}

Matrix pairwise_cost(const Matrix& z1, const Matrix& z2) {
  if (z1.cols() != z2.cols()) throw InvalidArgument("pairwise_cost: dimension mismatch");
  Matrix cost(z1.rows(), z2.rows());
  for (Index j = 0; j < z2.rows(); ++j) {
    cost.col(j) = (z1.rowwise() - z2.row(j)).rowwise().norm();
  }
  return cost;
}

Matrix pairwise_cost(const LatentBatch& z1, const LatentBatch& z2) { return pairwise_cost(z1.matrix(), z2.matrix()); }

EmdResult emd(const Matrix& z1, const Matrix& z2, const SinkhornConfig& cfg) {
  cfg.validate();
  check_points(z1, z2);
  const Matrix cost = pairwise_cost(z1, z2);
  const Matrix cost_t = cost.transpose();
  return combine(sinkhorn(cost, cfg, false).result, sinkhorn(cost_t, cfg, false).result);
}

EmdResult emd(const LatentBatch& z1, const LatentBatch& z2, const SinkhornConfig& cfg) {
  return emd(z1.matrix(), z2.matrix(), cfg);
}

EmdGradient emd_with_gradient(const Matrix& z1, const Matrix& z2, const SinkhornConfig& cfg) {
  cfg.validate();
  check_points(z1, z2);
  const Matrix cost = pairwise_cost(z1, z2);
  const Matrix cost_t = cost.transpose();
  const Solve forward = sinkhorn(cost, cfg, true);
  const Solve reverse = sinkhorn(cost_t, cfg, true);

  Matrix d_cost = 0.5 * sinkhorn_backward(cost, forward, cfg);
  d_cost += 0.5 * sinkhorn_backward(cost_t, reverse, cfg).transpose();

  // C_ij = |z1_i - z2_j|, dC/dz1_i = (z1_i - z2_j) / C_ij.
  Matrix w = Matrix::Zero(cost.rows(), cost.cols());
  for (Index i = 0; i < cost.rows(); ++i) {
    for (Index j = 0; j < cost.cols(); ++j) {
      if (cost(i, j) > kCoincident) w(i, j) = d_cost(i, j) / cost(i, j);
    }
  }
  EmdGradient out;
  out.result = combine(forward.result, reverse.result);
  out.d_z1 = w.rowwise().sum().asDiagonal() * z1 - w * z2;
  out.d_z2 = w.colwise().sum().transpose().asDiagonal() * z2 - w.transpose() * z1;
  return out;
}

PairSamples draw_pair_samples(const PosteriorBatch& f, const PosteriorBatch& a, int samples_per_posterior, Rng& rng) {
  if (f.size() != a.size() || f.dim() != a.dim()) throw InvalidArgument("posterior batches are not index-aligned");
  if (samples_per_posterior < 1) throw InvalidArgument("samples_per_posterior must be >= 1");
  PairSamples out;
  out.f.reserve(static_cast<std::size_t>(f.size()));
  out.a.reserve(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < f.size(); ++i) {
    out.f.push_back(vmf::draw(f.mu.row(i).transpose(), f.kappa[i], samples_per_posterior, rng));
    out.a.push_back(vmf::draw(a.mu.row(i).transpose(), a.kappa[i], samples_per_posterior, rng));
  }
  return out;
}

BatchEmd batch_pair_emd(const PosteriorBatch& f, const PosteriorBatch& a, const PairSamples& samples,
                        const SinkhornConfig& cfg, bool with_gradient) {
  const Index n = f.size();
  if (a.size() != n || static_cast<Index>(samples.f.size()) != n || static_cast<Index>(samples.a.size()) != n) {
    throw InvalidArgument("batch_pair_emd: batch sizes disagree");
  }
  if (n == 0) throw InvalidArgument("batch_pair_emd: empty batch");
  BatchEmd out;
  if (with_gradient) {
    out.d_mu_f = Matrix::Zero(n, f.dim());
    out.d_mu_a = Matrix::Zero(n, a.dim());
    out.d_kappa_f = Vector::Zero(n);
    out.d_kappa_a = Vector::Zero(n);
  }
  const double scale = 1.0 / static_cast<double>(n);
  // Fixed summation order keeps the reduction deterministic.
  for (Index i = 0; i < n; ++i) {
    const auto& df = samples.f[static_cast<std::size_t>(i)];
    const auto& da = samples.a[static_cast<std::size_t>(i)];
    if (!with_gradient) {
      const EmdResult r = emd(df.samples, da.samples, cfg);
      out.value += r.value;
      out.nonconverged += r.converged ? 0 : 1;
      continue;
    }
    const EmdGradient g = emd_with_gradient(df.samples, da.samples, cfg);
    out.value += g.result.value;
    out.nonconverged += g.result.converged ? 0 : 1;
    const Vector mu_f = f.mu.row(i).transpose();
    const Vector mu_a = a.mu.row(i).transpose();
    const auto pf = vmf::reparameterize_backward(mu_f, f.kappa[i], df.noise, scale * g.d_z1);
    const auto pa = vmf::reparameterize_backward(mu_a, a.kappa[i], da.noise, scale * g.d_z2);
    out.d_mu_f.row(i) = pf.mu.transpose();
    out.d_kappa_f[i] = pf.kappa;
    out.d_mu_a.row(i) = pa.mu.transpose();
    out.d_kappa_a[i] = pa.kappa;
  }
  out.value *= scale;
  return out;
}

double batch_pair_emd(const PosteriorBatch& f, const PosteriorBatch& a, int samples_per_posterior,
                      const SinkhornConfig& cfg, Rng& rng) {
  const PairSamples samples = draw_pair_samples(f, a, samples_per_posterior, rng);
  return batch_pair_emd(f, a, samples, cfg, false).value;
}

}  // namespace gzood::ot
