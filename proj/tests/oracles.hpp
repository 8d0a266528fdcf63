#pragma once

// Reference computations used by the tests. None of them shares code with the
// library: Bessel values come from a 50-digit series, EMD from enumerating
// the vertices of the transportation polytope, gradients from central
// differences.

#include <gzood/types.hpp>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <Eigen/QR>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using gzood::Index;
using gzood::Matrix;
using gzood::Vector;
using hp = boost::multiprecision::cpp_bin_float_50;

/// I_v(x) by its power series in 50-digit arithmetic.
inline hp bessel_i(double v, double x) {
  const hp half = hp(x) / 2;
  const hp q = half * half;
  hp term = boost::multiprecision::pow(half, hp(v)) / boost::multiprecision::tgamma(hp(v) + 1);
  hp sum = term;
  for (int k = 1; k < 100000; ++k) {
    term *= q / (hp(k) * (hp(v) + k));
    sum += term;
    if (term < sum * hp("1e-55")) break;
  }
  return sum;
}

/// log C_m(kappa) = (m/2-1) log kappa - (m/2) log(2 pi) - log I_{m/2-1}(kappa), in 50 digits.
inline double log_norm_const(int m, double kappa) {
  const hp v = hp(m) / 2 - 1;
  const hp two_pi = 2 * boost::math::constants::pi<hp>();
  const hp r = v * boost::multiprecision::log(hp(kappa)) - (hp(m) / 2) * boost::multiprecision::log(two_pi) -
               boost::multiprecision::log(bessel_i(static_cast<double>(v), kappa));
  return static_cast<double>(r);
}

/// I_{m/2}(kappa) / I_{m/2-1}(kappa), in 50 digits.
inline double mean_resultant_ratio(int m, double kappa) {
  return static_cast<double>(bessel_i(m / 2.0, kappa) / bessel_i(m / 2.0 - 1.0, kappa));
}

/// Closed form on S^2: log(kappa / (4 pi sinh kappa)), overflow-free.
inline double log_norm_const_s2(double kappa) {
  const double log_sinh = kappa + std::log1p(-std::exp(-2.0 * kappa)) - std::log(2.0);
  return std::log(kappa) - std::log(4.0 * M_PI) - log_sinh;
}

/// Exact EMD between uniform empirical measures on the rows of z1 and z2
/// under Euclidean cost. Enumerates every basis of n1 + n2 - 1 cells of the
/// transportation polytope; feasible basic solutions are its vertices and
/// the optimum of the linear program is attained at one of them.
inline double brute_force_emd(const Matrix& z1, const Matrix& z2) {
  const Index n1 = z1.rows(), n2 = z2.rows();
  const Index cells = n1 * n2;
  const Index basis = n1 + n2 - 1;
  Matrix cost(n1, n2);
  for (Index i = 0; i < n1; ++i)
    for (Index j = 0; j < n2; ++j) cost(i, j) = (z1.row(i) - z2.row(j)).norm();

  Matrix a = Matrix::Zero(n1 + n2, cells);
  Vector rhs(n1 + n2);
  for (Index i = 0; i < n1; ++i) {
    for (Index j = 0; j < n2; ++j) {
      a(i, i * n2 + j) = 1.0;
      a(n1 + j, i * n2 + j) = 1.0;
    }
    rhs[i] = 1.0 / static_cast<double>(n1);
  }
  for (Index j = 0; j < n2; ++j) rhs[n1 + j] = 1.0 / static_cast<double>(n2);

  double best = std::numeric_limits<double>::infinity();
  std::vector<Index> pick(static_cast<std::size_t>(basis));
  std::function<void(Index, Index)> rec = [&](Index start, Index depth) {
    if (depth == basis) {
      Matrix sub(n1 + n2, basis);
      for (Index k = 0; k < basis; ++k) sub.col(k) = a.col(pick[static_cast<std::size_t>(k)]);
      Eigen::ColPivHouseholderQR<Matrix> qr(sub);
      if (qr.rank() < basis) return;
      const Vector x = qr.solve(rhs);
      if ((sub * x - rhs).norm() > 1e-10) return;
      if (x.minCoeff() < -1e-12) return;
      double c = 0.0;
      for (Index k = 0; k < basis; ++k) {
        const Index cell = pick[static_cast<std::size_t>(k)];
        c += x[k] * cost(cell / n2, cell % n2);
      }
      best = std::min(best, c);
      return;
    }
    for (Index c = start; c <= cells - (basis - depth); ++c) {
      pick[static_cast<std::size_t>(depth)] = c;
      rec(c + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Central difference of f with respect to x[k], restoring x[k] afterwards.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
