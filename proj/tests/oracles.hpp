#pragma once

// Independent reference solutions used by the unit and acceptance tests.
// None of these call into the library's prox or solver code.

#include "umx/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using umx::ComplexVector;
using umx::RealVector;

/// Minimizer of a convex function of one variable on [lo, hi], given its
/// right derivative: bisection for the first point where it turns nonnegative.
inline double minimize_1d(const std::function<double(double)>& right_derivative, double lo, double hi) {
  for (int it = 0; it < 2000 && hi > lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (right_derivative(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return right_derivative(lo) >= 0.0 ? lo : hi;
}

/// argmin_z lambda |z| + (z - x)^2 / 2, coordinatewise.
inline RealVector soft_threshold(const RealVector& x, double lambda) {
  RealVector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double span = std::abs(xi) + lambda + 1.0;
    out[i] = minimize_1d([&](double z) { return (z >= 0.0 ? lambda : -lambda) + (z - xi); }, -span, span);
  }
  return out;
}

/// Nearest point of {||z|| <= delta} to x, searched along the scale s in
/// [0, 1] of s * x: the largest feasible s found by bisection.
inline ComplexVector project_l2_ball(const ComplexVector& x, double delta) {
  const double n = std::sqrt(x.cwiseAbs2().sum());
  if (n <= delta) return x;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid * n <= delta)
      lo = mid;
    else
      hi = mid;
  }
  return lo * x;
}

/// argmin ||z - x||^2 s.t. z >= 0 by enumerating which coordinates sit on
/// the bound (active sets); free coordinates take the unconstrained value.
inline RealVector project_nonneg(const RealVector& x) {
  const auto n = static_cast<int>(x.size());
  RealVector best = RealVector::Zero(n);
  double best_val = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    RealVector z = x;
    bool feasible = true;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i))
        z[i] = 0.0;
      else if (z[i] < 0.0)
        feasible = false;
    }
    if (!feasible) continue;
    const double val = (z - x).squaredNorm();
    if (val < best_val) {
      best_val = val;
      best = z;
    }
  }
  return best;
}

/// Equality-constrained least squares: argmin ||z - x||^2 s.t. D z = 1 with
/// D = [I_N I_N ... I_N] (material-major stacking), via the KKT system.
inline RealVector project_sum_one(const RealVector& x, std::size_t n_pixels, std::size_t n_materials) {
  const auto n = static_cast<Eigen::Index>(n_pixels);
  const auto t = static_cast<Eigen::Index>(n_pixels * n_materials);
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(t + n, t + n);
  kkt.topLeftCorner(t, t).setIdentity();
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(n_materials); ++r)
    for (Eigen::Index p = 0; p < n; ++p) {
      kkt(t + p, r * n + p) = 1.0;
      kkt(r * n + p, t + p) = 1.0;
    }
  Eigen::VectorXd rhs(t + n);
  rhs.head(t) = x;
  rhs.tail(n).setOnes();
  const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
  return sol.head(t);
}

/// Largest and smallest eigenvalue of the 2x2 Gram matrix of two unit
/// columns: 1 +- |<a, b>|.
inline double ric_pairs(const Eigen::MatrixXcd& a) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      const double c = std::abs(a.col(i).dot(a.col(j))) / (a.col(i).norm() * a.col(j).norm());
      worst = std::max(worst, c);
    }
  return worst;
}

/// delta_S from the eigenvalues of every S x S Gram matrix of the
/// column-normalized matrix: max over subsets of max |lambda - 1|.
inline double ric_gram(const Eigen::MatrixXcd& a, int s) {
  Eigen::MatrixXcd unit = a;
  for (Eigen::Index j = 0; j < a.cols(); ++j) unit.col(j) /= a.col(j).norm();
  std::vector<int> pick(static_cast<std::size_t>(s));
  for (int k = 0; k < s; ++k) pick[static_cast<std::size_t>(k)] = k;
  const auto n = static_cast<int>(a.cols());
  double worst = 0.0;
  for (;;) {
    Eigen::MatrixXcd sub(a.rows(), s);
    for (int k = 0; k < s; ++k) sub.col(k) = unit.col(pick[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(sub.adjoint() * sub).eigenvalues();
    worst = std::max({worst, std::abs(ev.minCoeff() - 1.0), std::abs(ev.maxCoeff() - 1.0)});
    int k = s - 1;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == n - s + k) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (int m = k + 1; m < s; ++m) pick[static_cast<std::size_t>(m)] = pick[static_cast<std::size_t>(m - 1)] + 1;
  }
  return worst;
}

/// Generic random helpers.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
  RealVector real_vector(Eigen::Index n, double scale = 1.0) {
    RealVector v(n);
    for (auto& e : v) e = scale * normal();
    return v;
  }
  ComplexVector complex_vector(Eigen::Index n, double scale = 1.0) {
    ComplexVector v(n);
    for (auto& e : v) e = scale * umx::cplx(normal(), normal());
    return v;
  }
  Eigen::MatrixXcd complex_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXcd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = umx::cplx(normal(), normal());
    return m;
  }
};

}  // namespace oracle
