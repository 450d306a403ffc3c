#include "umx/prox.hpp"

#include <cmath>
#include <stdexcept>

namespace umx::prox {

RealVector soft_threshold(const RealVector& x, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("soft_threshold: lambda must be nonnegative");
  RealVector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi > lambda)
      out[i] = xi - lambda;
    else if (xi < -lambda)
      out[i] = xi + lambda;
    else
      out[i] = 0.0;
  }
  return out;
}

ComplexVector project_l2_ball(const ComplexVector& x, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("project_l2_ball: delta must be nonnegative");
  const double norm = x.norm();
  if (norm <= delta) return x;
  if (delta == 0.0) return ComplexVector::Zero(x.size());
  return x * (delta / norm);
}

RealVector project_nonneg(const RealVector& x) { return x.cwiseMax(0.0); }

RealVector project_sum_one(const RealVector& x, const StackShape& shape) {
  shape.validate();
  if (static_cast<std::size_t>(x.size()) != shape.size())
    throw std::invalid_argument("project_sum_one: vector length does not match R*N");
  const auto n = static_cast<Eigen::Index>(shape.n_pixels);
  const auto r = static_cast<Eigen::Index>(shape.n_materials);
  // x + (1/R) (1 - D^T D x)
  RealVector pixel_sum = RealVector::Zero(n);
  for (Eigen::Index m = 0; m < r; ++m) pixel_sum += x.segment(m * n, n);
  const RealVector shift = (RealVector::Ones(n) - pixel_sum) / static_cast<double>(r);
  RealVector out = x;
  for (Eigen::Index m = 0; m < r; ++m) out.segment(m * n, n) += shift;
  return out;
}

}  // namespace umx::prox
