#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace umx {

using cplx = std::complex<double>;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

/// Layout of the stacked unknown z = (z_1; z_2; ...; z_R), material-major:
/// entry (material r, pixel n) lives at r * n_pixels + n.
struct StackShape {
  std::size_t n_pixels = 0;
  std::size_t n_materials = 0;

  std::size_t size() const { return n_pixels * n_materials; }
  std::size_t index(std::size_t material, std::size_t pixel) const {
    return material * n_pixels + pixel;
  }
  void validate() const {
    if (n_pixels == 0) throw std::invalid_argument("StackShape: n_pixels must be positive");
    if (n_materials < 2) throw std::invalid_argument("StackShape: need at least two materials");
  }
};

/// Raised when an iterative or direct numerical method cannot produce a result.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an object is used before the data it depends on exists.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace umx
