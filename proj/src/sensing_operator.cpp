#include "umx/sensing_operator.hpp"

#include <cmath>

namespace umx {

ComplexVector SensingOperator::apply_real(const RealVector& z) const {
  return apply(z.cast<cplx>());
}

RealVector SensingOperator::adjoint_real(const ComplexVector& r) const {
  return adjoint(r).real();
}

Eigen::MatrixXcd SensingOperator::to_dense() const {
  Eigen::MatrixXcd out(rows(), cols());
  ComplexVector e = ComplexVector::Zero(cols());
  for (Eigen::Index j = 0; j < cols(); ++j) {
    e[j] = 1.0;
    out.col(j) = apply(e);
    e[j] = 0.0;
  }
  return out;
}

DenseOperator::DenseOperator(const Eigen::MatrixXcd& matrix)
    : re_(matrix.real()), im_(matrix.imag()) {}

ComplexVector DenseOperator::apply(const ComplexVector& x) const {
  const Eigen::VectorXd xr = x.real();
  const Eigen::VectorXd xi = x.imag();
  ComplexVector out(rows());
  out.real() = re_ * xr - im_ * xi;
  out.imag() = re_ * xi + im_ * xr;
  return out;
}

ComplexVector DenseOperator::adjoint(const ComplexVector& y) const {
  // (Re - i Im)^T (yr + i yi)
  const Eigen::VectorXd yr = y.real();
  const Eigen::VectorXd yi = y.imag();
  ComplexVector out(cols());
  out.real() = re_.transpose() * yr + im_.transpose() * yi;
  out.imag() = re_.transpose() * yi - im_.transpose() * yr;
  return out;
}

ComplexVector DenseOperator::apply_real(const RealVector& z) const {
  ComplexVector out(rows());
  out.real() = re_ * z;
  out.imag() = im_ * z;
  return out;
}

RealVector DenseOperator::adjoint_real(const ComplexVector& r) const {
  return re_.transpose() * r.real() + im_.transpose() * r.imag();
}

Eigen::MatrixXcd DenseOperator::to_dense() const {
  Eigen::MatrixXcd out(rows(), cols());
  out.real() = re_;
  out.imag() = im_;
  return out;
}

double real_operator_norm(const SensingOperator& op, int max_iterations, double rel_tol) {
  if (op.cols() == 0) return 0.0;
  RealVector x = RealVector::Ones(op.cols()) / std::sqrt(static_cast<double>(op.cols()));
  double lambda = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    RealVector y = op.adjoint_real(op.apply_real(x));
    const double next = x.dot(y);
    const double ynorm = y.norm();
    if (ynorm == 0.0) return 0.0;
    x = y / ynorm;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace umx
