#pragma once

#include "umx/types.hpp"

#include <memory>

namespace umx {

/// Complex linear map A from the stacked mixture space (R*N columns) to the
/// measurement space (M rows). Implementations are immutable once built and
/// safe to share read-only across threads.
class SensingOperator {
 public:
  virtual ~SensingOperator() = default;

  virtual Eigen::Index rows() const = 0;
  virtual Eigen::Index cols() const = 0;

  /// out = A x for complex x.
  virtual ComplexVector apply(const ComplexVector& x) const = 0;
  /// out = A^H y.
  virtual ComplexVector adjoint(const ComplexVector& y) const = 0;

  /// A z for real z. Default routes through the complex path.
  virtual ComplexVector apply_real(const RealVector& z) const;
  /// Re(A^H r), the gradient direction for a real unknown.
  virtual RealVector adjoint_real(const ComplexVector& r) const;

  /// Dense copy of the operator (column-by-column probe unless overridden).
  virtual Eigen::MatrixXcd to_dense() const;
};

/// Dense matrix stored as separate real and imaginary parts so the real-z
/// products run as two real GEMVs.
class DenseOperator final : public SensingOperator {
 public:
  explicit DenseOperator(const Eigen::MatrixXcd& matrix);

  Eigen::Index rows() const override { return re_.rows(); }
  Eigen::Index cols() const override { return re_.cols(); }

  ComplexVector apply(const ComplexVector& x) const override;
  ComplexVector adjoint(const ComplexVector& y) const override;
  ComplexVector apply_real(const RealVector& z) const override;
  RealVector adjoint_real(const ComplexVector& r) const override;
  Eigen::MatrixXcd to_dense() const override;

 private:
  Eigen::MatrixXd re_;
  Eigen::MatrixXd im_;
};

/// c * A without copying A.
class ScaledOperator final : public SensingOperator {
 public:
  ScaledOperator(std::shared_ptr<const SensingOperator> base, double scale)
      : base_(std::move(base)), scale_(scale) {}

  Eigen::Index rows() const override { return base_->rows(); }
  Eigen::Index cols() const override { return base_->cols(); }
  ComplexVector apply(const ComplexVector& x) const override { return scale_ * base_->apply(x); }
  ComplexVector adjoint(const ComplexVector& y) const override { return scale_ * base_->adjoint(y); }
  ComplexVector apply_real(const RealVector& z) const override { return scale_ * base_->apply_real(z); }
  RealVector adjoint_real(const ComplexVector& r) const override { return scale_ * base_->adjoint_real(r); }

 private:
  std::shared_ptr<const SensingOperator> base_;
  double scale_;
};

/// Largest singular value of the real-linear map z -> A z (z real), by power
/// iteration on Re(A^H A) from a fixed start vector.
double real_operator_norm(const SensingOperator& op, int max_iterations = 200, double rel_tol = 1e-12);

}  // namespace umx
