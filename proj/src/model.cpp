#include "umx/model.hpp"

#include "umx/hash.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace umx::model {

using forward::kVacuumPermittivity;

const char* material_name(std::size_t material) {
  switch (material) {
    case 0: return "hwc";
    case 1: return "lwc";
    case 2: return "cancer";
    default: return "unknown";
  }
}

cplx DebyeParameters::permittivity(double frequency_hz) const {
  const double w = 2.0 * std::numbers::pi * frequency_hz;
  const cplx j{0.0, 1.0};
  return eps_inf + delta_eps / (1.0 + j * w * tau_s) + sigma_s / (j * w * kVacuumPermittivity);
}

void DebyeParameters::validate() const {
  if (!(eps_inf >= 1.0)) throw std::invalid_argument("Debye: eps_inf must be >= 1");
  if (!(delta_eps >= 0.0)) throw std::invalid_argument("Debye: delta_eps must be >= 0");
  if (!(tau_s > 0.0)) throw std::invalid_argument("Debye: tau must be > 0");
  if (!(sigma_s >= 0.0)) throw std::invalid_argument("Debye: sigma_s must be >= 0");
}

cplx TissueModel::permittivity(std::size_t material, double frequency_hz) const {
  if (material >= kMaterialCount) throw std::out_of_range("TissueModel: material index");
  return tissues[material].permittivity(frequency_hz);
}

void TissueModel::validate(const std::vector<double>& frequencies) const {
  for (const auto& t : tissues) t.validate();
  for (double f : frequencies) {
    if (!(f > 0.0)) throw std::invalid_argument("TissueModel: frequencies must be positive");
    const cplx cancer = permittivity(static_cast<std::size_t>(Material::kCancer), f);
    const cplx lwc = permittivity(static_cast<std::size_t>(Material::kLwc), f);
    if (!(cancer.real() > lwc.real()))
      throw std::invalid_argument("TissueModel: cancer must be denser than LWC tissue in band");
    for (std::size_t r = 0; r < kMaterialCount; ++r)
      if (permittivity(r, f).imag() > 0.0)
        throw std::logic_error("TissueModel: active medium under the exp(+jwt) convention");
  }
}

MixtureField::MixtureField(std::size_t n_pixels, std::size_t n_materials)
    : n_pixels_(n_pixels), n_materials_(n_materials), data_(n_pixels * n_materials, 0.0) {}

RealVector MixtureField::stacked() const {
  RealVector z(static_cast<Eigen::Index>(data_.size()));
  for (std::size_t n = 0; n < n_pixels_; ++n)
    for (std::size_t r = 0; r < n_materials_; ++r)
      z[static_cast<Eigen::Index>(r * n_pixels_ + n)] = (*this)(n, r);
  return z;
}

MixtureField MixtureField::from_stacked(const RealVector& z, const StackShape& shape) {
  if (static_cast<std::size_t>(z.size()) != shape.size())
    throw std::invalid_argument("MixtureField::from_stacked: length mismatch");
  MixtureField out(shape.n_pixels, shape.n_materials);
  for (std::size_t n = 0; n < shape.n_pixels; ++n)
    for (std::size_t r = 0; r < shape.n_materials; ++r) out(n, r) = z[static_cast<Eigen::Index>(shape.index(r, n))];
  return out;
}

bool MixtureField::is_feasible(double tol) const {
  for (std::size_t n = 0; n < n_pixels_; ++n) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n_materials_; ++r) {
      const double v = (*this)(n, r);
      if (!(v >= -tol && v <= 1.0 + tol)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

std::vector<cplx> mixture_permittivity(const MixtureField& z, const TissueModel& tissues, double frequency_hz) {
  if (z.n_materials() != kMaterialCount)
    throw std::invalid_argument("mixture_permittivity: expected three materials");
  if (!z.is_feasible()) throw std::invalid_argument("mixture_permittivity: proportions are not a valid mixture");
  std::array<cplx, kMaterialCount> eps_r;
  for (std::size_t r = 0; r < kMaterialCount; ++r) eps_r[r] = tissues.permittivity(r, frequency_hz);
  std::vector<cplx> out(z.n_pixels());
  for (std::size_t n = 0; n < z.n_pixels(); ++n) {
    cplx e{0.0, 0.0};
    for (std::size_t r = 0; r < kMaterialCount; ++r) e += z(n, r) * eps_r[r];
    out[n] = e;
  }
  return out;
}

forward::PermittivityMap build_permittivity(const forward::Grid2D& grid, const MixtureField& z,
                                            const TissueModel& tissues, const DebyeParameters& coupling,
                                            const std::vector<double>& frequencies) {
  const auto cells = grid.imaging_cells();
  if (cells.size() != z.n_pixels())
    throw std::invalid_argument("build_permittivity: mixture size does not match the imaging mask");
  forward::PermittivityMap map;
  map.frequencies = frequencies;
  for (double f : frequencies) {
    std::vector<cplx> eps(grid.cell_count(), coupling.permittivity(f));
    const auto mix = mixture_permittivity(z, tissues, f);
    for (std::size_t n = 0; n < cells.size(); ++n) eps[cells[n]] = mix[n];
    map.values.push_back(std::move(eps));
  }
  return map;
}

// ---------------------------------------------------------------------------

BornOperator::BornOperator(const forward::BackgroundFieldTable& background, const TissueModel& tissues,
                           const forward::Grid2D& grid)
    : frequencies_(background.frequencies()),
      n_tx_(background.n_tx()),
      n_rx_(background.n_rx()),
      cell_area_(grid.cell_size * grid.cell_size) {
  if (!background.complete()) throw InvalidState("assemble_jacobian: background field table is incomplete");
  const auto cells = grid.imaging_cells();
  n_pixels_ = cells.size();
  if (n_pixels_ == 0) throw std::invalid_argument("assemble_jacobian: empty imaging mask");
  fields_.resize(frequencies_.size());
  for (std::size_t f = 0; f < frequencies_.size(); ++f) {
    fields_[f].resize(n_tx_ + n_rx_);
    for (std::size_t s = 0; s < n_tx_ + n_rx_; ++s) {
      const auto& full = s < n_tx_ ? background.transmitter_field(f, s) : background.receiver_field(f, s - n_tx_);
      if (full.size() != grid.cell_count()) throw InvalidState("assemble_jacobian: field size does not match grid");
      auto& px = fields_[f][s];
      px.resize(n_pixels_);
      for (std::size_t n = 0; n < n_pixels_; ++n) px[n] = full[cells[n]];
    }
  }
  precompute(tissues);
}

BornOperator::BornOperator(std::vector<double> frequencies, std::size_t n_tx, std::size_t n_rx,
                           std::vector<std::vector<std::vector<cplx>>> pixel_fields, const TissueModel& tissues,
                           double cell_size)
    : frequencies_(std::move(frequencies)),
      n_tx_(n_tx),
      n_rx_(n_rx),
      cell_area_(cell_size * cell_size),
      fields_(std::move(pixel_fields)) {
  if (fields_.size() != frequencies_.size()) throw InvalidState("BornOperator: missing frequency entries");
  for (const auto& per_f : fields_) {
    if (per_f.size() != n_tx_ + n_rx_) throw InvalidState("BornOperator: missing source entries");
    for (const auto& px : per_f) {
      if (n_pixels_ == 0) n_pixels_ = px.size();
      if (px.size() != n_pixels_ || px.empty()) throw InvalidState("BornOperator: inconsistent pixel count");
    }
  }
  precompute(tissues);
}

void BornOperator::precompute(const TissueModel& tissues) {
  const auto np = static_cast<Eigen::Index>(n_pixels_);
  tx_fields_.clear();
  rx_fields_.clear();
  weights_.clear();
  for (std::size_t f = 0; f < frequencies_.size(); ++f) {
    Eigen::MatrixXcd tx(np, static_cast<Eigen::Index>(n_tx_));
    Eigen::MatrixXcd rx(np, static_cast<Eigen::Index>(n_rx_));
    for (std::size_t s = 0; s < n_tx_; ++s)
      tx.col(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::VectorXcd>(fields_[f][s].data(), np);
    for (std::size_t s = 0; s < n_rx_; ++s)
      rx.col(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::VectorXcd>(fields_[f][n_tx_ + s].data(), np);
    tx_fields_.push_back(std::move(tx));
    rx_fields_.push_back(std::move(rx));
    const double k0 = forward::wavenumber(frequencies_[f]);
    std::array<cplx, kMaterialCount> w;
    for (std::size_t r = 0; r < kMaterialCount; ++r)
      w[r] = k0 * k0 * cell_area_ * tissues.permittivity(r, frequencies_[f]);
    weights_.push_back(w);
  }
}

Eigen::Index BornOperator::rows() const {
  return static_cast<Eigen::Index>(frequencies_.size() * n_tx_ * n_rx_);
}

Eigen::Index BornOperator::cols() const { return static_cast<Eigen::Index>(kMaterialCount * n_pixels_); }

ComplexVector BornOperator::apply(const ComplexVector& x) const {
  if (x.size() != cols()) throw std::invalid_argument("BornOperator::apply: length mismatch");
  const auto np = static_cast<Eigen::Index>(n_pixels_);
  const auto block = static_cast<Eigen::Index>(n_tx_ * n_rx_);
  ComplexVector y(rows());
  for (std::size_t f = 0; f < frequencies_.size(); ++f) {
    Eigen::VectorXcd q = Eigen::VectorXcd::Zero(np);
    for (std::size_t r = 0; r < kMaterialCount; ++r)
      q += weights_[f][r] * x.segment(static_cast<Eigen::Index>(r) * np, np);
    // Y(tx, rx) = sum_n E_tx(n) q(n) E_rx(n)
    const Eigen::MatrixXcd scaled_tx = tx_fields_[f].array().colwise() * q.array();
    const Eigen::MatrixXcd yf = scaled_tx.transpose() * rx_fields_[f];  // n_tx x n_rx
    const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = yf;
    y.segment(static_cast<Eigen::Index>(f) * block, block) =
        Eigen::Map<const Eigen::VectorXcd>(row_major.data(), block);
  }
  return y;
}

ComplexVector BornOperator::adjoint(const ComplexVector& y) const {
  if (y.size() != rows()) throw std::invalid_argument("BornOperator::adjoint: length mismatch");
  const auto np = static_cast<Eigen::Index>(n_pixels_);
  const auto ntx = static_cast<Eigen::Index>(n_tx_);
  const auto nrx = static_cast<Eigen::Index>(n_rx_);
  ComplexVector x = ComplexVector::Zero(cols());
  for (std::size_t f = 0; f < frequencies_.size(); ++f) {
    const Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> yf(
        y.data() + static_cast<Eigen::Index>(f) * ntx * nrx, ntx, nrx);
    // t(n) = sum_{tx,rx} conj(E_tx(n) E_rx(n)) Y(tx, rx)
    const Eigen::MatrixXcd p = tx_fields_[f].conjugate() * yf;  // n_pixels x n_rx
    const Eigen::VectorXcd t = (p.array() * rx_fields_[f].conjugate().array()).rowwise().sum();
    for (std::size_t r = 0; r < kMaterialCount; ++r)
      x.segment(static_cast<Eigen::Index>(r) * np, np) += std::conj(weights_[f][r]) * t;
  }
  return x;
}

Eigen::MatrixXcd BornOperator::to_dense() const {
  const auto np = static_cast<Eigen::Index>(n_pixels_);
  Eigen::MatrixXcd a(rows(), cols());
  Eigen::Index row = 0;
  for (std::size_t f = 0; f < frequencies_.size(); ++f) {
    for (std::size_t tx = 0; tx < n_tx_; ++tx) {
      for (std::size_t rx = 0; rx < n_rx_; ++rx, ++row) {
        const Eigen::VectorXcd prod = tx_fields_[f].col(static_cast<Eigen::Index>(tx)).cwiseProduct(
            rx_fields_[f].col(static_cast<Eigen::Index>(rx)));
        for (std::size_t r = 0; r < kMaterialCount; ++r)
          a.row(row).segment(static_cast<Eigen::Index>(r) * np, np) = (weights_[f][r] * prod).transpose();
      }
    }
  }
  return a;
}

std::shared_ptr<const SensingOperator> assemble_jacobian(const forward::BackgroundFieldTable& background,
                                                         const TissueModel& tissues, const forward::Grid2D& grid,
                                                         OperatorStorage storage) {
  auto born = std::make_shared<BornOperator>(background, tissues, grid);
  if (storage == OperatorStorage::kMatrixFree) return born;
  return std::make_shared<DenseOperator>(born->to_dense());
}

ComplexVector adjusted_measurements(const ComplexVector& y, const ComplexVector& y_prior, const SensingOperator& op,
                                    const RealVector& v) {
  if (y.size() != y_prior.size() || y.size() != op.rows())
    throw std::invalid_argument("adjusted_measurements: measurement length mismatch");
  if (v.size() != op.cols()) throw std::invalid_argument("adjusted_measurements: prior length mismatch");
  return y - y_prior + op.apply_real(v);
}

double born_error(const ComplexVector& y, const ComplexVector& y_prior, const SensingOperator& op, const RealVector& v,
                  const RealVector& z_true) {
  if (z_true.size() != v.size()) throw std::invalid_argument("born_error: z_true length mismatch");
  const ComplexVector y_hat = adjusted_measurements(y, y_prior, op, v);
  const double denom = y_hat.norm();
  if (denom == 0.0) throw std::domain_error("born_error: adjusted measurements are zero; ratio undefined");
  const RealVector dz = z_true - v;
  return (y - y_prior - op.apply_real(dz)).norm() / denom;
}

void LinearizedProblem::validate() const {
  shape.validate();
  if (!op) throw std::invalid_argument("LinearizedProblem: missing operator");
  if (op->rows() != y_hat.size() || static_cast<std::size_t>(op->cols()) != shape.size() ||
      static_cast<std::size_t>(prior.size()) != shape.size())
    throw std::invalid_argument("LinearizedProblem: inconsistent dimensions");
  if (!(delta >= 0.0)) throw std::invalid_argument("LinearizedProblem: delta must be nonnegative");
}

std::uint64_t geometry_hash(const forward::Grid2D& grid, const forward::ArrayGeometry& geometry) {
  Fnv1a h;
  h.value(grid.nx);
  h.value(grid.ny);
  h.value(grid.cell_size);
  h.value(grid.pml.cells);
  h.value(grid.pml.reflection);
  h.bytes(grid.imaging_mask.data(), grid.imaging_mask.size());
  for (const auto* list : {&geometry.transmitters, &geometry.receivers}) {
    h.value(list->size());
    for (const auto& p : *list) {
      h.value(p.x);
      h.value(p.y);
    }
  }
  for (double f : geometry.frequencies) h.value(f);
  return h.digest();
}

}  // namespace umx::model
