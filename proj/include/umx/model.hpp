#pragma once

// Tissue mixture model and Born linearization of the FDFD measurement map.

#include "umx/forward.hpp"
#include "umx/sensing_operator.hpp"
#include "umx/types.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace umx::model {

enum class Material : std::size_t { kHwc = 0, kLwc = 1, kCancer = 2 };
inline constexpr std::size_t kMaterialCount = 3;
const char* material_name(std::size_t material);

/// Single-pole Debye medium with static conductivity:
///   eps(w) = eps_inf + delta_eps / (1 + j w tau) + sigma_s / (j w eps0)
struct DebyeParameters {
  double eps_inf = 1.0;
  double delta_eps = 0.0;
  double tau_s = 1e-12;
  double sigma_s = 0.0;  // S/m

  cplx permittivity(double frequency_hz) const;
  void validate() const;
};

struct TissueModel {
  // Indexed by Material.
  std::array<DebyeParameters, kMaterialCount> tissues{
      DebyeParameters{6.7, 43.0, 10.5e-12, 0.8},   // HWC
      DebyeParameters{3.1, 1.6, 14.2e-12, 0.05},   // LWC
      DebyeParameters{7.2, 48.0, 10.6e-12, 0.9}};  // cancer

  cplx permittivity(std::size_t material, double frequency_hz) const;
  /// Throws unless parameters are physical and Re eps_cancer > Re eps_LWC at
  /// every frequency given.
  void validate(const std::vector<double>& frequencies = {}) const;
};

/// N pixels by R materials, stored pixel-major.
class MixtureField {
 public:
  MixtureField() = default;
  MixtureField(std::size_t n_pixels, std::size_t n_materials);

  std::size_t n_pixels() const { return n_pixels_; }
  std::size_t n_materials() const { return n_materials_; }
  StackShape shape() const { return {n_pixels_, n_materials_}; }

  double& operator()(std::size_t pixel, std::size_t material) { return data_[pixel * n_materials_ + material]; }
  double operator()(std::size_t pixel, std::size_t material) const { return data_[pixel * n_materials_ + material]; }
  const std::vector<double>& data() const { return data_; }

  /// (z_1; z_2; ...; z_R), material-major.
  RealVector stacked() const;
  static MixtureField from_stacked(const RealVector& z, const StackShape& shape);

  /// Rows sum to 1 within tol and entries lie in [-tol, 1 + tol].
  bool is_feasible(double tol = 1e-9) const;

  bool operator==(const MixtureField&) const = default;

 private:
  std::size_t n_pixels_ = 0;
  std::size_t n_materials_ = 0;
  std::vector<double> data_;
};

/// eps = sum_r z_r eps_r(freq) at every pixel.
std::vector<cplx> mixture_permittivity(const MixtureField& z, const TissueModel& tissues, double frequency_hz);

/// Permittivity on the full simulation grid: mixture values on imaging
/// pixels, `coupling` elsewhere, at every geometry frequency.
forward::PermittivityMap build_permittivity(const forward::Grid2D& grid, const MixtureField& z,
                                            const TissueModel& tissues, const DebyeParameters& coupling,
                                            const std::vector<double>& frequencies);

/// Born sensitivity operator A = (A_1, ..., A_R). Entry for measurement
/// (f, tx, rx) and unknown (r, n):
///   k0(f)^2 * h^2 * E_tx(n) * E_rx(n) * eps_r(f)
/// where E are background fields from unit point sources. Applied matrix-free.
class BornOperator final : public SensingOperator {
 public:
  BornOperator(const forward::BackgroundFieldTable& background, const TissueModel& tissues,
               const forward::Grid2D& grid);

  /// Builds from fields already restricted to imaging pixels,
  /// indexed [freq][source][pixel] with sources ordered tx..., rx....
  BornOperator(std::vector<double> frequencies, std::size_t n_tx, std::size_t n_rx,
               std::vector<std::vector<std::vector<cplx>>> pixel_fields, const TissueModel& tissues,
               double cell_size);

  Eigen::Index rows() const override;
  Eigen::Index cols() const override;
  ComplexVector apply(const ComplexVector& x) const override;
  ComplexVector adjoint(const ComplexVector& y) const override;
  Eigen::MatrixXcd to_dense() const override;

  std::size_t n_pixels() const { return n_pixels_; }
  const std::vector<std::vector<std::vector<cplx>>>& pixel_fields() const { return fields_; }

 private:
  void precompute(const TissueModel& tissues);

  std::vector<double> frequencies_;
  std::size_t n_tx_ = 0;
  std::size_t n_rx_ = 0;
  std::size_t n_pixels_ = 0;
  double cell_area_ = 0.0;
  std::vector<std::vector<std::vector<cplx>>> fields_;  // [freq][source][pixel]
  std::vector<Eigen::MatrixXcd> tx_fields_;  // [freq] n_pixels x n_tx
  std::vector<Eigen::MatrixXcd> rx_fields_;  // [freq] n_pixels x n_rx
  std::vector<std::array<cplx, kMaterialCount>> weights_;  // [freq][r] = k0^2 h^2 eps_r
};

enum class OperatorStorage { kDense, kMatrixFree };

std::shared_ptr<const SensingOperator> assemble_jacobian(const forward::BackgroundFieldTable& background,
                                                         const TissueModel& tissues, const forward::Grid2D& grid,
                                                         OperatorStorage storage = OperatorStorage::kDense);

/// y - y_prior + A v.
ComplexVector adjusted_measurements(const ComplexVector& y, const ComplexVector& y_prior, const SensingOperator& op,
                                    const RealVector& v);

/// ||y - (y_prior + A (z_true - v))|| / ||y_hat||: the linearization error as a
/// fraction of the adjusted measurement energy.
double born_error(const ComplexVector& y, const ComplexVector& y_prior, const SensingOperator& op, const RealVector& v,
                  const RealVector& z_true);

struct Provenance {
  std::string background;  // description of the medium the fields were computed in
  std::vector<double> frequencies;
  std::uint64_t geometry_hash = 0;
};

struct LinearizedProblem {
  std::shared_ptr<const SensingOperator> op;
  ComplexVector y_hat;
  RealVector prior;
  double delta = 0.0;
  StackShape shape;
  Provenance provenance;

  void validate() const;
};

/// FNV-1a hash of grid size, cell size, PML, mask, antenna positions and
/// frequencies.
std::uint64_t geometry_hash(const forward::Grid2D& grid, const forward::ArrayGeometry& geometry);

}  // namespace umx::model
