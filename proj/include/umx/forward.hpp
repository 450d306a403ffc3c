#pragma once

// 2D scalar (TM) frequency-domain Helmholtz simulator:
//
//   (laplacian + k0^2 eps_r(r)) E = -sum_s delta(r - r_s)
//
// discretized with the 5-point stencil on a uniform grid, with stretched-
// coordinate PML on all four sides and a Dirichlet wall behind it. Time
// convention exp(+j w t): lossy media have Im(eps) < 0 and outgoing waves
// behave like H0^(2)(k r).
//
// The PML is written in the symmetric form
//   d/dx (s_y/s_x d/dx) + d/dy (s_x/s_y d/dy) + k0^2 eps s_x s_y
// so the system matrix is complex symmetric and reciprocity holds exactly.

#include "umx/types.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace umx::forward {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;

double wavenumber(double frequency_hz);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct PmlOptions {
  int cells = 10;
  double reflection = 1e-6;  // target normal-incidence round-trip reflection
};

/// Uniform grid of nx * ny cells. Cell (i, j) sits at (i*h, j*h); storage is
/// row-major with index j * nx + i. The outer `pml.cells` rings are absorbing.
struct Grid2D {
  int nx = 0;
  int ny = 0;
  double cell_size = 0.0;
  PmlOptions pml;
  std::vector<std::uint8_t> imaging_mask;  // nx*ny, nonzero marks an imaging pixel

  std::size_t cell_count() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  Point2 position(int i, int j) const { return {i * cell_size, j * cell_size}; }
  /// Nearest cell to a position.
  std::size_t cell_of(Point2 p) const;
  bool in_interior(Point2 p) const;  // inside the non-PML region
  /// Cell indices of the imaging pixels, in storage order.
  std::vector<std::size_t> imaging_cells() const;

  void validate() const;
};

struct ArrayGeometry {
  std::vector<Point2> transmitters;
  std::vector<Point2> receivers;
  std::vector<double> frequencies;  // Hz, strictly increasing

  std::size_t measurement_count() const {
    return transmitters.size() * receivers.size() * frequencies.size();
  }
  /// Flat index, frequency-major then transmitter then receiver.
  std::size_t measurement_index(std::size_t freq, std::size_t tx, std::size_t rx) const {
    return (freq * transmitters.size() + tx) * receivers.size() + rx;
  }
  void validate(const Grid2D& grid) const;
};

/// Complex relative permittivity on every grid cell at each listed frequency.
struct PermittivityMap {
  std::vector<double> frequencies;
  std::vector<std::vector<cplx>> values;  // [frequency][cell]

  const std::vector<cplx>& at(double frequency) const;
};

struct HelmholtzSystem {
  Eigen::SparseMatrix<cplx> matrix;  // column-major, compressed
  double frequency = 0.0;
  double cell_size = 0.0;
  int nx = 0;
  int ny = 0;
};

HelmholtzSystem assemble_helmholtz(const Grid2D& grid, std::span<const cplx> eps, double frequency);

struct PointSource {
  Point2 position;
  cplx amplitude{1.0, 0.0};
};

struct FieldSolution {
  std::vector<cplx> values;  // nx*ny
  double frequency = 0.0;
  Point2 source;
};

/// Right-hand side for a set of sources: -amplitude / h^2 at each source cell.
Eigen::VectorXcd source_vector(const Grid2D& grid, std::span<const PointSource> sources);

/// Sparse LU of one Helmholtz system; immutable after construction.
class Factorization {
 public:
  explicit Factorization(const HelmholtzSystem& system);
  ~Factorization();
  Factorization(Factorization&&) noexcept;
  Factorization& operator=(Factorization&&) noexcept;

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  double frequency() const { return frequency_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double frequency_ = 0.0;
};

/// One field per source (each source solved separately), sharing a single
/// factorization.
std::vector<FieldSolution> solve_forward(const HelmholtzSystem& system, const Grid2D& grid,
                                         std::span<const PointSource> sources);
std::vector<FieldSolution> solve_forward(const Factorization& factorization, const Grid2D& grid,
                                         std::span<const PointSource> sources);

/// ||K E + b|| / ||b|| for a unit point source at `source`.
double helmholtz_residual(const HelmholtzSystem& system, const Grid2D& grid, const FieldSolution& field);

/// y[f, tx, rx] = E_tx(rx) at each frequency, flattened per ArrayGeometry.
ComplexVector simulate_measurements(const Grid2D& grid, const ArrayGeometry& geometry,
                                    const PermittivityMap& eps);

/// Fields radiated by every transmitter and every receiver, per frequency.
class BackgroundFieldTable {
 public:
  BackgroundFieldTable() = default;
  BackgroundFieldTable(std::size_t n_tx, std::size_t n_rx, std::vector<double> frequencies);

  std::size_t n_tx() const { return n_tx_; }
  std::size_t n_rx() const { return n_rx_; }
  const std::vector<double>& frequencies() const { return frequencies_; }
  std::size_t entry_count() const { return fields_.size(); }

  const std::vector<cplx>& transmitter_field(std::size_t freq, std::size_t tx) const;
  const std::vector<cplx>& receiver_field(std::size_t freq, std::size_t rx) const;
  void set_transmitter_field(std::size_t freq, std::size_t tx, std::vector<cplx> field);
  void set_receiver_field(std::size_t freq, std::size_t rx, std::vector<cplx> field);
  bool complete() const;

 private:
  std::size_t slot(std::size_t freq, std::size_t source) const { return freq * (n_tx_ + n_rx_) + source; }

  std::size_t n_tx_ = 0;
  std::size_t n_rx_ = 0;
  std::vector<double> frequencies_;
  std::vector<std::vector<cplx>> fields_;  // [freq][tx..., rx...]
};

BackgroundFieldTable background_fields(const Grid2D& grid, const ArrayGeometry& geometry,
                                       const PermittivityMap& eps_background);

}  // namespace umx::forward
