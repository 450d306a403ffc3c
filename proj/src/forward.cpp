#include "umx/forward.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace umx::forward {

namespace {

// Stretch factor at continuous cell coordinate u along an axis of n cells.
cplx stretch(double u, int n, int layers, double strength) {
  if (layers <= 0) return {1.0, 0.0};
  const double inner_lo = layers;
  const double inner_hi = (n - 1) - layers;
  const double depth = std::max({0.0, inner_lo - u, u - inner_hi});
  const double frac = depth / layers;
  return {1.0, -strength * frac * frac};
}

double boundary_reference_permittivity(const Grid2D& grid, std::span<const cplx> eps) {
  double sum = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < grid.nx; ++i) {
    sum += eps[grid.index(i, 0)].real() + eps[grid.index(i, grid.ny - 1)].real();
    count += 2;
  }
  for (int j = 1; j + 1 < grid.ny; ++j) {
    sum += eps[grid.index(0, j)].real() + eps[grid.index(grid.nx - 1, j)].real();
    count += 2;
  }
  return std::max(1.0, sum / static_cast<double>(count));
}

std::string describe_frequency(double f) {
  std::ostringstream os;
  os << f << " Hz";
  return os.str();
}

}  // namespace

double wavenumber(double frequency_hz) { return 2.0 * std::numbers::pi * frequency_hz / kSpeedOfLight; }

std::size_t Grid2D::cell_of(Point2 p) const {
  const int i = static_cast<int>(std::lround(p.x / cell_size));
  const int j = static_cast<int>(std::lround(p.y / cell_size));
  if (i < 0 || i >= nx || j < 0 || j >= ny) throw std::invalid_argument("Grid2D: position outside the grid");
  return index(i, j);
}

bool Grid2D::in_interior(Point2 p) const {
  const double u = std::round(p.x / cell_size);
  const double w = std::round(p.y / cell_size);
  return u >= pml.cells && u <= nx - 1 - pml.cells && w >= pml.cells && w <= ny - 1 - pml.cells;
}

std::vector<std::size_t> Grid2D::imaging_cells() const {
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < imaging_mask.size(); ++c)
    if (imaging_mask[c]) cells.push_back(c);
  return cells;
}

void Grid2D::validate() const {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size))
    throw std::invalid_argument("Grid2D: cell size must be positive");
  if (pml.cells < 0) throw std::invalid_argument("Grid2D: negative PML thickness");
  if (!(pml.reflection > 0.0 && pml.reflection < 1.0))
    throw std::invalid_argument("Grid2D: PML reflection target must lie in (0, 1)");
  if (nx <= 2 * pml.cells + 2 || ny <= 2 * pml.cells + 2)
    throw std::invalid_argument("Grid2D: grid too small for its PML");
  if (!imaging_mask.empty()) {
    if (imaging_mask.size() != cell_count()) throw std::invalid_argument("Grid2D: imaging mask size mismatch");
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (imaging_mask[index(i, j)] && !in_interior(position(i, j)))
          throw std::invalid_argument("Grid2D: imaging pixel inside the PML");
  }
}

void ArrayGeometry::validate(const Grid2D& grid) const {
  if (transmitters.empty() || receivers.empty())
    throw std::invalid_argument("ArrayGeometry: need at least one transmitter and one receiver");
  if (frequencies.empty()) throw std::invalid_argument("ArrayGeometry: no frequencies");
  for (std::size_t f = 0; f < frequencies.size(); ++f) {
    if (!(frequencies[f] > 0.0)) throw std::invalid_argument("ArrayGeometry: frequencies must be positive");
    if (f > 0 && !(frequencies[f] > frequencies[f - 1]))
      throw std::invalid_argument("ArrayGeometry: frequencies must be strictly increasing");
  }
  for (const auto* list : {&transmitters, &receivers})
    for (const Point2& p : *list)
      if (!grid.in_interior(p)) throw std::invalid_argument("ArrayGeometry: antenna outside the non-PML region");
}

const std::vector<cplx>& PermittivityMap::at(double frequency) const {
  for (std::size_t f = 0; f < frequencies.size(); ++f)
    if (std::abs(frequencies[f] - frequency) <= 1e-9 * frequency) return values.at(f);
  throw std::invalid_argument("PermittivityMap: no permittivity at " + describe_frequency(frequency));
}

HelmholtzSystem assemble_helmholtz(const Grid2D& grid, std::span<const cplx> eps, double frequency) {
  grid.validate();
  if (!(frequency > 0.0) || !std::isfinite(frequency))
    throw std::invalid_argument("assemble_helmholtz: frequency must be positive");
  if (eps.size() != grid.cell_count())
    throw std::invalid_argument("assemble_helmholtz: permittivity missing on some cells");
  for (const cplx& e : eps)
    if (!std::isfinite(e.real()) || !std::isfinite(e.imag()))
      throw std::invalid_argument("assemble_helmholtz: non-finite permittivity");

  const double h = grid.cell_size;
  const double k0 = wavenumber(frequency);
  const double k0sq = k0 * k0;
  const int layers = grid.pml.cells;
  double strength = 0.0;
  if (layers > 0) {
    const double k_ref = k0 * std::sqrt(boundary_reference_permittivity(grid, eps));
    // Round-trip amplitude exp(-2 k a L h / 3) for a quadratic profile.
    strength = 3.0 * std::log(1.0 / grid.pml.reflection) / (2.0 * k_ref * layers * h);
  }

  const int nx = grid.nx;
  const int ny = grid.ny;
  std::vector<cplx> sx(nx), sx_half(nx + 1), sy(ny), sy_half(ny + 1);
  for (int i = 0; i < nx; ++i) sx[i] = stretch(i, nx, layers, strength);
  for (int i = 0; i <= nx; ++i) sx_half[i] = stretch(i - 0.5, nx, layers, strength);  // between i-1 and i
  for (int j = 0; j < ny; ++j) sy[j] = stretch(j, ny, layers, strength);
  for (int j = 0; j <= ny; ++j) sy_half[j] = stretch(j - 0.5, ny, layers, strength);

  const double inv_h2 = 1.0 / (h * h);
  std::vector<Eigen::Triplet<cplx>> triplets;
  triplets.reserve(grid.cell_count() * 5);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const auto p = static_cast<int>(grid.index(i, j));
      const cplx west = sy[j] / sx_half[i] * inv_h2;
      const cplx east = sy[j] / sx_half[i + 1] * inv_h2;
      const cplx south = sx[i] / sy_half[j] * inv_h2;
      const cplx north = sx[i] / sy_half[j + 1] * inv_h2;
      const cplx diag = -(west + east + south + north) + k0sq * eps[static_cast<std::size_t>(p)] * sx[i] * sy[j];
      triplets.emplace_back(p, p, diag);
      if (i > 0) triplets.emplace_back(p, p - 1, west);
      if (i + 1 < nx) triplets.emplace_back(p, p + 1, east);
      if (j > 0) triplets.emplace_back(p, p - nx, south);
      if (j + 1 < ny) triplets.emplace_back(p, p + nx, north);
    }
  }

  HelmholtzSystem sys;
  const auto n = static_cast<Eigen::Index>(grid.cell_count());
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  sys.matrix.makeCompressed();
  sys.frequency = frequency;
  sys.cell_size = h;
  sys.nx = nx;
  sys.ny = ny;
  return sys;
}

Eigen::VectorXcd source_vector(const Grid2D& grid, std::span<const PointSource> sources) {
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.cell_count()));
  const double inv_h2 = 1.0 / (grid.cell_size * grid.cell_size);
  for (const PointSource& s : sources) {
    if (!grid.in_interior(s.position)) throw std::invalid_argument("source outside the non-PML region");
    b[static_cast<Eigen::Index>(grid.cell_of(s.position))] -= s.amplitude * inv_h2;
  }
  return b;
}

struct Factorization::Impl {
  Eigen::SparseLU<Eigen::SparseMatrix<cplx>, Eigen::COLAMDOrdering<int>> lu;
};

Factorization::Factorization(const HelmholtzSystem& system)
    : impl_(std::make_unique<Impl>()), frequency_(system.frequency) {
  impl_->lu.analyzePattern(system.matrix);
  impl_->lu.factorize(system.matrix);
  if (impl_->lu.info() != Eigen::Success)
    throw NumericalFailure("Helmholtz factorization failed at " + describe_frequency(system.frequency) + ": " +
                           impl_->lu.lastErrorMessage());
}

Factorization::~Factorization() = default;
Factorization::Factorization(Factorization&&) noexcept = default;
Factorization& Factorization::operator=(Factorization&&) noexcept = default;

Eigen::VectorXcd Factorization::solve(const Eigen::VectorXcd& rhs) const {
  Eigen::VectorXcd x = impl_->lu.solve(rhs);
  if (impl_->lu.info() != Eigen::Success)
    throw NumericalFailure("Helmholtz solve failed at " + describe_frequency(frequency_));
  return x;
}

std::vector<FieldSolution> solve_forward(const Factorization& factorization, const Grid2D& grid,
                                         std::span<const PointSource> sources) {
  std::vector<FieldSolution> out;
  out.reserve(sources.size());
  for (const PointSource& s : sources) {
    const Eigen::VectorXcd x = factorization.solve(source_vector(grid, std::span(&s, 1)));
    FieldSolution sol;
    sol.values.assign(x.data(), x.data() + x.size());
    sol.frequency = factorization.frequency();
    sol.source = s.position;
    out.push_back(std::move(sol));
  }
  return out;
}

std::vector<FieldSolution> solve_forward(const HelmholtzSystem& system, const Grid2D& grid,
                                         std::span<const PointSource> sources) {
  if (sources.empty()) return {};
  for (const PointSource& s : sources)
    if (!grid.in_interior(s.position)) throw std::invalid_argument("source outside the non-PML region");
  const Factorization lu(system);
  return solve_forward(lu, grid, sources);
}

double helmholtz_residual(const HelmholtzSystem& system, const Grid2D& grid, const FieldSolution& field) {
  const PointSource src{field.source, {1.0, 0.0}};
  const Eigen::VectorXcd b = source_vector(grid, std::span(&src, 1));
  const Eigen::Map<const Eigen::VectorXcd> e(field.values.data(), static_cast<Eigen::Index>(field.values.size()));
  return (system.matrix * e - b).norm() / b.norm();
}

namespace {

std::vector<PointSource> unit_sources(const std::vector<Point2>& positions) {
  std::vector<PointSource> out;
  out.reserve(positions.size());
  for (const Point2& p : positions) out.push_back({p, {1.0, 0.0}});
  return out;
}

// Runs fn(f) for every frequency index concurrently and waits for all.
template <class Fn>
void for_each_frequency(std::size_t n_freq, Fn&& fn) {
  std::vector<std::future<void>> jobs;
  jobs.reserve(n_freq);
  for (std::size_t f = 0; f < n_freq; ++f) jobs.push_back(std::async(std::launch::async, fn, f));
  for (auto& j : jobs) j.get();
}

}  // namespace

ComplexVector simulate_measurements(const Grid2D& grid, const ArrayGeometry& geometry, const PermittivityMap& eps) {
  grid.validate();
  geometry.validate(grid);
  ComplexVector y(static_cast<Eigen::Index>(geometry.measurement_count()));
  const auto sources = unit_sources(geometry.transmitters);
  std::vector<std::size_t> rx_cells;
  for (const Point2& p : geometry.receivers) rx_cells.push_back(grid.cell_of(p));

  for_each_frequency(geometry.frequencies.size(), [&](std::size_t f) {
    const double freq = geometry.frequencies[f];
    const auto system = assemble_helmholtz(grid, eps.at(freq), freq);
    const Factorization lu(system);
    const auto fields = solve_forward(lu, grid, sources);
    for (std::size_t tx = 0; tx < fields.size(); ++tx)
      for (std::size_t rx = 0; rx < rx_cells.size(); ++rx)
        y[static_cast<Eigen::Index>(geometry.measurement_index(f, tx, rx))] = fields[tx].values[rx_cells[rx]];
  });
  return y;
}

BackgroundFieldTable::BackgroundFieldTable(std::size_t n_tx, std::size_t n_rx, std::vector<double> frequencies)
    : n_tx_(n_tx), n_rx_(n_rx), frequencies_(std::move(frequencies)), fields_(frequencies_.size() * (n_tx + n_rx)) {}

const std::vector<cplx>& BackgroundFieldTable::transmitter_field(std::size_t freq, std::size_t tx) const {
  if (freq >= frequencies_.size() || tx >= n_tx_) throw std::out_of_range("BackgroundFieldTable: bad transmitter entry");
  const auto& f = fields_[slot(freq, tx)];
  if (f.empty()) throw InvalidState("BackgroundFieldTable: transmitter field not computed");
  return f;
}

const std::vector<cplx>& BackgroundFieldTable::receiver_field(std::size_t freq, std::size_t rx) const {
  if (freq >= frequencies_.size() || rx >= n_rx_) throw std::out_of_range("BackgroundFieldTable: bad receiver entry");
  const auto& f = fields_[slot(freq, n_tx_ + rx)];
  if (f.empty()) throw InvalidState("BackgroundFieldTable: receiver field not computed");
  return f;
}

void BackgroundFieldTable::set_transmitter_field(std::size_t freq, std::size_t tx, std::vector<cplx> field) {
  if (freq >= frequencies_.size() || tx >= n_tx_) throw std::out_of_range("BackgroundFieldTable: bad transmitter entry");
  fields_[slot(freq, tx)] = std::move(field);
}

void BackgroundFieldTable::set_receiver_field(std::size_t freq, std::size_t rx, std::vector<cplx> field) {
  if (freq >= frequencies_.size() || rx >= n_rx_) throw std::out_of_range("BackgroundFieldTable: bad receiver entry");
  fields_[slot(freq, n_tx_ + rx)] = std::move(field);
}

bool BackgroundFieldTable::complete() const {
  return std::none_of(fields_.begin(), fields_.end(), [](const auto& f) { return f.empty(); });
}

BackgroundFieldTable background_fields(const Grid2D& grid, const ArrayGeometry& geometry,
                                       const PermittivityMap& eps_background) {
  grid.validate();
  geometry.validate(grid);
  BackgroundFieldTable table(geometry.transmitters.size(), geometry.receivers.size(), geometry.frequencies);
  const auto tx_sources = unit_sources(geometry.transmitters);
  const auto rx_sources = unit_sources(geometry.receivers);

  for_each_frequency(geometry.frequencies.size(), [&](std::size_t f) {
    const double freq = geometry.frequencies[f];
    const auto system = assemble_helmholtz(grid, eps_background.at(freq), freq);
    const Factorization lu(system);
    auto tx_fields = solve_forward(lu, grid, tx_sources);
    auto rx_fields = solve_forward(lu, grid, rx_sources);
    // Distinct slots per frequency; no two jobs touch the same entry.
    for (std::size_t s = 0; s < tx_fields.size(); ++s) table.set_transmitter_field(f, s, std::move(tx_fields[s].values));
    for (std::size_t s = 0; s < rx_fields.size(); ++s) table.set_receiver_field(f, s, std::move(rx_fields[s].values));
  });
  return table;
}

}  // namespace umx::forward
