#include "umx/phantom.hpp"

#include "umx/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace umx::phantom {

namespace {

constexpr int kCoverageSamples = 8;  // per axis, per cell

bool inside_ellipse(double x, double y, double a, double b) { return (x / a) * (x / a) + (y / b) * (y / b) <= 1.0; }

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 1e-3) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    const double w = std::exp(-0.5 * d * d / (sigma * sigma));
    k[static_cast<std::size_t>(d + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// Separable convolution with replicated edges.
std::vector<double> blur(const std::vector<double>& in, int nx, int ny, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(in.size()), out(in.size());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int ii = std::clamp(i + d, 0, nx - 1);
        acc += kernel[static_cast<std::size_t>(d + radius)] * in[static_cast<std::size_t>(j * nx + ii)];
      }
      tmp[static_cast<std::size_t>(j * nx + i)] = acc;
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int jj = std::clamp(j + d, 0, ny - 1);
        acc += kernel[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(jj * nx + i)];
      }
      out[static_cast<std::size_t>(j * nx + i)] = acc;
    }
  return out;
}

}  // namespace

std::pair<double, double> PhantomSpec::cell_offset(int i, int j) const {
  return {(i - 0.5 * (nx - 1)) * cell_size_m, (j - 0.5 * (ny - 1)) * cell_size_m};
}

void PhantomSpec::validate() const {
  if (nx <= 0 || ny <= 0) throw std::invalid_argument("PhantomSpec: grid dimensions must be positive");
  if (!(cell_size_m > 0.0)) throw std::invalid_argument("PhantomSpec: cell size must be positive");
  if (!(semi_axis_x_m > 0.0 && semi_axis_y_m > 0.0))
    throw std::invalid_argument("PhantomSpec: outline semi-axes must be positive");
  if (semi_axis_x_m > 0.5 * nx * cell_size_m + 1e-12 || semi_axis_y_m > 0.5 * ny * cell_size_m + 1e-12)
    throw std::invalid_argument("PhantomSpec: outline does not fit in the imaging grid");
  if (!(texture.correlation_length_m >= 0.0)) throw std::invalid_argument("PhantomSpec: negative correlation length");
  if (!(texture.mean_hwc >= 0.0 && texture.mean_hwc <= 1.0))
    throw std::invalid_argument("PhantomSpec: mean HWC fraction must lie in [0, 1]");
  if (!(texture.std_hwc >= 0.0)) throw std::invalid_argument("PhantomSpec: negative texture spread");
  if (!(lesion.proportion >= 0.0 && lesion.proportion <= 1.0))
    throw std::invalid_argument("PhantomSpec: lesion proportion must lie in [0, 1]");
  if (!(lesion.radius_m >= cell_size_m)) throw std::invalid_argument("PhantomSpec: lesion radius below one cell");
  for (int k = 0; k < 360; ++k) {
    const double th = 2.0 * std::numbers::pi * k / 360.0;
    const double x = lesion.center_x_m + lesion.radius_m * std::cos(th);
    const double y = lesion.center_y_m + lesion.radius_m * std::sin(th);
    if (!inside_ellipse(x, y, semi_axis_x_m, semi_axis_y_m))
      throw std::invalid_argument("PhantomSpec: lesion extends outside the breast outline");
  }
}

PhantomPair generate(const PhantomSpec& spec) {
  spec.validate();
  PhantomPair pair;
  pair.nx = spec.nx;
  pair.ny = spec.ny;
  pair.breast_mask.assign(static_cast<std::size_t>(spec.nx * spec.ny), 0);
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) {
      const auto [x, y] = spec.cell_offset(i, j);
      if (inside_ellipse(x, y, spec.semi_axis_x_m, spec.semi_axis_y_m)) {
        pair.breast_mask[static_cast<std::size_t>(j * spec.nx + i)] = 1;
        pair.pixel_cells.emplace_back(i, j);
      }
    }
  const std::size_t n = pair.pixel_cells.size();
  if (n == 0) throw std::invalid_argument("PhantomSpec: outline contains no cells");

  // Correlated texture: white noise, Gaussian smoothing, standardized on the
  // breast, then mapped to an HWC fraction.
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> noise(static_cast<std::size_t>(spec.nx * spec.ny));
  for (double& v : noise) v = normal(rng);
  const auto smooth = blur(noise, spec.nx, spec.ny, gaussian_kernel(spec.texture.correlation_length_m / spec.cell_size_m));
  double mean = 0.0;
  for (const auto& [i, j] : pair.pixel_cells) mean += smooth[static_cast<std::size_t>(j * spec.nx + i)];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& [i, j] : pair.pixel_cells) {
    const double d = smooth[static_cast<std::size_t>(j * spec.nx + i)] - mean;
    var += d * d;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));

  pair.healthy = model::MixtureField(n, model::kMaterialCount);
  for (std::size_t p = 0; p < n; ++p) {
    const auto [i, j] = pair.pixel_cells[p];
    const double g = sd > 0.0 ? (smooth[static_cast<std::size_t>(j * spec.nx + i)] - mean) / sd : 0.0;
    const double hwc = std::clamp(spec.texture.mean_hwc + spec.texture.std_hwc * g, 0.0, 1.0);
    pair.healthy(p, 0) = hwc;
    pair.healthy(p, 1) = 1.0 - hwc;
    pair.healthy(p, 2) = 0.0;
  }

  // Lesion: area-weighted disk coverage per cell.
  pair.unhealthy = pair.healthy;
  pair.lesion_mask.assign(n, 0);
  pair.lesion_coverage.assign(n, 0.0);
  const double h = spec.cell_size_m;
  const double r2 = spec.lesion.radius_m * spec.lesion.radius_m;
  for (std::size_t p = 0; p < n; ++p) {
    const auto [i, j] = pair.pixel_cells[p];
    const auto [cx, cy] = spec.cell_offset(i, j);
    int inside = 0;
    for (int a = 0; a < kCoverageSamples; ++a)
      for (int b = 0; b < kCoverageSamples; ++b) {
        const double x = cx + ((a + 0.5) / kCoverageSamples - 0.5) * h - spec.lesion.center_x_m;
        const double y = cy + ((b + 0.5) / kCoverageSamples - 0.5) * h - spec.lesion.center_y_m;
        if (x * x + y * y <= r2) ++inside;
      }
    const double coverage = static_cast<double>(inside) / (kCoverageSamples * kCoverageSamples);
    pair.lesion_coverage[p] = coverage;
    const double q = coverage * spec.lesion.proportion;
    if (q <= 0.0) continue;
    const double healthy_sum = pair.healthy(p, 0) + pair.healthy(p, 1);
    pair.unhealthy(p, 0) = (1.0 - q) * pair.healthy(p, 0) / healthy_sum;
    pair.unhealthy(p, 1) = (1.0 - q) * pair.healthy(p, 1) / healthy_sum;
    pair.unhealthy(p, 2) = q;
    pair.lesion_mask[p] = 1;
  }
  return pair;
}

RealVector prior_from_healthy(const PhantomPair& pair) { return pair.healthy.stacked(); }

std::string describe(const PhantomSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "nx = " << spec.nx << "\n"
     << "ny = " << spec.ny << "\n"
     << "cell_size_m = " << spec.cell_size_m << "\n"
     << "semi_axis_x_m = " << spec.semi_axis_x_m << "\n"
     << "semi_axis_y_m = " << spec.semi_axis_y_m << "\n"
     << "texture_correlation_m = " << spec.texture.correlation_length_m << "\n"
     << "texture_mean_hwc = " << spec.texture.mean_hwc << "\n"
     << "texture_std_hwc = " << spec.texture.std_hwc << "\n"
     << "lesion_center_x_m = " << spec.lesion.center_x_m << "\n"
     << "lesion_center_y_m = " << spec.lesion.center_y_m << "\n"
     << "lesion_radius_m = " << spec.lesion.radius_m << "\n"
     << "lesion_proportion = " << spec.lesion.proportion << "\n"
     << "seed = " << spec.seed << "\n";
  return os.str();
}

namespace {

io::Array mixture_array(const model::MixtureField& z) {
  return io::Array::real_array({z.n_pixels(), z.n_materials()}, z.data());
}

model::MixtureField mixture_from(const io::Array& a) {
  if (a.dims.size() != 2) throw std::runtime_error("phantom: mixture array must be rank 2");
  model::MixtureField z(a.dims[0], a.dims[1]);
  const auto& vals = a.real_values();
  for (std::size_t p = 0; p < a.dims[0]; ++p)
    for (std::size_t r = 0; r < a.dims[1]; ++r) z(p, r) = vals[p * a.dims[1] + r];
  return z;
}

}  // namespace

void save(const PhantomPair& pair, const PhantomSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_umxa(dir / "healthy.umxa", mixture_array(pair.healthy));
  io::write_umxa(dir / "unhealthy.umxa", mixture_array(pair.unhealthy));
  const RealVector v = prior_from_healthy(pair);
  io::write_umxa(dir / "prior.umxa", io::Array::real_array({static_cast<std::size_t>(v.size())},
                                                     std::vector<double>(v.data(), v.data() + v.size())));
  io::write_umxa(dir / "breast_mask.umxa",
                 io::Array::byte_array({static_cast<std::size_t>(pair.ny), static_cast<std::size_t>(pair.nx)}, pair.breast_mask));
  io::write_umxa(dir / "lesion_mask.umxa", io::Array::byte_array({pair.n_pixels()}, pair.lesion_mask));
  io::write_umxa(dir / "lesion_coverage.umxa", io::Array::real_array({pair.n_pixels()}, pair.lesion_coverage));
  std::ofstream(dir / "spec.txt") << describe(spec);
  for (std::size_t r = 0; r < model::kMaterialCount; ++r)
    write_heatmap(dir / ("truth_" + std::string(model::material_name(r)) + ".pgm"), pair, pair.unhealthy, r);
}

PhantomPair load(const std::filesystem::path& dir) {
  PhantomPair pair;
  const io::Array mask = io::read_umxa(dir / "breast_mask.umxa");
  if (mask.dims.size() != 2) throw std::runtime_error("phantom: breast mask must be rank 2");
  pair.ny = static_cast<int>(mask.dims[0]);
  pair.nx = static_cast<int>(mask.dims[1]);
  pair.breast_mask = mask.byte_values();
  for (int j = 0; j < pair.ny; ++j)
    for (int i = 0; i < pair.nx; ++i)
      if (pair.breast_mask[static_cast<std::size_t>(j * pair.nx + i)]) pair.pixel_cells.emplace_back(i, j);
  pair.healthy = mixture_from(io::read_umxa(dir / "healthy.umxa"));
  pair.unhealthy = mixture_from(io::read_umxa(dir / "unhealthy.umxa"));
  pair.lesion_mask = io::read_umxa(dir / "lesion_mask.umxa").byte_values();
  pair.lesion_coverage = io::read_umxa(dir / "lesion_coverage.umxa").real_values();
  if (pair.healthy.n_pixels() != pair.n_pixels() || pair.unhealthy.n_pixels() != pair.n_pixels() ||
      pair.lesion_mask.size() != pair.n_pixels())
    throw std::runtime_error("phantom: stored arrays disagree on the pixel count");
  return pair;
}

void write_heatmap(const std::filesystem::path& path, const PhantomPair& layout, const model::MixtureField& z,
                   std::size_t material) {
  if (z.n_pixels() != layout.n_pixels()) throw std::invalid_argument("write_heatmap: pixel count mismatch");
  std::vector<std::uint8_t> img(static_cast<std::size_t>(layout.nx * layout.ny), 0);
  for (std::size_t p = 0; p < layout.n_pixels(); ++p) {
    const auto [i, j] = layout.pixel_cells[p];
    const double v = std::clamp(z(p, material), 0.0, 1.0);
    img[static_cast<std::size_t>(j * layout.nx + i)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  io::write_pgm(path, layout.nx, layout.ny, img);
}

}  // namespace umx::phantom
