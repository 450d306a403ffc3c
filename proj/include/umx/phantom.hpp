#pragma once

// Synthetic 2D breast phantoms: a correlated random HWC/LWC texture inside
// an elliptical outline, and a copy of it with a disk-shaped lesion.

#include "umx/model.hpp"
#include "umx/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace umx::phantom {

struct TextureSpec {
  double correlation_length_m = 0.006;  // std-dev of the Gaussian smoothing kernel
  double mean_hwc = 0.6;
  double std_hwc = 0.2;
};

struct LesionSpec {
  double center_x_m = 0.0;  // relative to the breast center
  double center_y_m = 0.0;
  double radius_m = 0.003;
  double proportion = 1.0;  // cancer fraction in fully covered cells
};

struct PhantomSpec {
  int nx = 24;  // imaging grid
  int ny = 24;
  double cell_size_m = 0.002;
  double semi_axis_x_m = 0.024;
  double semi_axis_y_m = 0.024;
  TextureSpec texture;
  LesionSpec lesion;
  std::uint64_t seed = 1;

  void validate() const;
  /// Position of imaging cell (i, j) relative to the breast center.
  std::pair<double, double> cell_offset(int i, int j) const;
};

struct PhantomPair {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> breast_mask;         // nx*ny, row-major j*nx+i
  std::vector<std::pair<int, int>> pixel_cells;  // (i, j) of each imaging pixel n
  model::MixtureField healthy;
  model::MixtureField unhealthy;
  std::vector<std::uint8_t> lesion_mask;  // per imaging pixel
  std::vector<double> lesion_coverage;    // covered area fraction per imaging pixel

  std::size_t n_pixels() const { return pixel_cells.size(); }
};

PhantomPair generate(const PhantomSpec& spec);

/// Stacked prior (v_1; v_2; v_3) taken from the healthy phantom.
RealVector prior_from_healthy(const PhantomPair& pair);

/// Human-readable key = value dump of a spec.
std::string describe(const PhantomSpec& spec);

/// Writes healthy.umxa, unhealthy.umxa, prior.umxa, breast_mask.umxa,
/// lesion_mask.umxa, spec.txt and truth PGM heatmaps into `dir`.
void save(const PhantomPair& pair, const PhantomSpec& spec, const std::filesystem::path& dir);
PhantomPair load(const std::filesystem::path& dir);

/// Writes a nx*ny grayscale P5 image of one material column, values clamped
/// to [0, 1] and scaled to 0..255; cells outside the breast are 0.
void write_heatmap(const std::filesystem::path& path, const PhantomPair& layout, const model::MixtureField& z,
                   std::size_t material);

}  // namespace umx::phantom
