#pragma once

// End-to-end synthetic study: phantom -> FDFD data -> Born linearization ->
// delta sweep of the unmixing solver -> lesion metrics and artifacts.
//
// Output directory layout:
//   config.toml                 canonical copy of the configuration
//   phantom/                    phantom arrays, spec sidecar, truth heatmaps
//   simulate/                   y_fdfd.umxa, y_prior.umxa
//   linearize/                  fields.umxa, y.umxa, y_hat.umxa, jacobian.umxa (dense only)
//   solve/delta_XX/             z.umxa, summary.json, <material>.pgm
//   metrics.csv, report.json
// Stages whose stamp file matches the current upstream hash are loaded
// instead of recomputed.

#include "umx/config.hpp"
#include "umx/forward.hpp"
#include "umx/model.hpp"
#include "umx/phantom.hpp"
#include "umx/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace umx::experiment {

enum class DeltaReference { kAdjusted, kMeasured };  // ||y_hat|| or ||y||
enum class DataModel { kFdfd, kExactBorn };

struct ArraySpec {
  int n_antennas = 9;
  double radius_factor = 1.2;  // times the breast bounding radius
  double arc_deg = 360.0;
  double start_deg = 0.0;
  double freq_min_hz = 500e6;
  double freq_max_hz = 1500e6;
  int n_freqs = 5;

  std::vector<double> frequencies() const;
};

struct SimulationSpec {
  int margin_cells = 3;  // coupling-medium cells between the outermost antenna and the PML
  int pml_cells = 10;
  double pml_reflection = 1e-6;
  DataModel data = DataModel::kFdfd;
  double noise_rel = 0.0;  // complex Gaussian noise, rms relative to ||y|| / sqrt(M)
  std::uint64_t noise_seed = 1;
};

struct ExperimentConfig {
  phantom::PhantomSpec phantom;
  ArraySpec array;
  SimulationSpec simulation;
  model::TissueModel tissues;
  model::DebyeParameters coupling{10.0, 0.0, 1e-12, 0.1};
  std::vector<double> delta_fracs{1e-4, 1e-2, 5e-2};
  DeltaReference reference = DeltaReference::kAdjusted;
  solver::SolverOptions solver;
  model::OperatorStorage storage = model::OperatorStorage::kDense;
  std::filesystem::path output_dir = "umx_out";
  int threads = 0;  // concurrent solves in a sweep; 0 = hardware concurrency

  /// Reads every recognised key; unknown keys are a validation error.
  static ExperimentConfig from_document(const config::Document& doc);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Throws std::invalid_argument describing the first violated rule.
  void validate() const;

  /// Full configuration in config-file syntax, fixed key order and %.17g numbers.
  std::string canonical_text() const;
  std::uint64_t hash() const;
  /// Hashes of everything upstream of each cached stage.
  std::uint64_t phantom_hash() const;
  std::uint64_t simulation_hash() const;
};

/// Simulation domain around the imaging grid, and the antenna array.
struct Setup {
  forward::Grid2D grid;
  forward::ArrayGeometry geometry;
  int offset_x = 0;  // domain cell of imaging cell (0, 0)
  int offset_y = 0;
};

Setup build_setup(const ExperimentConfig& config, const phantom::PhantomPair& pair);

inline constexpr double kSupportThreshold = 0.1;
inline constexpr double kDetectionFloor = 1e-3;

struct LesionMetrics {
  double peak_in = 0.0;   // max estimated cancer fraction over lesion pixels
  double peak_out = 0.0;  // ... over all other pixels
  double centroid_error_cells = std::numeric_limits<double>::quiet_NaN();
  double support_f1 = 0.0;
  bool detected = false;  // peak_in >= kDetectionFloor and peak_in >= 2 * peak_out
};

/// Compares a stacked estimate with the phantom's unhealthy truth. The
/// centroid error is the distance in cells between the cancer-weighted
/// centroids of {z3_hat > 0.1} and of the truth; NaN when the estimate has
/// no pixel above threshold. F1 compares {z3_hat > 0.1} with {z3 > 0.1}.
LesionMetrics lesion_metrics(const phantom::PhantomPair& pair, const RealVector& z);

struct DeltaResult {
  double fraction = 0.0;
  double delta = 0.0;
  solver::SolveReport solve;
  LesionMetrics metrics;
  double deviation_inf = 0.0;  // ||z - v||_inf
};

struct StageRecord {
  std::string name;
  bool cached = false;
  double seconds = 0.0;
};

enum class ErrorKind { kNone, kValidation, kNumerical, kOther };

struct ExperimentReport {
  std::uint64_t config_hash = 0;
  std::vector<StageRecord> stages;
  std::vector<DeltaResult> deltas;
  std::size_t n_pixels = 0;
  std::size_t measurement_count = 0;
  double norm_y = 0.0;
  double norm_y_prior = 0.0;
  double norm_y_hat = 0.0;
  double discrepancy_fraction = 0.0;  // ||y - y_prior|| / ||y_hat||
  double born_error = 0.0;

  std::string failed_stage;  // empty on success
  std::string error;
  ErrorKind error_kind = ErrorKind::kNone;

  bool ok() const { return failed_stage.empty(); }
};

enum class Stage { kGenerate = 0, kSimulate = 1, kLinearize = 2, kSolve = 3 };

/// Runs the pipeline up to and including `last`. Stage failures are recorded
/// in the report; artifacts of completed stages stay on disk.
ExperimentReport run_until(const ExperimentConfig& config, Stage last);

/// Full pipeline with the configured delta list (at least one, all distinct).
ExperimentReport run(const ExperimentConfig& config);

/// Full pipeline over `fractions` (at least two, all distinct), sharing one
/// phantom and Jacobian.
ExperimentReport sweep_delta(const ExperimentConfig& config, const std::vector<double>& fractions);

/// Rebuilds metrics.csv and report.json from the artifacts of an earlier run.
ExperimentReport report_from_disk(const ExperimentConfig& config);

/// One row per delta; every column is recomputable from saved arrays.
std::string metrics_csv(const ExperimentReport& report);
std::string report_json(const ExperimentReport& report, const ExperimentConfig& config);

/// Loaded or freshly computed linearization, for tools and tests.
struct Linearization {
  phantom::PhantomPair pair;
  Setup setup;
  ComplexVector y;        // data used for inversion
  ComplexVector y_prior;  // FDFD on the healthy phantom
  ComplexVector y_hat;
  RealVector prior;
  std::shared_ptr<const SensingOperator> op;
};

Linearization load_linearization(const ExperimentConfig& config);

}  // namespace umx::experiment
