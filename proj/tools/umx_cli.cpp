// umx: command-line driver for the synthetic unmixing study.
//
//   umx <generate|simulate|linearize|solve|sweep|report> --config FILE [options]
//
// Exit status: 0 success, 2 invalid input or configuration, 3 numerical
// failure, 1 anything else.

#include "umx/experiment.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitOther = 1;

int exit_code(umx::experiment::ErrorKind kind) {
  switch (kind) {
    case umx::experiment::ErrorKind::kNone: return 0;
    case umx::experiment::ErrorKind::kValidation: return kExitValidation;
    case umx::experiment::ErrorKind::kNumerical: return kExitNumerical;
    case umx::experiment::ErrorKind::kOther: return kExitOther;
  }
  return kExitOther;
}

void print_summary(const umx::experiment::ExperimentReport& r, const umx::experiment::ExperimentConfig& c) {
  for (const auto& s : r.stages)
    std::printf("%-10s %s %.3f s\n", s.name.c_str(), s.cached ? "cached  " : "computed", s.seconds);
  if (r.measurement_count > 0)
    std::printf("pixels %zu  measurements %zu  born_error %.4g  discrepancy %.4g\n", r.n_pixels,
                r.measurement_count, r.born_error, r.discrepancy_fraction);
  for (const auto& d : r.deltas) {
    std::printf("delta_frac %-10g peak_in %.4f peak_out %.4f f1 %.3f centroid %s detected %s %s\n", d.fraction,
                d.metrics.peak_in, d.metrics.peak_out, d.metrics.support_f1,
                std::isfinite(d.metrics.centroid_error_cells)
                    ? std::to_string(d.metrics.centroid_error_cells).c_str()
                    : "n/a",
                d.metrics.detected ? "yes" : "no", d.solve.converged ? "converged" : "unconverged");
  }
  if (!r.ok()) std::fprintf(stderr, "stage '%s' failed: %s\n", r.failed_stage.c_str(), r.error.c_str());
  std::printf("output %s\n", c.output_dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  using namespace umx::experiment;

  CLI::App app{"Sparse tissue unmixing from linearized microwave measurements"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<double> delta_fracs;
  bool dense = false;
  bool matrix_free = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    cmd->add_option("--seed", seed, "Phantom seed (overrides phantom.seed)");
    cmd->add_option("--delta-frac", delta_fracs, "Residual budgets as fractions of the reference norm")
        ->delimiter(',');
    auto* d = cmd->add_flag("--dense", dense, "Store the Jacobian as a dense matrix");
    auto* m = cmd->add_flag("--matrix-free", matrix_free, "Apply the Jacobian from cached fields");
    d->excludes(m);
  };

  auto* generate = app.add_subcommand("generate", "Generate the healthy/unhealthy phantom pair");
  auto* simulate = app.add_subcommand("simulate", "Simulate FDFD measurements for both phantoms");
  auto* linearize = app.add_subcommand("linearize", "Background fields, Jacobian and adjusted measurements");
  auto* solve = app.add_subcommand("solve", "Full pipeline with the configured residual budgets");
  auto* sweep = app.add_subcommand("sweep", "Full pipeline over at least two residual budgets");
  auto* report = app.add_subcommand("report", "Rebuild metrics.csv and report.json from saved results");
  for (auto* cmd : {generate, simulate, linearize, solve, sweep, report}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    ExperimentConfig config = ExperimentConfig::load(config_path);
    if (out_dir) config.output_dir = *out_dir;
    if (seed) config.phantom.seed = *seed;
    if (!delta_fracs.empty()) config.delta_fracs = delta_fracs;
    if (dense) config.storage = umx::model::OperatorStorage::kDense;
    if (matrix_free) config.storage = umx::model::OperatorStorage::kMatrixFree;
    config.validate();

    ExperimentReport r;
    if (generate->parsed())
      r = run_until(config, Stage::kGenerate);
    else if (simulate->parsed())
      r = run_until(config, Stage::kSimulate);
    else if (linearize->parsed())
      r = run_until(config, Stage::kLinearize);
    else if (solve->parsed())
      r = run(config);
    else if (sweep->parsed())
      r = sweep_delta(config, config.delta_fracs);
    else
      r = report_from_disk(config);
    print_summary(r, config);
    return exit_code(r.error_kind);
  } catch (const umx::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}
