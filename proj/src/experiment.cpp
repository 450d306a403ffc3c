#include "umx/experiment.hpp"

#include "umx/hash.hpp"
#include "umx/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace umx::experiment {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string num(double x) { return io::csv_number(x); }

std::string hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const char* reference_name(DeltaReference r) { return r == DeltaReference::kAdjusted ? "y_hat" : "y"; }
const char* data_name(DataModel d) { return d == DataModel::kFdfd ? "fdfd" : "exact_born"; }
const char* storage_name(model::OperatorStorage s) {
  return s == model::OperatorStorage::kDense ? "dense" : "matrix_free";
}

std::string phantom_section(const phantom::PhantomSpec& p) {
  std::ostringstream os;
  os << "[phantom]\n"
     << "nx = " << p.nx << "\n"
     << "ny = " << p.ny << "\n"
     << "cell_size_m = " << num(p.cell_size_m) << "\n"
     << "semi_axis_x_m = " << num(p.semi_axis_x_m) << "\n"
     << "semi_axis_y_m = " << num(p.semi_axis_y_m) << "\n"
     << "seed = " << p.seed << "\n"
     << "\n[phantom.texture]\n"
     << "correlation_length_m = " << num(p.texture.correlation_length_m) << "\n"
     << "mean_hwc = " << num(p.texture.mean_hwc) << "\n"
     << "std_hwc = " << num(p.texture.std_hwc) << "\n"
     << "\n[phantom.lesion]\n"
     << "center_x_m = " << num(p.lesion.center_x_m) << "\n"
     << "center_y_m = " << num(p.lesion.center_y_m) << "\n"
     << "radius_m = " << num(p.lesion.radius_m) << "\n"
     << "proportion = " << num(p.lesion.proportion) << "\n";
  return os.str();
}

std::string debye_section(const std::string& name, const model::DebyeParameters& d) {
  std::ostringstream os;
  os << "\n[" << name << "]\n"
     << "eps_inf = " << num(d.eps_inf) << "\n"
     << "delta_eps = " << num(d.delta_eps) << "\n"
     << "tau_s = " << num(d.tau_s) << "\n"
     << "sigma_s_per_m = " << num(d.sigma_s) << "\n";
  return os.str();
}

std::string physics_sections(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "\n[array]\n"
     << "n_antennas = " << c.array.n_antennas << "\n"
     << "radius_factor = " << num(c.array.radius_factor) << "\n"
     << "arc_deg = " << num(c.array.arc_deg) << "\n"
     << "start_deg = " << num(c.array.start_deg) << "\n"
     << "freq_min_hz = " << num(c.array.freq_min_hz) << "\n"
     << "freq_max_hz = " << num(c.array.freq_max_hz) << "\n"
     << "n_freqs = " << c.array.n_freqs << "\n"
     << "\n[simulation]\n"
     << "margin_cells = " << c.simulation.margin_cells << "\n"
     << "pml_cells = " << c.simulation.pml_cells << "\n"
     << "pml_reflection = " << num(c.simulation.pml_reflection) << "\n"
     << "data = \"" << data_name(c.simulation.data) << "\"\n"
     << "noise_rel = " << num(c.simulation.noise_rel) << "\n"
     << "noise_seed = " << c.simulation.noise_seed << "\n";
  for (std::size_t r = 0; r < model::kMaterialCount; ++r)
    os << debye_section(std::string("tissue.") + model::material_name(r), c.tissues.tissues[r]);
  os << debye_section("coupling", c.coupling);
  return os.str();
}

model::DebyeParameters read_debye(const config::Document& doc, const std::string& section,
                                  model::DebyeParameters d) {
  d.eps_inf = doc.number(section + ".eps_inf", d.eps_inf);
  d.delta_eps = doc.number(section + ".delta_eps", d.delta_eps);
  d.tau_s = doc.number(section + ".tau_s", d.tau_s);
  d.sigma_s = doc.number(section + ".sigma_s_per_m", d.sigma_s);
  return d;
}

int to_int(std::int64_t v, const char* key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw std::invalid_argument(std::string("config: ") + key + " out of range");
  return static_cast<int>(v);
}

// Stamp files --------------------------------------------------------------

bool stamp_matches(const fs::path& dir, std::uint64_t hash) {
  const fs::path stamp = dir / "stamp.txt";
  if (!fs::exists(stamp)) return false;
  try {
    return io::read_text(stamp) == hex(hash) + "\n";
  } catch (const std::exception&) {
    return false;
  }
}

void write_stamp(const fs::path& dir, std::uint64_t hash) { io::write_text(dir / "stamp.txt", hex(hash) + "\n"); }

void clear_stamp(const fs::path& dir) {
  std::error_code ec;
  fs::remove(dir / "stamp.txt", ec);
}

// Pipeline state ------------------------------------------------------------

struct Pipeline {
  const ExperimentConfig& config;
  ExperimentReport& report;
  fs::path out;

  phantom::PhantomPair pair;
  Setup setup;
  ComplexVector y_fdfd, y_prior;
  Linearization lin;

  template <class F>
  void stage(const std::string& name, F&& body) {
    report.failed_stage = name;
    const auto t0 = std::chrono::steady_clock::now();
    StageRecord rec;
    rec.name = name;
    rec.cached = body();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.stages.push_back(rec);
    report.failed_stage.clear();
  }

  bool generate() {
    const fs::path dir = out / "phantom";
    const std::uint64_t h = config.phantom_hash();
    if (stamp_matches(dir, h)) {
      try {
        pair = phantom::load(dir);
        return true;
      } catch (const std::exception&) {
      }
    }
    clear_stamp(dir);
    pair = phantom::generate(config.phantom);
    phantom::save(pair, config.phantom, dir);
    write_stamp(dir, h);
    return false;
  }

  std::vector<forward::PermittivityMap> permittivities() const {
    const auto freqs = config.array.frequencies();
    return {model::build_permittivity(setup.grid, pair.healthy, config.tissues, config.coupling, freqs),
            model::build_permittivity(setup.grid, pair.unhealthy, config.tissues, config.coupling, freqs)};
  }

  bool simulate() {
    setup = build_setup(config, pair);
    const fs::path dir = out / "simulate";
    const std::uint64_t h = config.simulation_hash();
    if (stamp_matches(dir, h)) {
      try {
        y_prior = io::to_complex_vector(io::read_umxa(dir / "y_prior.umxa"));
        y_fdfd = io::to_complex_vector(io::read_umxa(dir / "y_fdfd.umxa"));
        const auto m = static_cast<Eigen::Index>(setup.geometry.measurement_count());
        if (y_prior.size() == m && y_fdfd.size() == m) return true;
      } catch (const std::exception&) {
      }
    }
    clear_stamp(dir);
    const auto eps = permittivities();
    y_prior = forward::simulate_measurements(setup.grid, setup.geometry, eps[0]);
    y_fdfd = config.simulation.data == DataModel::kFdfd
                 ? forward::simulate_measurements(setup.grid, setup.geometry, eps[1])
                 : y_prior;
    io::write_umxa(dir / "y_prior.umxa", io::from_vector(y_prior));
    io::write_umxa(dir / "y_fdfd.umxa", io::from_vector(y_fdfd));
    write_stamp(dir, h);
    return false;
  }

  std::shared_ptr<const SensingOperator> make_operator(std::vector<std::vector<std::vector<cplx>>> fields) const {
    auto born = std::make_shared<model::BornOperator>(config.array.frequencies(), setup.geometry.transmitters.size(),
                                                      setup.geometry.receivers.size(), std::move(fields),
                                                      config.tissues, setup.grid.cell_size);
    if (config.storage == model::OperatorStorage::kMatrixFree) return born;
    return std::make_shared<DenseOperator>(born->to_dense());
  }

  void finish_linearization(const ComplexVector& y) {
    lin.pair = pair;
    lin.setup = setup;
    lin.y = y;
    lin.y_prior = y_prior;
    lin.prior = phantom::prior_from_healthy(pair);
    lin.y_hat = model::adjusted_measurements(lin.y, lin.y_prior, *lin.op, lin.prior);
  }

  bool linearize() {
    const fs::path dir = out / "linearize";
    const std::uint64_t h = config.simulation_hash();
    if (stamp_matches(dir, h)) {
      try {
        const io::Array fa = io::read_umxa(dir / "fields.umxa");
        if (fa.dims.size() != 3) throw std::runtime_error("fields.umxa: expected rank 3");
        const auto flat = fa.complex_values();
        std::vector<std::vector<std::vector<cplx>>> fields(fa.dims[0]);
        std::size_t k = 0;
        for (auto& per_f : fields) {
          per_f.resize(fa.dims[1]);
          for (auto& px : per_f) {
            px.assign(flat.begin() + static_cast<std::ptrdiff_t>(k),
                      flat.begin() + static_cast<std::ptrdiff_t>(k + fa.dims[2]));
            k += fa.dims[2];
          }
        }
        lin.op = make_operator(std::move(fields));
        finish_linearization(io::to_complex_vector(io::read_umxa(dir / "y.umxa")));
        return true;
      } catch (const std::exception&) {
      }
    }
    clear_stamp(dir);
    const auto freqs = config.array.frequencies();
    const auto eps_bg = model::build_permittivity(setup.grid, pair.healthy, config.tissues, config.coupling, freqs);
    const auto table = forward::background_fields(setup.grid, setup.geometry, eps_bg);
    const model::BornOperator born(table, config.tissues, setup.grid);

    const auto& fields = born.pixel_fields();
    std::vector<cplx> flat;
    for (const auto& per_f : fields)
      for (const auto& px : per_f) flat.insert(flat.end(), px.begin(), px.end());
    io::write_umxa(dir / "fields.umxa",
                   io::Array::complex_array({fields.size(), fields.front().size(), born.n_pixels()}, flat));
    lin.op = make_operator(fields);

    ComplexVector y = y_fdfd;
    if (config.simulation.data == DataModel::kExactBorn)
      y = y_prior + lin.op->apply_real(pair.unhealthy.stacked() - phantom::prior_from_healthy(pair));
    if (config.simulation.noise_rel > 0.0) {
      std::mt19937_64 rng(config.simulation.noise_seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      const double sigma =
          config.simulation.noise_rel * y.norm() / std::sqrt(2.0 * static_cast<double>(y.size()));
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double re = normal(rng);
        const double im = normal(rng);
        y[i] += sigma * cplx(re, im);
      }
    }
    io::write_umxa(dir / "y.umxa", io::from_vector(y));
    finish_linearization(y);
    if (config.storage == model::OperatorStorage::kDense) {
      const Eigen::MatrixXcd a = lin.op->to_dense();
      // Row-major payload.
      std::vector<cplx> rows(static_cast<std::size_t>(a.size()));
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) rows[static_cast<std::size_t>(i * a.cols() + j)] = a(i, j);
      io::write_umxa(dir / "jacobian.umxa", io::Array::complex_array({static_cast<std::size_t>(a.rows()),
                                                                      static_cast<std::size_t>(a.cols())},
                                                                     rows));
    }
    io::write_umxa(dir / "y_hat.umxa", io::from_vector(lin.y_hat));
    write_stamp(dir, h);
    return false;
  }

  void summarize_measurements() {
    report.n_pixels = lin.pair.n_pixels();
    report.measurement_count = static_cast<std::size_t>(lin.y.size());
    report.norm_y = lin.y.norm();
    report.norm_y_prior = lin.y_prior.norm();
    report.norm_y_hat = lin.y_hat.norm();
    report.discrepancy_fraction = (lin.y - lin.y_prior).norm() / report.norm_y_hat;
    report.born_error =
        model::born_error(lin.y, lin.y_prior, *lin.op, lin.prior, lin.pair.unhealthy.stacked());
  }

  void solve_all(const std::vector<double>& fractions) {
    const double ref = config.reference == DeltaReference::kAdjusted ? lin.y_hat.norm() : lin.y.norm();
    report.deltas.assign(fractions.size(), {});
    for (std::size_t k = 0; k < fractions.size(); ++k) {
      report.deltas[k].fraction = fractions[k];
      report.deltas[k].delta = fractions[k] * ref;
    }
    const std::size_t workers = config.threads > 0
                                    ? static_cast<std::size_t>(config.threads)
                                    : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    auto solve_one = [&](std::size_t k) {
      solver::UnmixProblem problem{lin.op, lin.y_hat, lin.prior, report.deltas[k].delta,
                                   StackShape{lin.pair.n_pixels(), model::kMaterialCount}};
      return solver::solve(problem, config.solver);
    };
    for (std::size_t first = 0; first < fractions.size(); first += workers) {
      const std::size_t last = std::min(fractions.size(), first + workers);
      std::vector<std::future<solver::SolveReport>> jobs;
      for (std::size_t k = first; k < last; ++k) jobs.push_back(std::async(std::launch::async, solve_one, k));
      for (std::size_t k = first; k < last; ++k) report.deltas[k].solve = jobs[k - first].get();
    }
    for (std::size_t k = 0; k < fractions.size(); ++k) {
      DeltaResult& d = report.deltas[k];
      d.metrics = lesion_metrics(lin.pair, d.solve.z);
      d.deviation_inf = (d.solve.z - lin.prior).lpNorm<Eigen::Infinity>();
      write_delta_artifacts(k, d);
    }
  }

  fs::path delta_dir(std::size_t k) const {
    char name[32];
    std::snprintf(name, sizeof name, "delta_%02zu", k);
    return out / "solve" / name;
  }

  void write_delta_artifacts(std::size_t k, const DeltaResult& d) const {
    const fs::path dir = delta_dir(k);
    fs::create_directories(dir);
    io::write_umxa(dir / "z.umxa", io::from_vector(d.solve.z));
    const auto field = model::MixtureField::from_stacked(
        d.solve.z, StackShape{lin.pair.n_pixels(), model::kMaterialCount});
    for (std::size_t r = 0; r < model::kMaterialCount; ++r)
      phantom::write_heatmap(dir / (std::string(model::material_name(r)) + ".pgm"), lin.pair, field, r);
    Json s;
    s["fraction"] = d.fraction;
    s["delta"] = d.delta;
    s["converged"] = d.solve.converged;
    s["prior_feasible"] = d.solve.prior_feasible;
    s["suspected_infeasible"] = d.solve.suspected_infeasible;
    s["outer_iterations"] = d.solve.outer_iterations;
    s["total_inner_iterations"] = d.solve.total_inner_iterations;
    s["message"] = d.solve.message;
    io::write_text(dir / "summary.json", s.dump(2) + "\n");
  }

  void write_outputs() const {
    io::write_text(out / "metrics.csv", metrics_csv(report));
    io::write_text(out / "report.json", report_json(report, config));
  }
};

void check_fractions(const std::vector<double>& fractions, std::size_t min_count) {
  if (fractions.size() < min_count)
    throw std::invalid_argument("delta list needs at least " + std::to_string(min_count) + " value(s)");
  std::set<double> seen;
  for (double f : fractions) {
    if (!(f > 0.0) || !std::isfinite(f)) throw std::invalid_argument("delta fractions must be positive and finite");
    if (!seen.insert(f).second) throw std::invalid_argument("delta list repeats the value " + num(f));
  }
}

ErrorKind classify(const std::exception& e) {
  if (dynamic_cast<const NumericalFailure*>(&e)) return ErrorKind::kNumerical;
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::domain_error*>(&e))
    return ErrorKind::kValidation;
  return ErrorKind::kOther;
}

ExperimentReport execute(const ExperimentConfig& config, Stage last, const std::vector<double>& fractions) {
  config.validate();
  ExperimentReport report;
  report.config_hash = config.hash();
  fs::create_directories(config.output_dir);
  io::write_text(config.output_dir / "config.toml", config.canonical_text());

  Pipeline p{config, report, config.output_dir, {}, {}, {}, {}, {}};
  try {
    p.stage("generate", [&] { return p.generate(); });
    if (last >= Stage::kSimulate) p.stage("simulate", [&] { return p.simulate(); });
    if (last >= Stage::kLinearize) {
      p.stage("linearize", [&] { return p.linearize(); });
      p.summarize_measurements();
    }
    if (last >= Stage::kSolve) {
      p.stage("solve", [&] {
        p.solve_all(fractions);
        return false;
      });
    }
  } catch (const std::exception& e) {
    report.error = e.what();
    report.error_kind = classify(e);
  }
  if (last >= Stage::kLinearize || !report.ok()) {
    try {
      p.write_outputs();
    } catch (const std::exception& e) {
      if (report.ok()) {
        report.failed_stage = "report";
        report.error = e.what();
        report.error_kind = ErrorKind::kOther;
      }
    }
  }
  return report;
}

}  // namespace

// Configuration -------------------------------------------------------------

std::vector<double> ArraySpec::frequencies() const {
  std::vector<double> f(static_cast<std::size_t>(std::max(n_freqs, 0)));
  for (int k = 0; k < n_freqs; ++k)
    f[static_cast<std::size_t>(k)] =
        n_freqs == 1 ? freq_min_hz : freq_min_hz + (freq_max_hz - freq_min_hz) * k / (n_freqs - 1);
  return f;
}

ExperimentConfig ExperimentConfig::from_document(const config::Document& doc) {
  ExperimentConfig c;
  auto& p = c.phantom;
  p.nx = to_int(doc.integer("phantom.nx", p.nx), "phantom.nx");
  p.ny = to_int(doc.integer("phantom.ny", p.ny), "phantom.ny");
  p.cell_size_m = doc.number("phantom.cell_size_m", p.cell_size_m);
  p.semi_axis_x_m = doc.number("phantom.semi_axis_x_m", p.semi_axis_x_m);
  p.semi_axis_y_m = doc.number("phantom.semi_axis_y_m", p.semi_axis_y_m);
  p.seed = doc.unsigned_integer("phantom.seed", p.seed);
  p.texture.correlation_length_m = doc.number("phantom.texture.correlation_length_m", p.texture.correlation_length_m);
  p.texture.mean_hwc = doc.number("phantom.texture.mean_hwc", p.texture.mean_hwc);
  p.texture.std_hwc = doc.number("phantom.texture.std_hwc", p.texture.std_hwc);
  p.lesion.center_x_m = doc.number("phantom.lesion.center_x_m", p.lesion.center_x_m);
  p.lesion.center_y_m = doc.number("phantom.lesion.center_y_m", p.lesion.center_y_m);
  p.lesion.radius_m = doc.number("phantom.lesion.radius_m", p.lesion.radius_m);
  p.lesion.proportion = doc.number("phantom.lesion.proportion", p.lesion.proportion);

  auto& a = c.array;
  a.n_antennas = to_int(doc.integer("array.n_antennas", a.n_antennas), "array.n_antennas");
  a.radius_factor = doc.number("array.radius_factor", a.radius_factor);
  a.arc_deg = doc.number("array.arc_deg", a.arc_deg);
  a.start_deg = doc.number("array.start_deg", a.start_deg);
  a.freq_min_hz = doc.number("array.freq_min_hz", a.freq_min_hz);
  a.freq_max_hz = doc.number("array.freq_max_hz", a.freq_max_hz);
  a.n_freqs = to_int(doc.integer("array.n_freqs", a.n_freqs), "array.n_freqs");

  auto& s = c.simulation;
  s.margin_cells = to_int(doc.integer("simulation.margin_cells", s.margin_cells), "simulation.margin_cells");
  s.pml_cells = to_int(doc.integer("simulation.pml_cells", s.pml_cells), "simulation.pml_cells");
  s.pml_reflection = doc.number("simulation.pml_reflection", s.pml_reflection);
  const std::string data = doc.string("simulation.data", data_name(s.data));
  if (data == "fdfd")
    s.data = DataModel::kFdfd;
  else if (data == "exact_born")
    s.data = DataModel::kExactBorn;
  else
    throw std::invalid_argument("config: simulation.data must be \"fdfd\" or \"exact_born\"");
  s.noise_rel = doc.number("simulation.noise_rel", s.noise_rel);
  s.noise_seed = doc.unsigned_integer("simulation.noise_seed", s.noise_seed);

  for (std::size_t r = 0; r < model::kMaterialCount; ++r)
    c.tissues.tissues[r] =
        read_debye(doc, std::string("tissue.") + model::material_name(r), c.tissues.tissues[r]);
  c.coupling = read_debye(doc, "coupling", c.coupling);

  c.delta_fracs = doc.numbers("sweep.delta_fracs", c.delta_fracs);
  const std::string ref = doc.string("sweep.reference", reference_name(c.reference));
  if (ref == "y_hat")
    c.reference = DeltaReference::kAdjusted;
  else if (ref == "y")
    c.reference = DeltaReference::kMeasured;
  else
    throw std::invalid_argument("config: sweep.reference must be \"y_hat\" or \"y\"");
  const std::string storage = doc.string("sweep.operator", storage_name(c.storage));
  if (storage == "dense")
    c.storage = model::OperatorStorage::kDense;
  else if (storage == "matrix_free")
    c.storage = model::OperatorStorage::kMatrixFree;
  else
    throw std::invalid_argument("config: sweep.operator must be \"dense\" or \"matrix_free\"");
  c.threads = to_int(doc.integer("sweep.threads", c.threads), "sweep.threads");

  auto& o = c.solver;
  o.rho = doc.number("solver.rho", o.rho);
  o.max_outer = to_int(doc.integer("solver.max_outer", o.max_outer), "solver.max_outer");
  o.max_inner = to_int(doc.integer("solver.max_inner", o.max_inner), "solver.max_inner");
  o.inner_tol = doc.number("solver.inner_tol", o.inner_tol);
  o.outer_tol = doc.number("solver.outer_tol", o.outer_tol);
  o.line_search.initial_t = doc.number("solver.initial_step", o.line_search.initial_t);
  o.line_search.backtrack_factor = doc.number("solver.backtrack_factor", o.line_search.backtrack_factor);
  o.line_search.max_backtracks =
      to_int(doc.integer("solver.max_backtracks", o.line_search.max_backtracks), "solver.max_backtracks");

  c.output_dir = doc.string("output.dir", c.output_dir.string());

  const auto unused = doc.unused_keys();
  if (!unused.empty()) {
    std::string list;
    for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
    throw std::invalid_argument(doc.source() + ": unknown key(s): " + list);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_document(config::Document::load(path));
}

void ExperimentConfig::validate() const {
  phantom.validate();
  if (array.n_antennas < 1) throw std::invalid_argument("config: array.n_antennas must be at least 1");
  if (!(array.radius_factor > 1.0)) throw std::invalid_argument("config: array.radius_factor must exceed 1");
  if (!(array.arc_deg > 0.0 && array.arc_deg <= 360.0))
    throw std::invalid_argument("config: array.arc_deg must lie in (0, 360]");
  if (array.n_freqs < 1) throw std::invalid_argument("config: array.n_freqs must be at least 1");
  if (!(array.freq_min_hz > 0.0)) throw std::invalid_argument("config: array.freq_min_hz must be positive");
  if (array.n_freqs > 1 && !(array.freq_max_hz > array.freq_min_hz))
    throw std::invalid_argument("config: array.freq_max_hz must exceed freq_min_hz");
  if (simulation.margin_cells < 1) throw std::invalid_argument("config: simulation.margin_cells must be >= 1");
  if (simulation.pml_cells < 1) throw std::invalid_argument("config: simulation.pml_cells must be >= 1");
  if (!(simulation.pml_reflection > 0.0 && simulation.pml_reflection < 1.0))
    throw std::invalid_argument("config: simulation.pml_reflection must lie in (0, 1)");
  if (!(simulation.noise_rel >= 0.0) || !std::isfinite(simulation.noise_rel))
    throw std::invalid_argument("config: simulation.noise_rel must be nonnegative");
  const auto freqs = array.frequencies();
  tissues.validate(freqs);
  coupling.validate();
  check_fractions(delta_fracs, 1);
  solver.validate();
  if (threads < 0) throw std::invalid_argument("config: sweep.threads must be nonnegative");

  // At least 10 cells per wavelength in the densest medium at the top frequency.
  const double f_max = freqs.back();
  double worst = std::numeric_limits<double>::infinity();
  auto check = [&](const model::DebyeParameters& d) {
    const double n_re = std::sqrt(d.permittivity(f_max)).real();
    worst = std::min(worst, forward::kSpeedOfLight / (f_max * std::abs(n_re)) / phantom.cell_size_m);
  };
  for (const auto& t : tissues.tissues) check(t);
  check(coupling);
  if (worst < 10.0)
    throw std::invalid_argument("config: only " + num(worst) +
                                " cells per wavelength at the top frequency; at least 10 are required");
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os << phantom_section(phantom) << physics_sections(*this);
  os << "\n[solver]\n"
     << "rho = " << num(solver.rho) << "\n"
     << "max_outer = " << solver.max_outer << "\n"
     << "max_inner = " << solver.max_inner << "\n"
     << "inner_tol = " << num(solver.inner_tol) << "\n"
     << "outer_tol = " << num(solver.outer_tol) << "\n"
     << "initial_step = " << num(solver.line_search.initial_t) << "\n"
     << "backtrack_factor = " << num(solver.line_search.backtrack_factor) << "\n"
     << "max_backtracks = " << solver.line_search.max_backtracks << "\n"
     << "\n[sweep]\n"
     << "delta_fracs = [";
  for (std::size_t k = 0; k < delta_fracs.size(); ++k) os << (k ? ", " : "") << num(delta_fracs[k]);
  os << "]\n"
     << "reference = \"" << reference_name(reference) << "\"\n"
     << "operator = \"" << storage_name(storage) << "\"\n"
     << "threads = " << threads << "\n"
     << "\n[output]\n"
     << "dir = \"" << output_dir.string() << "\"\n";
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const {
  Fnv1a h;
  h.text(canonical_text());
  return h.digest();
}

std::uint64_t ExperimentConfig::phantom_hash() const {
  Fnv1a h;
  h.text(phantom_section(phantom));
  return h.digest();
}

std::uint64_t ExperimentConfig::simulation_hash() const {
  Fnv1a h;
  h.text(phantom_section(phantom));
  h.text(physics_sections(*this));
  return h.digest();
}

// Geometry ------------------------------------------------------------------

Setup build_setup(const ExperimentConfig& config, const phantom::PhantomPair& pair) {
  const auto& ps = config.phantom;
  const double h = ps.cell_size_m;
  const double radius = config.array.radius_factor * std::max(ps.semi_axis_x_m, ps.semi_axis_y_m);
  auto padding = [&](int n) {
    const int reach = static_cast<int>(std::ceil(radius / h - 0.5 * (n - 1) - 1e-9));
    return config.simulation.pml_cells + std::max(reach, 0) + config.simulation.margin_cells;
  };
  Setup s;
  s.offset_x = padding(ps.nx);
  s.offset_y = padding(ps.ny);
  auto& g = s.grid;
  g.nx = ps.nx + 2 * s.offset_x;
  g.ny = ps.ny + 2 * s.offset_y;
  g.cell_size = h;
  g.pml.cells = config.simulation.pml_cells;
  g.pml.reflection = config.simulation.pml_reflection;
  g.imaging_mask.assign(g.cell_count(), 0);
  for (const auto& [i, j] : pair.pixel_cells) g.imaging_mask[g.index(i + s.offset_x, j + s.offset_y)] = 1;

  const double cx = (s.offset_x + 0.5 * (ps.nx - 1)) * h;
  const double cy = (s.offset_y + 0.5 * (ps.ny - 1)) * h;
  const int n = config.array.n_antennas;
  const bool full_circle = config.array.arc_deg >= 360.0;
  const double step_deg = n == 1 ? 0.0 : config.array.arc_deg / (full_circle ? n : n - 1);
  for (int k = 0; k < n; ++k) {
    const double th = (config.array.start_deg + k * step_deg) * std::numbers::pi / 180.0;
    const forward::Point2 p{cx + radius * std::cos(th), cy + radius * std::sin(th)};
    if (g.imaging_mask[g.cell_of(p)])
      throw std::invalid_argument("build_setup: an antenna falls on a breast pixel");
    s.geometry.transmitters.push_back(p);
  }
  s.geometry.receivers = s.geometry.transmitters;
  s.geometry.frequencies = config.array.frequencies();
  g.validate();
  s.geometry.validate(g);
  return s;
}

// Metrics -------------------------------------------------------------------

LesionMetrics lesion_metrics(const phantom::PhantomPair& pair, const RealVector& z) {
  const std::size_t n = pair.n_pixels();
  if (static_cast<std::size_t>(z.size()) != n * model::kMaterialCount)
    throw std::invalid_argument("lesion_metrics: estimate length does not match the phantom");
  const auto cancer = static_cast<Eigen::Index>(static_cast<std::size_t>(model::Material::kCancer) * n);
  LesionMetrics m;
  double wt = 0.0, tx = 0.0, ty = 0.0;  // truth centroid
  double we = 0.0, ex = 0.0, ey = 0.0;  // estimate centroid
  std::size_t n_est = 0, n_true = 0, n_both = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double est = z[cancer + static_cast<Eigen::Index>(p)];
    const double truth = pair.unhealthy(p, 2);
    const auto [i, j] = pair.pixel_cells[p];
    if (pair.lesion_mask[p])
      m.peak_in = std::max(m.peak_in, est);
    else
      m.peak_out = std::max(m.peak_out, est);
    wt += truth;
    tx += truth * i;
    ty += truth * j;
    const bool in_est = est > kSupportThreshold;
    const bool in_true = truth > kSupportThreshold;
    if (in_est) {
      we += est;
      ex += est * i;
      ey += est * j;
    }
    n_est += in_est;
    n_true += in_true;
    n_both += in_est && in_true;
  }
  if (we > 0.0 && wt > 0.0) m.centroid_error_cells = std::hypot(ex / we - tx / wt, ey / we - ty / wt);
  m.support_f1 = n_est + n_true == 0 ? 1.0 : 2.0 * static_cast<double>(n_both) / static_cast<double>(n_est + n_true);
  m.detected = m.peak_in >= kDetectionFloor && m.peak_in >= 2.0 * m.peak_out;
  return m;
}

// Reports -------------------------------------------------------------------

std::string metrics_csv(const ExperimentReport& report) {
  io::CsvWriter csv({"delta_index", "delta_frac", "delta", "residual_norm", "objective", "max_negative",
                     "max_sum_deviation", "deviation_inf", "peak_z3_lesion", "peak_z3_outside",
                     "centroid_error_cells", "support_f1", "detected", "born_error"});
  for (std::size_t k = 0; k < report.deltas.size(); ++k) {
    const DeltaResult& d = report.deltas[k];
    csv.add_row({std::to_string(k), num(d.fraction), num(d.delta), num(d.solve.residual_norm),
                 num(d.solve.objective), num(d.solve.max_negative), num(d.solve.max_sum_deviation),
                 num(d.deviation_inf), num(d.metrics.peak_in), num(d.metrics.peak_out),
                 num(d.metrics.centroid_error_cells), num(d.metrics.support_f1), d.metrics.detected ? "1" : "0",
                 num(report.born_error)});
  }
  return csv.str();
}

namespace {

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

std::string report_json(const ExperimentReport& report, const ExperimentConfig& config) {
  Json j;
  j["config_hash"] = hex(report.config_hash);
  j["status"] = report.ok() ? "ok" : "failed";
  if (!report.ok()) {
    j["failed_stage"] = report.failed_stage;
    j["error"] = report.error;
  }
  j["data_model"] = data_name(config.simulation.data);
  j["delta_reference"] = reference_name(config.reference);
  j["operator"] = storage_name(config.storage);
  j["n_pixels"] = report.n_pixels;
  j["measurement_count"] = report.measurement_count;
  j["norm_y"] = report.norm_y;
  j["norm_y_prior"] = report.norm_y_prior;
  j["norm_y_hat"] = report.norm_y_hat;
  j["discrepancy_fraction"] = report.discrepancy_fraction;
  j["born_error"] = report.born_error;
  Json stages = Json::array();
  for (const auto& s : report.stages) stages.push_back({{"name", s.name}, {"cached", s.cached}, {"seconds", s.seconds}});
  j["stages"] = stages;
  Json deltas = Json::array();
  for (const auto& d : report.deltas) {
    deltas.push_back({{"fraction", d.fraction},
                      {"delta", d.delta},
                      {"converged", d.solve.converged},
                      {"prior_feasible", d.solve.prior_feasible},
                      {"suspected_infeasible", d.solve.suspected_infeasible},
                      {"outer_iterations", d.solve.outer_iterations},
                      {"total_inner_iterations", d.solve.total_inner_iterations},
                      {"residual_norm", d.solve.residual_norm},
                      {"objective", d.solve.objective},
                      {"max_negative", d.solve.max_negative},
                      {"max_sum_deviation", d.solve.max_sum_deviation},
                      {"deviation_inf", d.deviation_inf},
                      {"peak_z3_lesion", d.metrics.peak_in},
                      {"peak_z3_outside", d.metrics.peak_out},
                      {"centroid_error_cells", finite_or_null(d.metrics.centroid_error_cells)},
                      {"support_f1", d.metrics.support_f1},
                      {"detected", d.metrics.detected},
                      {"message", d.solve.message}});
  }
  j["deltas"] = deltas;
  return j.dump(2) + "\n";
}

// Entry points --------------------------------------------------------------

ExperimentReport run_until(const ExperimentConfig& config, Stage last) {
  return execute(config, last, config.delta_fracs);
}

ExperimentReport run(const ExperimentConfig& config) { return execute(config, Stage::kSolve, config.delta_fracs); }

ExperimentReport sweep_delta(const ExperimentConfig& config, const std::vector<double>& fractions) {
  check_fractions(fractions, 2);
  return execute(config, Stage::kSolve, fractions);
}

Linearization load_linearization(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport scratch;
  Pipeline p{config, scratch, config.output_dir, {}, {}, {}, {}, {}};
  p.generate();
  p.simulate();
  p.linearize();
  return p.lin;
}

ExperimentReport report_from_disk(const ExperimentConfig& config) {
  config.validate();
  const fs::path out = config.output_dir;
  if (!stamp_matches(out / "linearize", config.simulation_hash()))
    throw std::invalid_argument("report: no linearization for this configuration under " + out.string());
  ExperimentReport report;
  report.config_hash = config.hash();
  Pipeline p{config, report, out, {}, {}, {}, {}, {}};
  p.generate();
  p.simulate();
  p.linearize();
  p.summarize_measurements();

  const double ref = config.reference == DeltaReference::kAdjusted ? p.lin.y_hat.norm() : p.lin.y.norm();
  const StackShape shape{p.lin.pair.n_pixels(), model::kMaterialCount};
  for (std::size_t k = 0;; ++k) {
    const fs::path dir = p.delta_dir(k);
    if (!fs::exists(dir / "z.umxa")) break;
    DeltaResult d;
    const Json s = Json::parse(io::read_text(dir / "summary.json"));
    d.fraction = s.at("fraction").get<double>();
    d.delta = d.fraction * ref;
    d.solve.z = io::to_real_vector(io::read_umxa(dir / "z.umxa"));
    if (static_cast<std::size_t>(d.solve.z.size()) != shape.size())
      throw std::runtime_error("report: " + (dir / "z.umxa").string() + " has the wrong length");
    d.solve.converged = s.at("converged").get<bool>();
    d.solve.prior_feasible = s.at("prior_feasible").get<bool>();
    d.solve.suspected_infeasible = s.at("suspected_infeasible").get<bool>();
    d.solve.outer_iterations = s.at("outer_iterations").get<int>();
    d.solve.total_inner_iterations = s.at("total_inner_iterations").get<int>();
    d.solve.message = s.at("message").get<std::string>();
    const solver::UnmixProblem problem{p.lin.op, p.lin.y_hat, p.lin.prior, d.delta, shape};
    const auto g = solver::evaluate_gaps(d.solve.z, problem);
    d.solve.residual_norm = g.residual_norm;
    d.solve.objective = g.objective;
    d.solve.max_negative = g.max_negative;
    d.solve.max_sum_deviation = g.max_sum_deviation;
    d.metrics = lesion_metrics(p.lin.pair, d.solve.z);
    d.deviation_inf = (d.solve.z - p.lin.prior).lpNorm<Eigen::Infinity>();
    report.deltas.push_back(std::move(d));
  }
  p.write_outputs();
  return report;
}

}  // namespace umx::experiment
