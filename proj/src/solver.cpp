#include "umx/solver.hpp"

#include "umx/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace umx::solver {

namespace {

using Index = Eigen::Index;

bool all_finite(const RealVector& x) { return x.allFinite(); }
bool all_finite(const ComplexVector& x) { return x.real().allFinite() && x.imag().allFinite(); }

// Penalty residuals at a point (z, w) with the duals of `s`. `az` is A z.
struct Residuals {
  RealVector r1, r3, r4;
  ComplexVector r2;

  double squared_norm() const {
    return r1.squaredNorm() + r2.squaredNorm() + r3.squaredNorm() + r4.squaredNorm();
  }
};

Residuals penalty_residuals(const RealVector& z, const RealVector& w1, const ComplexVector& w2,
                            const RealVector& w3, const RealVector& w4, const ComplexVector& az,
                            const SolverState& s, const UnmixProblem& p) {
  Residuals r;
  r.r1 = w1 - z + p.prior + s.u1;
  r.r2 = w2 + p.y_hat - az + s.u2;
  r.r3 = w3 - z + s.u3;
  r.r4 = w4 - z + s.u4;
  return r;
}

void check_dims(const SolverState& s, const UnmixProblem& p) {
  const auto n = static_cast<Index>(p.shape.size());
  const Index m = p.y_hat.size();
  auto real_ok = [n](const RealVector& x) { return x.size() == n; };
  if (!real_ok(s.z) || !real_ok(s.w1) || !real_ok(s.w3) || !real_ok(s.w4) || !real_ok(s.u1) ||
      !real_ok(s.u3) || !real_ok(s.u4))
    throw std::invalid_argument("solver state: real block length does not match R*N");
  if (s.w2.size() != m || s.u2.size() != m)
    throw std::invalid_argument("solver state: complex block length does not match M");
}

}  // namespace

void UnmixProblem::validate() const {
  shape.validate();
  if (!op) throw std::invalid_argument("UnmixProblem: missing operator");
  if (static_cast<std::size_t>(op->cols()) != shape.size())
    throw std::invalid_argument("UnmixProblem: operator column count must equal R*N");
  if (op->rows() != y_hat.size())
    throw std::invalid_argument("UnmixProblem: y_hat length must equal operator row count");
  if (static_cast<std::size_t>(prior.size()) != shape.size())
    throw std::invalid_argument("UnmixProblem: prior length must equal R*N");
  if (!(delta >= 0.0) || !std::isfinite(delta))
    throw std::invalid_argument("UnmixProblem: delta must be finite and nonnegative");
  if (!all_finite(prior) || !all_finite(y_hat))
    throw std::invalid_argument("UnmixProblem: non-finite data");
}

void SolverOptions::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("SolverOptions: rho must be positive");
  if (max_outer <= 0 || max_inner <= 0)
    throw std::invalid_argument("SolverOptions: iteration limits must be positive");
  if (!(inner_tol >= 0.0) || !(outer_tol >= 0.0))
    throw std::invalid_argument("SolverOptions: tolerances must be nonnegative");
  if (!(line_search.initial_t > 0.0))
    throw std::invalid_argument("SolverOptions: initial step must be positive");
  if (!(line_search.backtrack_factor > 0.0 && line_search.backtrack_factor < 1.0))
    throw std::invalid_argument("SolverOptions: backtrack factor must lie in (0, 1)");
  if (line_search.max_backtracks <= 0)
    throw std::invalid_argument("SolverOptions: max_backtracks must be positive");
}

SolverState SolverState::initial(const UnmixProblem& problem, const SolverOptions& opts) {
  problem.validate();
  opts.validate();
  const auto n = static_cast<Index>(problem.shape.size());
  const Index m = problem.y_hat.size();
  SolverState s;
  s.rho = opts.rho;
  s.t = opts.line_search.initial_t;
  s.z = problem.prior;
  s.w1 = RealVector::Zero(n);
  s.w2 = prox::project_l2_ball(problem.op->apply_real(problem.prior) - problem.y_hat, problem.delta);
  s.w3 = prox::project_nonneg(problem.prior);
  s.w4 = prox::project_sum_one(problem.prior, problem.shape);
  s.u1 = RealVector::Zero(n);
  s.u3 = RealVector::Zero(n);
  s.u4 = RealVector::Zero(n);
  s.u2 = ComplexVector::Zero(m);
  s.z_prev = s.z;
  s.w1_prev = s.w1;
  s.w2_prev = s.w2;
  s.w3_prev = s.w3;
  s.w4_prev = s.w4;
  return s;
}

void SolverState::validate(const UnmixProblem& problem) const {
  check_dims(*this, problem);
  if (!(rho > 0.0)) throw std::invalid_argument("solver state: rho must be positive");
  if (!(t > 0.0)) throw std::invalid_argument("solver state: step must be positive");
  const auto n = static_cast<Index>(problem.shape.size());
  if (z_prev.size() != n || w1_prev.size() != n || w3_prev.size() != n || w4_prev.size() != n ||
      w2_prev.size() != problem.y_hat.size())
    throw std::invalid_argument("solver state: momentum history has inconsistent dimensions");
}

double smooth_value(const SolverState& s, const UnmixProblem& p) {
  check_dims(s, p);
  const ComplexVector az = p.op->apply_real(s.z);
  return 0.5 * s.rho * penalty_residuals(s.z, s.w1, s.w2, s.w3, s.w4, az, s, p).squared_norm();
}

double augmented_lagrangian(const SolverState& s, const UnmixProblem& p) {
  return s.w1.lpNorm<1>() + smooth_value(s, p);
}

Gradients smooth_gradient(const SolverState& s, const UnmixProblem& p) {
  check_dims(s, p);
  const ComplexVector az = p.op->apply_real(s.z);
  const Residuals r = penalty_residuals(s.z, s.w1, s.w2, s.w3, s.w4, az, s, p);
  Gradients g;
  g.gz = -s.rho * (r.r1 + p.op->adjoint_real(r.r2) + r.r3 + r.r4);
  g.gw1 = s.rho * r.r1;
  g.gw2 = s.rho * r.r2;
  g.gw3 = s.rho * r.r3;
  g.gw4 = s.rho * r.r4;
  return g;
}

double momentum_coefficient(int k) {
  return static_cast<double>(k - 2) / static_cast<double>(k + 1);
}

SolverState fista_inner(SolverState s, const UnmixProblem& p, const SolverOptions& opts,
                        std::vector<double>* al_trace) {
  s.validate(p);
  const double rho = s.rho;
  const auto& op = *p.op;
  const auto& ls = opts.line_search;

  // x^(0) = x^(-1): the run starts without momentum.
  s.z_prev = s.z;
  s.w1_prev = s.w1;
  s.w2_prev = s.w2;
  s.w3_prev = s.w3;
  s.w4_prev = s.w4;

  ComplexVector az = op.apply_real(s.z);
  ComplexVector az_prev = az;

  auto al_at = [&](const SolverState& st, const ComplexVector& az_now) {
    return st.w1.lpNorm<1>() +
           0.5 * rho * penalty_residuals(st.z, st.w1, st.w2, st.w3, st.w4, az_now, st, p).squared_norm();
  };

  double al_prev = al_at(s, az);
  double t = s.t;

  for (int k = 1; k <= opts.max_inner; ++k) {
    const double beta = momentum_coefficient(k);
    const RealVector zh = s.z + beta * (s.z - s.z_prev);
    const RealVector w1h = s.w1 + beta * (s.w1 - s.w1_prev);
    const ComplexVector w2h = s.w2 + beta * (s.w2 - s.w2_prev);
    const RealVector w3h = s.w3 + beta * (s.w3 - s.w3_prev);
    const RealVector w4h = s.w4 + beta * (s.w4 - s.w4_prev);
    const ComplexVector azh = az + beta * (az - az_prev);

    const Residuals r = penalty_residuals(zh, w1h, w2h, w3h, w4h, azh, s, p);
    const RealVector gz = -rho * (r.r1 + op.adjoint_real(r.r2) + r.r3 + r.r4);

    RealVector z_new, w1_new, w3_new, w4_new;
    ComplexVector w2_new, adz;
    int backtracks = 0;
    for (;;) {
      z_new = zh - t * gz;
      w1_new = prox::soft_threshold(w1h - (t * rho) * r.r1, t);
      w2_new = prox::project_l2_ball(w2h - (t * rho) * r.r2, p.delta);
      w3_new = prox::project_nonneg(w3h - (t * rho) * r.r3);
      w4_new = prox::project_sum_one(w4h - (t * rho) * r.r4, p.shape);

      const RealVector dz = z_new - zh;
      const RealVector dw1 = w1_new - w1h;
      const ComplexVector dw2 = w2_new - w2h;
      const RealVector dw3 = w3_new - w3h;
      const RealVector dw4 = w4_new - w4h;
      adz = op.apply_real(dz);

      // f is quadratic, so f(x+) - f(xh) - <grad, d> = (rho/2) ||B d||^2 exactly.
      const double curvature = 0.5 * rho *
                               ((dw1 - dz).squaredNorm() + (dw2 - adz).squaredNorm() +
                                (dw3 - dz).squaredNorm() + (dw4 - dz).squaredNorm());
      const double step_sq = dz.squaredNorm() + dw1.squaredNorm() + dw2.squaredNorm() +
                             dw3.squaredNorm() + dw4.squaredNorm();
      const bool finite = std::isfinite(curvature) && std::isfinite(step_sq);
      if (finite && curvature <= step_sq / (2.0 * t) * (1.0 + 1e-12)) break;

      t *= ls.backtrack_factor;
      if (++backtracks > ls.max_backtracks) {
        s.t = t;
        throw SolverStall("fista_inner: line search found no acceptable step after " +
                              std::to_string(ls.max_backtracks) + " backtracks",
                          s);
      }
    }

    s.z_prev = std::move(s.z);
    s.w1_prev = std::move(s.w1);
    s.w2_prev = std::move(s.w2);
    s.w3_prev = std::move(s.w3);
    s.w4_prev = std::move(s.w4);
    s.z = std::move(z_new);
    s.w1 = std::move(w1_new);
    s.w2 = std::move(w2_new);
    s.w3 = std::move(w3_new);
    s.w4 = std::move(w4_new);
    az_prev = az;
    az = azh + adz;
    ++s.inner_iterations;

    const double al = al_at(s, az);
    if (al_trace) al_trace->push_back(al);
    const double change = std::abs(al - al_prev);
    al_prev = al;
    if (k > 1 && change <= opts.inner_tol * std::max(std::abs(al), std::numeric_limits<double>::min()))
      break;
  }
  s.t = t;
  return s;
}

SolverState dual_update(SolverState s, const UnmixProblem& p) {
  check_dims(s, p);
  const ComplexVector az = p.op->apply_real(s.z);
  s.u1 += s.w1 - s.z + p.prior;
  s.u2 += s.w2 + p.y_hat - az;
  s.u3 += s.w3 - s.z;
  s.u4 += s.w4 - s.z;
  return s;
}

FeasibilityGaps evaluate_gaps(const RealVector& z, const UnmixProblem& p) {
  FeasibilityGaps g;
  g.residual_norm = (p.y_hat - p.op->apply_real(z)).norm();
  g.max_negative = std::max(0.0, -z.minCoeff());
  const auto n = static_cast<Index>(p.shape.n_pixels);
  RealVector sums = RealVector::Zero(n);
  for (std::size_t r = 0; r < p.shape.n_materials; ++r)
    sums += z.segment(static_cast<Index>(r) * n, n);
  g.max_sum_deviation = (sums.array() - 1.0).abs().maxCoeff();
  g.objective = (z - p.prior).lpNorm<1>();
  return g;
}

RealVector project_pixel_simplex(const RealVector& x, const StackShape& shape) {
  shape.validate();
  if (static_cast<std::size_t>(x.size()) != shape.size())
    throw std::invalid_argument("project_pixel_simplex: length mismatch");
  const std::size_t n = shape.n_pixels;
  const std::size_t r = shape.n_materials;
  RealVector out(x.size());
  std::vector<double> sorted(r);
  for (std::size_t px = 0; px < n; ++px) {
    for (std::size_t m = 0; m < r; ++m) sorted[m] = x[static_cast<Index>(shape.index(m, px))];
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    // Largest k with sorted[k-1] - (cumsum_k - 1)/k > 0.
    double cumsum = 0.0;
    double tau = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      cumsum += sorted[k];
      const double candidate = (cumsum - 1.0) / static_cast<double>(k + 1);
      if (sorted[k] - candidate > 0.0) tau = candidate;
    }
    for (std::size_t m = 0; m < r; ++m) {
      const auto i = static_cast<Index>(shape.index(m, px));
      out[i] = std::max(x[i] - tau, 0.0);
    }
  }
  return out;
}

SolveReport solve(const UnmixProblem& problem, const SolverOptions& opts) {
  problem.validate();
  opts.validate();

  SolveReport report;
  const double v_norm = problem.prior.norm();

  if ((problem.y_hat - problem.op->apply_real(problem.prior)).norm() <= problem.delta) {
    report.z = problem.prior;
    report.converged = true;
    report.prior_feasible = true;
    const FeasibilityGaps g = evaluate_gaps(report.z, problem);
    report.residual_norm = g.residual_norm;
    report.objective = g.objective;
    report.max_negative = g.max_negative;
    report.max_sum_deviation = g.max_sum_deviation;
    report.message = "prior satisfies the residual budget";
    return report;
  }

  // Work with ||A|| = 1; z is unchanged by a common rescaling of (A, y_hat, delta).
  const double op_norm = real_operator_norm(*problem.op);
  if (!(op_norm > 0.0) || !std::isfinite(op_norm))
    throw NumericalFailure("solve: operator has zero or non-finite norm");
  const double scale = 1.0 / op_norm;
  UnmixProblem scaled = problem;
  scaled.op = std::make_shared<ScaledOperator>(problem.op, scale);
  scaled.y_hat = problem.y_hat * scale;
  scaled.delta = problem.delta * scale;

  SolverState state = SolverState::initial(scaled, opts);
  const double stop = opts.outer_tol * (1.0 + v_norm);

  RealVector best_z = project_pixel_simplex(state.z, problem.shape);
  double best_excess = std::numeric_limits<double>::infinity();
  RealVector z_last = state.z;
  std::vector<double> r2_history;

  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    state = fista_inner(std::move(state), scaled, opts);
    state = dual_update(std::move(state), scaled);

    const ComplexVector az = scaled.op->apply_real(state.z);
    const double r1 = (state.w1 - state.z + scaled.prior).norm();
    const double r2 = (state.w2 + scaled.y_hat - az).norm();
    const double r3 = (state.w3 - state.z).norm();
    const double r4 = (state.w4 - state.z).norm();
    const double primal = std::max({r1, r2, r3, r4});
    const double dual = state.rho * (state.z - z_last).norm();
    z_last = state.z;
    r2_history.push_back(r2);

    const RealVector polished = project_pixel_simplex(state.z, problem.shape);
    const FeasibilityGaps g = evaluate_gaps(polished, problem);
    report.trace.push_back({g.objective, g.residual_norm, primal, state.inner_iterations});
    report.outer_iterations = outer;

    const double excess = std::max(0.0, g.residual_norm - problem.delta);
    if (excess <= best_excess) {
      best_excess = excess;
      best_z = polished;
    }

    if (primal <= stop && dual <= stop) {
      report.converged = true;
      best_z = polished;
      break;
    }

    // Persistent residual floor above the budget with duals growing at a
    // constant rate: the ball and the simplex product do not intersect.
    constexpr std::size_t window = 10;
    if (outer >= 20 && r2_history.size() > window) {
      const double then = r2_history[r2_history.size() - 1 - window];
      report.suspected_infeasible = r2 > stop && std::abs(then - r2) <= 0.01 * r2 && excess > 0.0;
    }
  }

  report.z = best_z;
  report.total_inner_iterations = state.inner_iterations;
  const FeasibilityGaps g = evaluate_gaps(report.z, problem);
  report.residual_norm = g.residual_norm;
  report.objective = g.objective;
  report.max_negative = g.max_negative;
  report.max_sum_deviation = g.max_sum_deviation;
  if (report.converged)
    report.message = "converged";
  else
    report.message = report.suspected_infeasible ? "not converged; problem looks infeasible"
                                                 : "not converged within max_outer";
  return report;
}

}  // namespace umx::solver
