#pragma once

// Augmented-Lagrangian solver for
//
//   minimize ||z - v||_1
//   subject to ||y_hat - A z||_2 <= delta,  z >= 0,  D z = 1
//
// with auxiliary splits w1 = z - v, w2 = A z - y_hat, w3 = z, w4 = z and
// scaled duals u1..u4. Each outer iteration minimizes the augmented
// Lagrangian jointly over (z, w1..w4) with accelerated proximal gradient
// (FISTA with backtracking), then takes one multiplier step.

#include "umx/sensing_operator.hpp"
#include "umx/types.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace umx::solver {

struct UnmixProblem {
  std::shared_ptr<const SensingOperator> op;
  ComplexVector y_hat;
  RealVector prior;  // stacked v
  double delta = 0.0;
  StackShape shape;

  void validate() const;
};

struct LineSearchOptions {
  double initial_t = 1.0;
  double backtrack_factor = 0.5;
  int max_backtracks = 60;
};

struct SolverOptions {
  double rho = 1.0;
  int max_outer = 100;
  int max_inner = 200;
  double inner_tol = 1e-6;  // relative change of the AL value
  double outer_tol = 1e-6;
  LineSearchOptions line_search;

  void validate() const;
};

struct SolverState {
  RealVector z, w1, w3, w4;
  ComplexVector w2;
  RealVector u1, u3, u4;
  ComplexVector u2;
  double rho = 1.0;
  double t = 1.0;

  // Iterates one step behind, for the momentum extrapolation.
  RealVector z_prev, w1_prev, w3_prev, w4_prev;
  ComplexVector w2_prev;

  int inner_iterations = 0;  // cumulative over all inner runs

  /// z = v, each w at the projection of its constraint value, zero duals.
  static SolverState initial(const UnmixProblem& problem, const SolverOptions& opts);
  void validate(const UnmixProblem& problem) const;
};

struct Gradients {
  RealVector gz, gw1, gw3, gw4;
  ComplexVector gw2;
};

/// Thrown when backtracking cannot find an acceptable step.
class SolverStall : public NumericalFailure {
 public:
  SolverStall(const std::string& what, SolverState last)
      : NumericalFailure(what), last_(std::move(last)) {}
  const SolverState& last_state() const { return last_; }

 private:
  SolverState last_;
};

/// (rho/2) * sum of the four squared penalty residuals at the state's
/// current (z, w) and duals.
double smooth_value(const SolverState& state, const UnmixProblem& problem);

/// ||w1||_1 + smooth_value. The indicator terms are zero because every
/// iterate produced by fista_inner is feasible for its own set.
double augmented_lagrangian(const SolverState& state, const UnmixProblem& problem);

/// Gradient of smooth_value with respect to z and each w_r.
Gradients smooth_gradient(const SolverState& state, const UnmixProblem& problem);

/// FISTA extrapolation weight at inner iteration k (1-based): (k - 2) / (k + 1).
double momentum_coefficient(int k);

/// One inner FISTA run on the augmented Lagrangian with the duals fixed.
/// If al_trace is non-null the AL value after every iteration is appended.
SolverState fista_inner(SolverState state, const UnmixProblem& problem, const SolverOptions& opts,
                        std::vector<double>* al_trace = nullptr);

/// Scaled multiplier step: u_r += (constraint residual r).
SolverState dual_update(SolverState state, const UnmixProblem& problem);

struct FeasibilityGaps {
  double residual_norm = 0.0;      // ||y_hat - A z||_2
  double max_negative = 0.0;       // max(0, -min z)
  double max_sum_deviation = 0.0;  // ||D z - 1||_inf
  double objective = 0.0;          // ||z - v||_1
};

FeasibilityGaps evaluate_gaps(const RealVector& z, const UnmixProblem& problem);

struct OuterTraceEntry {
  double objective = 0.0;
  double residual_norm = 0.0;
  double max_constraint_residual = 0.0;
  int inner_iterations = 0;
};

struct SolveReport {
  RealVector z;
  bool converged = false;
  bool prior_feasible = false;        // ||y_hat - A v|| <= delta: z = v returned directly
  bool suspected_infeasible = false;  // residual floor stayed above delta with stalled duals
  int outer_iterations = 0;
  int total_inner_iterations = 0;
  double residual_norm = 0.0;
  double objective = 0.0;
  double max_negative = 0.0;
  double max_sum_deviation = 0.0;
  std::vector<OuterTraceEntry> trace;
  std::string message;
};

/// Full augmented-Lagrangian solve. The operator and data are rescaled
/// internally so that the real operator norm is one; reported quantities are
/// in the caller's units. The returned z is the Euclidean projection of the
/// final iterate onto the per-pixel probability simplex, so D z = 1 and
/// z >= 0 hold to roundoff. Non-convergence is reported, not thrown.
SolveReport solve(const UnmixProblem& problem, const SolverOptions& opts = {});

/// Euclidean projection of each pixel's R proportions onto the probability
/// simplex.
RealVector project_pixel_simplex(const RealVector& x, const StackShape& shape);

// Restricted isometry constant -----------------------------------------------

class TooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exact delta_S over all S-column submatrices of A with columns normalized
/// to unit length. Throws TooLarge when C(cols, S) exceeds max_subsets.
double estimate_ric(const SensingOperator& op, int sparsity, std::uint64_t max_subsets = 5'000'000);
double estimate_ric(const Eigen::MatrixXcd& matrix, int sparsity, std::uint64_t max_subsets = 5'000'000);

}  // namespace umx::solver
