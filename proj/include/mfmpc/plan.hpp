#pragma once

#include "mfmpc/qp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace mfmpc {

/// Time-varying affine dynamics x[k+1] = A[k] x[k] + B[k] u[k] + c[k] over a
/// horizon of H stages.
struct AffineDynamics {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> B;
  std::vector<Eigen::VectorXd> c;

  [[nodiscard]] int horizon() const { return static_cast<int>(A.size()); }
  [[nodiscard]] int state_dim() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }
  [[nodiscard]] int input_dim() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }

  /// Same (A, B, c) at every stage.
  static AffineDynamics time_invariant(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                       const Eigen::VectorXd& c, int horizon);

  void validate() const;
};

/// Cost and constraints of one stage. Input terms act on u[k], state terms on
/// the state reached after the stage, x[k+1]. All quadratic terms are diagonal.
struct StageCost {
  Eigen::VectorXd input_linear;
  Eigen::VectorXd input_abs;   // coefficients of |u|, entrywise, >= 0
  Eigen::VectorXd input_quad;  // diagonal of the quadratic form 1/2 u'Ru, >= 0
  Eigen::VectorXd input_lo;    // finite
  Eigen::VectorXd input_hi;    // finite
  Eigen::VectorXd state_linear;
  Eigen::VectorXd state_quad;  // diagonal, >= 0
  Eigen::VectorXd state_lo;    // may be -inf
  Eigen::VectorXd state_hi;    // may be +inf

  /// Zero costs, input box [lo, hi] for every input and a free state.
  static StageCost zero(int state_dim, int input_dim, double input_lo, double input_hi);
};

/// E x[H] = f on the last planned state. An empty E means no constraint.
struct TerminalEquality {
  Eigen::MatrixXd E;
  Eigen::VectorXd f;

  [[nodiscard]] bool empty() const { return E.rows() == 0; }
};

/// Convex stage-separable cost with finite input boxes. Finite input boxes
/// make every scenario value function the sum of a real-valued convex
/// function and the indicator of a bounded convex set.
struct StageCostSpec {
  std::vector<StageCost> stages;
  TerminalEquality terminal;

  void validate(int state_dim, int input_dim, int horizon) const;
};

/// (weight / 2) ||u_first - center||^2 on the first input only.
struct ProxTerm {
  Eigen::VectorXd center;
  double weight = 1.0;
};

struct Scenario {
  AffineDynamics dynamics;
  StageCostSpec cost;
  double weight = 1.0;
};

/// A single-forecast planning problem.
struct PlanProblem {
  AffineDynamics dynamics;
  StageCostSpec cost;
  Eigen::VectorXd x_init;
  std::optional<ProxTerm> prox;
  std::optional<Eigen::VectorXd> first_input_fixed;
};

/// Several scenario plans that share their first input:
///
///   minimize  scale * sum_i w_i G_i(x_init, x^i, u^i) + prox(u_first)
///   s.t.      per-scenario dynamics and constraints, u^i[0] = u_first.
///
/// A PlanProblem is the one-scenario, unit-scale case.
struct CoupledPlanProblem {
  std::vector<Scenario> scenarios;
  Eigen::VectorXd x_init;
  double scale = 1.0;
  std::optional<ProxTerm> prox;
  std::optional<Eigen::VectorXd> first_input_fixed;

  static CoupledPlanProblem from(const PlanProblem& problem);
  void validate() const;
};

/// Position of one input entry in the canonical variable vector. Entries
/// with a nonzero absolute-value cost are split as u = u_plus - u_minus.
struct InputSlot {
  Eigen::Index plain = -1;
  Eigen::Index plus = -1;
  Eigen::Index minus = -1;

  [[nodiscard]] bool split() const { return plus >= 0; }
  [[nodiscard]] double value(const Eigen::VectorXd& z) const { return split() ? z[plus] - z[minus] : z[plain]; }
};

/// Maps canonical variables back to per-scenario inputs and states.
struct VariableLayout {
  int horizon = 0;
  int state_dim = 0;
  int input_dim = 0;
  std::vector<InputSlot> first_input;                      // shared u[0]
  std::vector<std::vector<InputSlot>> inputs;              // [scenario][(k-1)*m + j], k >= 1
  std::vector<std::vector<Eigen::Index>> states;           // [scenario][k*n + j], state x[k+1]
};

struct CanonicalQp {
  QuadraticProgram qp;
  VariableLayout layout;
};

/// Lowers a coupled plan problem to standard-form QP. Absolute values are
/// split into nonnegative parts with costs (linear + abs) and (abs - linear).
[[nodiscard]] CanonicalQp canonicalize(const CoupledPlanProblem& problem);
[[nodiscard]] CanonicalQp canonicalize(const PlanProblem& problem);

/// One scenario's plan. u is H x m (u[0] .. u[H-1]), x is H x n (x[1] .. x[H]).
struct Plan {
  Eigen::MatrixXd u;
  Eigen::MatrixXd x;
  double objective = 0.0;  // this scenario's weighted cost w_i G_i, unscaled
  SolveStatus status = SolveStatus::solver_failure;
};

struct CoupledPlan {
  SolveStatus status = SolveStatus::solver_failure;
  Eigen::VectorXd first_input;
  std::vector<Plan> plans;
  double objective = 0.0;  // full objective including scale and prox
  QpSolution raw;
};

[[nodiscard]] CoupledPlan solve(const CanonicalQp& canonical, const CoupledPlanProblem& problem,
                                const SolverSettings& settings = {});
[[nodiscard]] CoupledPlan solve(const CoupledPlanProblem& problem, const SolverSettings& settings = {});
[[nodiscard]] Plan solve(const PlanProblem& problem, const SolverSettings& settings = {});

/// Weighted cost w G(x_init, x, u) of a plan, evaluated directly.
[[nodiscard]] double plan_cost(const Scenario& scenario, const Eigen::VectorXd& x_init, const Plan& plan);

/// Extended-real value; infinite marks an infeasible first input.
class ExtendedValue {
 public:
  static ExtendedValue infinite() { return ExtendedValue(); }
  static ExtendedValue finite(double v) { return ExtendedValue(v); }

  [[nodiscard]] bool is_finite() const { return finite_; }
  /// Throws std::logic_error when infinite.
  [[nodiscard]] double value() const;

 private:
  ExtendedValue() = default;
  explicit ExtendedValue(double v) : value_(v), finite_(true) {}
  double value_ = 0.0;
  bool finite_ = false;
};

/// F(u) = w * (optimal cost of the scenario with its first input fixed at u).
/// Throws SolverError when the solver fails.
[[nodiscard]] ExtendedValue scenario_value(const Scenario& scenario, const Eigen::VectorXd& x_init,
                                           const Eigen::VectorXd& u_fixed, const SolverSettings& settings = {});

/// Settings for problems with a proximal term. When the prox center sits on
/// a face of the feasible set the first-input error shrinks only like the
/// square root of the duality gap, so the gap is driven much lower.
[[nodiscard]] SolverSettings prox_settings(const SolverSettings& base);

/// argmin_u  alpha * F(u) + 1/2 ||u - u_prev||^2, computed by solving the
/// scenario's plan problem with a proximal term on the first input.
/// Throws SolverError when the scenario is infeasible or the solver fails.
[[nodiscard]] Eigen::VectorXd prox_step(const Scenario& scenario, const Eigen::VectorXd& x_init,
                                        const Eigen::VectorXd& u_prev, double alpha,
                                        const SolverSettings& settings = {});

}  // namespace mfmpc
