#include "mfmpc/plan.hpp"

#include "mfmpc/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mfmpc {

namespace {

using Triplet = Eigen::Triplet<double, int>;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

bool finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Accumulates standard-form QP data row by row.
class QpBuilder {
 public:
  Eigen::Index add_variable() {
    q_.push_back(0.0);
    return static_cast<Eigen::Index>(q_.size()) - 1;
  }

  void add_linear(Eigen::Index var, double coef) { q_[var] += coef; }
  void add_quadratic(Eigen::Index i, Eigen::Index j, double coef) {
    if (coef != 0.0) p_.emplace_back(static_cast<int>(i), static_cast<int>(j), coef);
  }

  /// Adds coef * u to a linear cost.
  void add_linear(const InputSlot& slot, double linear, double abs_coef) {
    if (slot.split()) {
      q_[slot.plus] += linear + abs_coef;
      q_[slot.minus] += abs_coef - linear;
    } else {
      q_[slot.plain] += linear;
    }
  }

  /// Adds (coef / 2) u^2.
  void add_square(const InputSlot& slot, double coef) {
    if (coef == 0.0) return;
    if (slot.split()) {
      add_quadratic(slot.plus, slot.plus, coef);
      add_quadratic(slot.minus, slot.minus, coef);
      add_quadratic(slot.plus, slot.minus, -coef);
      add_quadratic(slot.minus, slot.plus, -coef);
    } else {
      add_quadratic(slot.plain, slot.plain, coef);
    }
  }

  struct Row {
    std::vector<std::pair<Eigen::Index, double>> terms;
    void add(Eigen::Index var, double coef) {
      if (coef != 0.0) terms.emplace_back(var, coef);
    }
    void add(const InputSlot& slot, double coef) {
      if (slot.split()) {
        add(slot.plus, coef);
        add(slot.minus, -coef);
      } else {
        add(slot.plain, coef);
      }
    }
  };

  void add_equality(const Row& row, double rhs) {
    const int r = static_cast<int>(b_.size());
    for (const auto& [var, coef] : row.terms) a_.emplace_back(r, static_cast<int>(var), coef);
    b_.push_back(rhs);
  }

  void add_inequality(const Row& row, double rhs) {
    const int r = static_cast<int>(h_.size());
    for (const auto& [var, coef] : row.terms) g_.emplace_back(r, static_cast<int>(var), coef);
    h_.push_back(rhs);
  }

  /// lo <= row <= hi, skipping infinite sides.
  void add_range(Row row, double lo, double hi) {
    if (std::isfinite(hi)) add_inequality(row, hi);
    if (std::isfinite(lo)) {
      for (auto& term : row.terms) term.second = -term.second;
      add_inequality(row, -lo);
    }
  }

  void add_constant(double c) { constant_ += c; }

  QuadraticProgram build() const {
    const auto n = static_cast<int>(q_.size());
    QuadraticProgram qp;
    qp.q = Eigen::Map<const Eigen::VectorXd>(q_.data(), n);
    qp.P.resize(n, n);
    qp.P.setFromTriplets(p_.begin(), p_.end());
    qp.A.resize(static_cast<int>(b_.size()), n);
    qp.A.setFromTriplets(a_.begin(), a_.end());
    qp.b = Eigen::Map<const Eigen::VectorXd>(b_.data(), static_cast<Eigen::Index>(b_.size()));
    qp.G.resize(static_cast<int>(h_.size()), n);
    qp.G.setFromTriplets(g_.begin(), g_.end());
    qp.h = Eigen::Map<const Eigen::VectorXd>(h_.data(), static_cast<Eigen::Index>(h_.size()));
    qp.constant = constant_;
    return qp;
  }

 private:
  std::vector<double> q_;
  std::vector<Triplet> p_;
  std::vector<Triplet> a_;
  std::vector<double> b_;
  std::vector<Triplet> g_;
  std::vector<double> h_;
  double constant_ = 0.0;
};

InputSlot make_slot(QpBuilder& builder, bool split) {
  InputSlot slot;
  if (split) {
    slot.plus = builder.add_variable();
    slot.minus = builder.add_variable();
    QpBuilder::Row plus_row;
    plus_row.add(slot.plus, -1.0);
    builder.add_inequality(plus_row, 0.0);
    QpBuilder::Row minus_row;
    minus_row.add(slot.minus, -1.0);
    builder.add_inequality(minus_row, 0.0);
  } else {
    slot.plain = builder.add_variable();
  }
  return slot;
}

}  // namespace

AffineDynamics AffineDynamics::time_invariant(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                              const Eigen::VectorXd& c, int horizon) {
  AffineDynamics d;
  d.A.assign(static_cast<std::size_t>(horizon), A);
  d.B.assign(static_cast<std::size_t>(horizon), B);
  d.c.assign(static_cast<std::size_t>(horizon), c);
  return d;
}

void AffineDynamics::validate() const {
  require(horizon() > 0, "dynamics horizon must be positive");
  require(B.size() == A.size() && c.size() == A.size(), "dynamics must have exactly H stage triples");
  const int n = state_dim();
  const int m = input_dim();
  require(n > 0 && m > 0, "state and input dimensions must be positive");
  for (int k = 0; k < horizon(); ++k) {
    const auto s = static_cast<std::size_t>(k);
    require(A[s].rows() == n && A[s].cols() == n, "A[k] must be n x n");
    require(B[s].rows() == n && B[s].cols() == m, "B[k] must be n x m");
    require(c[s].size() == n, "c[k] must have length n");
    require(finite(A[s]) && finite(B[s]) && finite(c[s]), "dynamics entries must be finite");
  }
}

StageCost StageCost::zero(int state_dim, int input_dim, double input_lo, double input_hi) {
  const double inf = std::numeric_limits<double>::infinity();
  StageCost s;
  s.input_linear = Eigen::VectorXd::Zero(input_dim);
  s.input_abs = Eigen::VectorXd::Zero(input_dim);
  s.input_quad = Eigen::VectorXd::Zero(input_dim);
  s.input_lo = Eigen::VectorXd::Constant(input_dim, input_lo);
  s.input_hi = Eigen::VectorXd::Constant(input_dim, input_hi);
  s.state_linear = Eigen::VectorXd::Zero(state_dim);
  s.state_quad = Eigen::VectorXd::Zero(state_dim);
  s.state_lo = Eigen::VectorXd::Constant(state_dim, -inf);
  s.state_hi = Eigen::VectorXd::Constant(state_dim, inf);
  return s;
}

void StageCostSpec::validate(int state_dim, int input_dim, int horizon) const {
  require(static_cast<int>(stages.size()) == horizon, "cost must have one entry per stage");
  for (const StageCost& s : stages) {
    require(s.input_linear.size() == input_dim && s.input_abs.size() == input_dim &&
                s.input_quad.size() == input_dim && s.input_lo.size() == input_dim &&
                s.input_hi.size() == input_dim,
            "input cost vectors must have length m");
    require(s.state_linear.size() == state_dim && s.state_quad.size() == state_dim &&
                s.state_lo.size() == state_dim && s.state_hi.size() == state_dim,
            "state cost vectors must have length n");
    require(s.input_linear.allFinite(), "input linear cost must be finite");
    require(s.state_linear.allFinite(), "state linear cost must be finite");
    require(s.input_abs.allFinite() && (s.input_abs.array() >= 0.0).all(),
            "absolute-value coefficients must be finite and nonnegative");
    require(s.input_quad.allFinite() && (s.input_quad.array() >= 0.0).all(),
            "input quadratic cost must be positive semidefinite");
    require(s.state_quad.allFinite() && (s.state_quad.array() >= 0.0).all(),
            "state quadratic cost must be positive semidefinite");
    require(s.input_lo.allFinite() && s.input_hi.allFinite(), "input boxes must be finite");
    require(!s.state_lo.hasNaN() && !s.state_hi.hasNaN(), "state bounds must not be NaN");
  }
  if (!terminal.empty()) {
    require(terminal.E.cols() == state_dim, "terminal matrix must have n columns");
    require(terminal.f.size() == terminal.E.rows(), "terminal right-hand side length mismatch");
    require(finite(terminal.E) && finite(terminal.f), "terminal constraint must be finite");
  }
}

CoupledPlanProblem CoupledPlanProblem::from(const PlanProblem& problem) {
  CoupledPlanProblem coupled;
  coupled.scenarios.push_back(Scenario{problem.dynamics, problem.cost, 1.0});
  coupled.x_init = problem.x_init;
  coupled.prox = problem.prox;
  coupled.first_input_fixed = problem.first_input_fixed;
  return coupled;
}

void CoupledPlanProblem::validate() const {
  require(!scenarios.empty(), "at least one scenario is required");
  const int n = scenarios.front().dynamics.state_dim();
  const int m = scenarios.front().dynamics.input_dim();
  const int H = scenarios.front().dynamics.horizon();
  for (const Scenario& s : scenarios) {
    s.dynamics.validate();
    require(s.dynamics.state_dim() == n && s.dynamics.input_dim() == m && s.dynamics.horizon() == H,
            "all scenarios must share dimensions and horizon");
    s.cost.validate(n, m, H);
    require(std::isfinite(s.weight) && s.weight > 0.0, "scenario weights must be positive");
  }
  require(x_init.size() == n && x_init.allFinite(), "x_init must be a finite n-vector");
  require(std::isfinite(scale) && scale > 0.0, "scale must be positive");
  if (prox) {
    require(prox->center.size() == m && prox->center.allFinite(), "prox center must be a finite m-vector");
    require(std::isfinite(prox->weight) && prox->weight > 0.0, "prox weight must be positive");
  }
  if (first_input_fixed) {
    require(first_input_fixed->size() == m && first_input_fixed->allFinite(),
            "fixed first input must be a finite m-vector");
  }
}

CanonicalQp canonicalize(const CoupledPlanProblem& problem) {
  problem.validate();
  const Scenario& front = problem.scenarios.front();
  const int n = front.dynamics.state_dim();
  const int m = front.dynamics.input_dim();
  const int H = front.dynamics.horizon();
  const auto S = problem.scenarios.size();

  QpBuilder builder;
  CanonicalQp out;
  VariableLayout& layout = out.layout;
  layout.horizon = H;
  layout.state_dim = n;
  layout.input_dim = m;

  // Shared first input: costs aggregate over scenarios, boxes intersect.
  Eigen::VectorXd lin0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd abs0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd quad0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd lo0 = front.cost.stages.front().input_lo;
  Eigen::VectorXd hi0 = front.cost.stages.front().input_hi;
  for (const Scenario& s : problem.scenarios) {
    const StageCost& st = s.cost.stages.front();
    const double w = problem.scale * s.weight;
    lin0 += w * st.input_linear;
    abs0 += w * st.input_abs;
    quad0 += w * st.input_quad;
    lo0 = lo0.cwiseMax(st.input_lo);
    hi0 = hi0.cwiseMin(st.input_hi);
  }
  if (problem.prox) {
    const double rho = problem.prox->weight;
    quad0.array() += rho;
    lin0 -= rho * problem.prox->center;
    builder.add_constant(0.5 * rho * problem.prox->center.squaredNorm());
  }
  for (int j = 0; j < m; ++j) {
    const InputSlot slot = make_slot(builder, abs0[j] > 0.0);
    builder.add_linear(slot, lin0[j], abs0[j]);
    builder.add_square(slot, quad0[j]);
    QpBuilder::Row row;
    row.add(slot, 1.0);
    builder.add_range(row, lo0[j], hi0[j]);
    if (problem.first_input_fixed) builder.add_equality(row, (*problem.first_input_fixed)[j]);
    layout.first_input.push_back(slot);
  }

  layout.inputs.resize(S);
  layout.states.resize(S);
  for (std::size_t i = 0; i < S; ++i) {
    const Scenario& sc = problem.scenarios[i];
    const double w = problem.scale * sc.weight;
    auto& inputs = layout.inputs[i];
    auto& states = layout.states[i];

    for (int k = 1; k < H; ++k) {
      const StageCost& st = sc.cost.stages[static_cast<std::size_t>(k)];
      for (int j = 0; j < m; ++j) {
        const InputSlot slot = make_slot(builder, w * st.input_abs[j] > 0.0);
        builder.add_linear(slot, w * st.input_linear[j], w * st.input_abs[j]);
        builder.add_square(slot, w * st.input_quad[j]);
        QpBuilder::Row row;
        row.add(slot, 1.0);
        builder.add_range(row, st.input_lo[j], st.input_hi[j]);
        inputs.push_back(slot);
      }
    }
    for (int k = 0; k < H; ++k) {
      const StageCost& st = sc.cost.stages[static_cast<std::size_t>(k)];
      for (int j = 0; j < n; ++j) {
        const Eigen::Index var = builder.add_variable();
        builder.add_linear(var, w * st.state_linear[j]);
        builder.add_quadratic(var, var, w * st.state_quad[j]);
        QpBuilder::Row row;
        row.add(var, 1.0);
        builder.add_range(row, st.state_lo[j], st.state_hi[j]);
        states.push_back(var);
      }
    }

    // x[k+1] - A x[k] - B u[k] = c, with x[0] = x_init folded into the rhs.
    for (int k = 0; k < H; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const Eigen::MatrixXd& A = sc.dynamics.A[ks];
      const Eigen::MatrixXd& B = sc.dynamics.B[ks];
      Eigen::VectorXd rhs = sc.dynamics.c[ks];
      if (k == 0) rhs += A * problem.x_init;
      for (int r = 0; r < n; ++r) {
        QpBuilder::Row row;
        row.add(states[static_cast<std::size_t>(k * n + r)], 1.0);
        if (k > 0) {
          for (int j = 0; j < n; ++j) row.add(states[static_cast<std::size_t>((k - 1) * n + j)], -A(r, j));
        }
        for (int j = 0; j < m; ++j) {
          const InputSlot& slot = k == 0 ? layout.first_input[static_cast<std::size_t>(j)]
                                         : inputs[static_cast<std::size_t>((k - 1) * m + j)];
          if (B(r, j) != 0.0) row.add(slot, -B(r, j));
        }
        builder.add_equality(row, rhs[r]);
      }
    }

    const TerminalEquality& term = sc.cost.terminal;
    for (Eigen::Index r = 0; r < term.E.rows(); ++r) {
      QpBuilder::Row row;
      for (int j = 0; j < n; ++j) row.add(states[static_cast<std::size_t>((H - 1) * n + j)], term.E(r, j));
      builder.add_equality(row, term.f[r]);
    }
  }

  out.qp = builder.build();
  return out;
}

CanonicalQp canonicalize(const PlanProblem& problem) { return canonicalize(CoupledPlanProblem::from(problem)); }

double ExtendedValue::value() const {
  if (!finite_) throw std::logic_error("value of an infinite ExtendedValue");
  return value_;
}

double plan_cost(const Scenario& scenario, const Eigen::VectorXd& x_init, const Plan& plan) {
  (void)x_init;
  double total = 0.0;
  for (int k = 0; k < scenario.dynamics.horizon(); ++k) {
    const StageCost& st = scenario.cost.stages[static_cast<std::size_t>(k)];
    const Eigen::VectorXd u = plan.u.row(k).transpose();
    const Eigen::VectorXd x = plan.x.row(k).transpose();
    total += st.input_linear.dot(u) + st.input_abs.dot(u.cwiseAbs()) +
             0.5 * u.cwiseProduct(u).dot(st.input_quad) + st.state_linear.dot(x) +
             0.5 * x.cwiseProduct(x).dot(st.state_quad);
  }
  return scenario.weight * total;
}

CoupledPlan solve(const CanonicalQp& canonical, const CoupledPlanProblem& problem, const SolverSettings& settings) {
  CoupledPlan out;
  out.raw = solve_qp(canonical.qp, settings);
  out.status = out.raw.status;
  out.objective = out.raw.objective;
  if (out.status != SolveStatus::optimal) return out;

  const VariableLayout& layout = canonical.layout;
  const Eigen::VectorXd& z = out.raw.z;
  const int H = layout.horizon;
  const int n = layout.state_dim;
  const int m = layout.input_dim;
  out.first_input.resize(m);
  for (int j = 0; j < m; ++j) out.first_input[j] = layout.first_input[static_cast<std::size_t>(j)].value(z);

  for (std::size_t i = 0; i < problem.scenarios.size(); ++i) {
    Plan plan;
    plan.status = SolveStatus::optimal;
    plan.u.resize(H, m);
    plan.x.resize(H, n);
    plan.u.row(0) = out.first_input.transpose();
    for (int k = 1; k < H; ++k) {
      for (int j = 0; j < m; ++j) plan.u(k, j) = layout.inputs[i][static_cast<std::size_t>((k - 1) * m + j)].value(z);
    }
    for (int k = 0; k < H; ++k) {
      for (int j = 0; j < n; ++j) plan.x(k, j) = z[layout.states[i][static_cast<std::size_t>(k * n + j)]];
    }
    plan.objective = plan_cost(problem.scenarios[i], problem.x_init, plan);
    out.plans.push_back(std::move(plan));
  }
  return out;
}

CoupledPlan solve(const CoupledPlanProblem& problem, const SolverSettings& settings) {
  return solve(canonicalize(problem), problem, settings);
}

Plan solve(const PlanProblem& problem, const SolverSettings& settings) {
  const CoupledPlanProblem coupled = CoupledPlanProblem::from(problem);
  CoupledPlan result = solve(coupled, settings);
  Plan plan;
  plan.status = result.status;
  if (result.status == SolveStatus::optimal) plan = std::move(result.plans.front());
  plan.objective = result.objective;
  return plan;
}

ExtendedValue scenario_value(const Scenario& scenario, const Eigen::VectorXd& x_init, const Eigen::VectorXd& u_fixed,
                             const SolverSettings& settings) {
  const StageCost& first = scenario.cost.stages.at(0);
  require(u_fixed.size() == first.input_lo.size(), "u_fixed must have length m");
  if ((u_fixed.array() < first.input_lo.array()).any() || (u_fixed.array() > first.input_hi.array()).any()) {
    return ExtendedValue::infinite();
  }
  CoupledPlanProblem problem;
  problem.scenarios.push_back(scenario);
  problem.x_init = x_init;
  problem.first_input_fixed = u_fixed;
  const CoupledPlan plan = solve(problem, settings);
  switch (plan.status) {
    case SolveStatus::optimal: return ExtendedValue::finite(plan.objective);
    case SolveStatus::infeasible: return ExtendedValue::infinite();
    case SolveStatus::solver_failure: break;
  }
  throw SolverError("scenario value: solver failure (primal residual " + std::to_string(plan.raw.primal_residual) +
                    ", dual residual " + std::to_string(plan.raw.dual_residual) + ")");
}

SolverSettings prox_settings(const SolverSettings& base) {
  SolverSettings s = base;
  s.eps_abs = std::min(s.eps_abs, 1e-14);
  s.eps_rel = std::min(s.eps_rel, 1e-13);
  return s;
}

Eigen::VectorXd prox_step(const Scenario& scenario, const Eigen::VectorXd& x_init, const Eigen::VectorXd& u_prev,
                          double alpha, const SolverSettings& settings) {
  require(std::isfinite(alpha) && alpha > 0.0, "prox step size must be positive");
  CoupledPlanProblem problem;
  problem.scenarios.push_back(scenario);
  problem.x_init = x_init;
  problem.scale = alpha;
  problem.prox = ProxTerm{u_prev, 1.0};
  const CoupledPlan plan = solve(problem, prox_settings(settings));
  if (plan.status == SolveStatus::infeasible) throw SolverError("prox step: scenario is infeasible");
  if (plan.status != SolveStatus::optimal) throw SolverError("prox step: solver failure");
  return plan.first_input;
}

}  // namespace mfmpc
