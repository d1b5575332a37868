#include "mfmpc/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mfmpc {

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

// Largest step in [0, 1] keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

// Regularized KKT matrix
//
//   [ P + G'WG + dp I      A'   ]
//   [ A                 -dd I   ]
//
// stored as its lower triangle. The sparsity pattern is fixed at
// construction; only values change between iterations.
class KktSystem {
 public:
  KktSystem(const QuadraticProgram& qp, double primal_reg, double dual_reg)
      : nx_(static_cast<int>(qp.num_variables())),
        ne_(static_cast<int>(qp.num_equalities())),
        base_primal_reg_(primal_reg),
        base_dual_reg_(dual_reg),
        primal_reg_(primal_reg),
        dual_reg_(dual_reg) {
    const int n = nx_ + ne_;
    Eigen::SparseMatrix<double, Eigen::RowMajor, int> g_rows = qp.G;

    std::vector<Eigen::Triplet<double, int>> pattern;
    for (int j = 0; j < qp.P.outerSize(); ++j) {
      for (SparseMatrix::InnerIterator it(qp.P, j); it; ++it) {
        if (it.row() >= it.col()) pattern.emplace_back(it.row(), it.col(), 1.0);
      }
    }
    for (int i = 0; i < n; ++i) pattern.emplace_back(i, i, 1.0);
    for (int j = 0; j < qp.A.outerSize(); ++j) {
      for (SparseMatrix::InnerIterator it(qp.A, j); it; ++it) {
        pattern.emplace_back(nx_ + it.row(), it.col(), 1.0);
      }
    }
    for (int r = 0; r < g_rows.outerSize(); ++r) {
      for (decltype(g_rows)::InnerIterator a(g_rows, r); a; ++a) {
        for (decltype(g_rows)::InnerIterator b(g_rows, r); b; ++b) {
          if (a.col() >= b.col()) pattern.emplace_back(a.col(), b.col(), 1.0);
        }
      }
    }
    matrix_.resize(n, n);
    matrix_.setFromTriplets(pattern.begin(), pattern.end());
    matrix_.makeCompressed();

    for (int j = 0; j < qp.P.outerSize(); ++j) {
      for (SparseMatrix::InnerIterator it(qp.P, j); it; ++it) {
        if (it.row() >= it.col()) fixed_.push_back({slot(it.row(), it.col()), it.value()});
      }
    }
    for (int i = 0; i < n; ++i) diagonal_.push_back(slot(i, i));
    for (int j = 0; j < qp.A.outerSize(); ++j) {
      for (SparseMatrix::InnerIterator it(qp.A, j); it; ++it) {
        fixed_.push_back({slot(nx_ + it.row(), it.col()), it.value()});
      }
    }
    for (int r = 0; r < g_rows.outerSize(); ++r) {
      for (decltype(g_rows)::InnerIterator a(g_rows, r); a; ++a) {
        for (decltype(g_rows)::InnerIterator b(g_rows, r); b; ++b) {
          if (a.col() >= b.col()) {
            weighted_.push_back({slot(a.col(), b.col()), r, a.value() * b.value()});
          }
        }
      }
    }
    ldlt_.analyzePattern(matrix_);
  }

  /// Refactorizes for the scaling W = diag(weights). The regularization is
  /// raised when the pivots break down.
  bool factorize(const Eigen::VectorXd& weights) {
    for (double boost = 1.0; boost <= 1e6; boost *= 100.0) {
      primal_reg_ = base_primal_reg_ * boost;
      dual_reg_ = base_dual_reg_ * boost;
      double* values = matrix_.valuePtr();
      std::fill(values, values + matrix_.nonZeros(), 0.0);
      for (const auto& e : fixed_) values[e.slot] += e.value;
      for (const auto& e : weighted_) values[e.slot] += weights[e.row] * e.coef;
      for (int i = 0; i < nx_ + ne_; ++i) values[diagonal_[static_cast<std::size_t>(i)]] += i < nx_ ? primal_reg_ : -dual_reg_;
      ldlt_.factorize(matrix_);
      if (ldlt_.info() != Eigen::Success) continue;
      const Eigen::VectorXd d = ldlt_.vectorD();
      if (d.allFinite() && (d.array() != 0.0).all()) return true;
    }
    return false;
  }

  /// Solves the unregularized system using the regularized factorization
  /// plus iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = ldlt_.solve(rhs);
    for (int pass = 0; pass < 10; ++pass) {
      Eigen::VectorXd residual = rhs - unregularized_product(x);
      if (inf_norm(residual) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      x += ldlt_.solve(residual);
    }
    return x;
  }

 private:
  struct FixedEntry {
    Eigen::Index slot;
    double value;
  };
  struct WeightedEntry {
    Eigen::Index slot;
    int row;
    double coef;
  };

  Eigen::Index slot(int row, int col) const {
    const int* inner = matrix_.innerIndexPtr();
    const int* begin = inner + matrix_.outerIndexPtr()[col];
    const int* end = inner + matrix_.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(begin, end, row);
    if (it == end || *it != row) throw std::logic_error("KKT pattern is missing an entry");
    return it - inner;
  }

  Eigen::VectorXd unregularized_product(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out = matrix_.selfadjointView<Eigen::Lower>() * x;
    out.head(nx_) -= primal_reg_ * x.head(nx_);
    out.tail(ne_) += dual_reg_ * x.tail(ne_);
    return out;
  }

  int nx_;
  int ne_;
  double base_primal_reg_;
  double base_dual_reg_;
  double primal_reg_;
  double dual_reg_;
  SparseMatrix matrix_;
  std::vector<FixedEntry> fixed_;
  std::vector<WeightedEntry> weighted_;
  std::vector<Eigen::Index> diagonal_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

struct Iterate {
  Eigen::VectorXd z, y, s, lambda;
};

struct Direction {
  Eigen::VectorXd dz, dy, ds, dlambda;
};

}  // namespace

double QuadraticProgram::objective(const Eigen::VectorXd& z) const {
  return 0.5 * z.dot(P * z) + q.dot(z) + constant;
}

void QuadraticProgram::check_dimensions() const {
  const Eigen::Index n = q.size();
  if (P.rows() != n || P.cols() != n) throw std::invalid_argument("P must be n x n");
  if (A.cols() != n || A.rows() != b.size()) throw std::invalid_argument("A/b dimension mismatch");
  if (G.cols() != n || G.rows() != h.size()) throw std::invalid_argument("G/h dimension mismatch");
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::solver_failure: return "solver_failure";
  }
  return "unknown";
}

KktResiduals kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& y, const Eigen::VectorXd& lambda) {
  KktResiduals r;
  r.equality = inf_norm(qp.A * z - qp.b);
  const Eigen::VectorXd slack = qp.h - qp.G * z;
  r.inequality = slack.size() == 0 ? 0.0 : std::max(0.0, -slack.minCoeff());
  Eigen::VectorXd stat = qp.P * z + qp.q;
  if (y.size() > 0) stat += qp.A.transpose() * y;
  if (lambda.size() > 0) stat += qp.G.transpose() * lambda;
  r.stationarity = inf_norm(stat);
  r.dual_sign = lambda.size() == 0 ? 0.0 : std::max(0.0, -lambda.minCoeff());
  r.complementarity = lambda.size() == 0 ? 0.0 : inf_norm(lambda.cwiseProduct(slack));
  return r;
}

QpSolution solve_qp(const QuadraticProgram& qp, const SolverSettings& settings) {
  qp.check_dimensions();
  const Eigen::Index nx = qp.num_variables();
  const Eigen::Index ne = qp.num_equalities();
  const Eigen::Index ni = qp.num_inequalities();

  QpSolution out;
  KktSystem kkt(qp, 1e-9, 1e-9);

  const double q_norm = inf_norm(qp.q);
  const double b_norm = inf_norm(qp.b);
  const double h_norm = inf_norm(qp.h);

  // Starting point: least-squares solve with unit scaling, then shift slacks
  // and multipliers into the positive orthant.
  Iterate it;
  {
    if (!kkt.factorize(Eigen::VectorXd::Ones(ni))) return out;
    Eigen::VectorXd rhs(nx + ne);
    rhs.head(nx) = -qp.q;
    if (ni > 0) rhs.head(nx) += qp.G.transpose() * qp.h;
    rhs.tail(ne) = qp.b;
    const Eigen::VectorXd sol = kkt.solve(rhs);
    it.z = sol.head(nx);
    it.y = sol.tail(ne);
    it.s = qp.h - qp.G * it.z;
    it.lambda = -it.s;
    if (ni > 0) {
      const double shift_s = -it.s.minCoeff();
      if (shift_s >= 0.0) it.s.array() += 1.0 + shift_s;
      const double shift_l = -it.lambda.minCoeff();
      if (shift_l >= 0.0) it.lambda.array() += 1.0 + shift_l;
    }
  }

  auto finish = [&](SolveStatus status, const Iterate& point, int iterations) {
    out.status = status;
    out.z = point.z;
    out.y = point.y;
    out.lambda = point.lambda;
    out.iterations = iterations;
    out.objective = qp.objective(point.z);
    const KktResiduals r = kkt_residuals(qp, point.z, point.y, point.lambda);
    out.primal_residual = std::max(r.equality, r.inequality);
    out.dual_residual = r.stationarity;
    out.duality_gap = ni > 0 ? point.s.dot(point.lambda) : 0.0;
    return out;
  };

  auto acceptable = [&](const Iterate& point) {
    const KktResiduals r = kkt_residuals(qp, point.z, point.y, point.lambda);
    const double gap = ni > 0 ? point.s.dot(point.lambda) : 0.0;
    const double obj = std::abs(qp.objective(point.z));
    return r.equality <= settings.eps_accept && r.inequality <= settings.eps_accept &&
           r.stationarity <= settings.eps_accept * (1.0 + q_norm) &&
           gap <= settings.eps_accept * (1.0 + obj);
  };

  // The latest iterate that meets the acceptance level. Tight targets can
  // stall on degenerate problems; the iteration then returns this point
  // instead of whatever it has drifted to.
  std::optional<Iterate> certified;
  auto give_up = [&](const Iterate& current, int k) {
    if (certified) return finish(SolveStatus::optimal, *certified, k);
    return finish(acceptable(current) ? SolveStatus::optimal : SolveStatus::solver_failure, current, k);
  };

  Iterate last_good = it;
  for (int k = 0; k < settings.max_iterations; ++k) {
    const Eigen::VectorXd Gz = qp.G * it.z;
    const Eigen::VectorXd Az = qp.A * it.z;
    const Eigen::VectorXd Pz = qp.P * it.z;
    const Eigen::VectorXd Aty = ne > 0 ? Eigen::VectorXd(qp.A.transpose() * it.y) : Eigen::VectorXd::Zero(nx);
    const Eigen::VectorXd Gtl = ni > 0 ? Eigen::VectorXd(qp.G.transpose() * it.lambda) : Eigen::VectorXd::Zero(nx);

    const Eigen::VectorXd r_dual = Pz + qp.q + Aty + Gtl;
    const Eigen::VectorXd r_eq = Az - qp.b;
    const Eigen::VectorXd r_ineq = Gz + it.s - qp.h;
    const double gap = ni > 0 ? it.s.dot(it.lambda) : 0.0;
    const double mu = ni > 0 ? gap / static_cast<double>(ni) : 0.0;

    if (!all_finite(it.z) || !all_finite(it.y) || !all_finite(it.lambda) || !all_finite(it.s)) {
      return give_up(last_good, k);
    }
    last_good = it;
    if (acceptable(it)) certified = it;

    const double eq_tol = settings.eps_abs + settings.eps_rel * std::max({1.0, b_norm, inf_norm(Az)});
    const double ineq_tol = settings.eps_abs + settings.eps_rel * std::max({1.0, h_norm, inf_norm(Gz)});
    const double dual_tol = settings.eps_abs +
        settings.eps_rel * std::max({1.0, q_norm, inf_norm(Pz), inf_norm(Aty), inf_norm(Gtl)});
    const double gap_tol = settings.eps_abs + settings.eps_rel * std::max(1.0, std::abs(qp.objective(it.z)));
    if (inf_norm(r_eq) <= eq_tol && inf_norm(r_ineq) <= ineq_tol && inf_norm(r_dual) <= dual_tol &&
        gap <= gap_tol) {
      return finish(SolveStatus::optimal, it, k);
    }

    // Farkas certificate: A'y + G'lambda ~ 0 with b'y + h'lambda < 0 proves
    // {Az = b, Gz <= h} empty. Normalizing by |b'y + h'lambda| keeps the test
    // from firing on feasible problems whose solutions have moderate norm.
    if (ne + ni > 0) {
      const double bound = qp.b.dot(it.y) + (ni > 0 ? qp.h.dot(it.lambda) : 0.0);
      if (bound < 0.0 && inf_norm(Aty + Gtl) <= settings.eps_infeasible * -bound) {
        return finish(SolveStatus::infeasible, it, k);
      }
    }

    const Eigen::VectorXd weights = it.lambda.cwiseQuotient(it.s);
    if (!kkt.factorize(weights)) return give_up(it, k);

    auto direction = [&](const Eigen::VectorXd& r_comp) {
      // r_comp is the right-hand side of  Lambda ds + S dlambda = r_comp.
      const Eigen::VectorXd tmp = (r_comp + it.lambda.cwiseProduct(r_ineq)).cwiseQuotient(it.s);
      Eigen::VectorXd rhs(nx + ne);
      rhs.head(nx) = -r_dual;
      if (ni > 0) rhs.head(nx) -= qp.G.transpose() * tmp;
      rhs.tail(ne) = -r_eq;
      const Eigen::VectorXd sol = kkt.solve(rhs);
      Direction d;
      d.dz = sol.head(nx);
      d.dy = sol.tail(ne);
      const Eigen::VectorXd Gdz = qp.G * d.dz;
      d.dlambda = tmp + weights.cwiseProduct(Gdz);
      d.ds = -r_ineq - Gdz;
      return d;
    };

    const Direction affine = direction(-it.s.cwiseProduct(it.lambda));
    Direction step_dir = affine;
    if (ni > 0) {
      const double alpha_aff = std::min(max_step(it.s, affine.ds), max_step(it.lambda, affine.dlambda));
      const double mu_aff =
          (it.s + alpha_aff * affine.ds).dot(it.lambda + alpha_aff * affine.dlambda) / static_cast<double>(ni);
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      Eigen::VectorXd r_comp = -it.s.cwiseProduct(it.lambda) - affine.ds.cwiseProduct(affine.dlambda);
      r_comp.array() += sigma * mu;
      step_dir = direction(r_comp);
    }

    double alpha = 1.0;
    if (ni > 0) {
      alpha = std::min(1.0, 0.99 * std::min(max_step(it.s, step_dir.ds), max_step(it.lambda, step_dir.dlambda)));
    }
    if (alpha < 1e-12) return give_up(it, k);
    it.z += alpha * step_dir.dz;
    it.y += alpha * step_dir.dy;
    it.s += alpha * step_dir.ds;
    it.lambda += alpha * step_dir.dlambda;
  }
  return give_up(it, settings.max_iterations);
}

}  // namespace mfmpc
