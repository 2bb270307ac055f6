#pragma once

#include "bjmd/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bjmd {

// ---------------------------------------------------------------------------
// One coefficient-column subproblem:
//   minimize  0.5 h'Qh - b'h - sum_k alpha_k ln h_k
//   subject   1'h = 1,  h > 0
// with Q = W'W, b = W'x and alpha_k = sigma2 * (alpha0_k - 1). alpha is a
// fixed prior weight, not a homotopy parameter, so the KKT system is solved
// directly by damped Newton steps.
// ---------------------------------------------------------------------------

struct ColumnProblem {
  Matrix Q;      // K x K symmetric
  Vector b;      // K
  Vector alpha;  // K, nonnegative barrier weights
  double scale = 1.0;  // sigma2 the problem was scaled with

  int K() const { return static_cast<int>(b.size()); }
};

struct IpIterate {
  Vector h;   // primal, strictly positive
  double mu;  // equality multiplier
  Vector s;   // duals, strictly positive whenever alpha > 0
};

struct ColumnResult {
  Vector h;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  double kkt_norm = 0.0;
};

inline void check_column_problem(const ColumnProblem& p) {
  const int k = p.K();
  if (k < 1) throw InvariantViolationError("column problem needs K >= 1");
  if (p.Q.rows() != k || p.Q.cols() != k)
    throw DimensionMismatchError("column problem: Q must be K x K");
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw InvariantViolationError("column problem: Q must be symmetric within 1e-10");
  if (p.alpha.size() != k)
    throw DimensionMismatchError("column problem: alpha must have K entries");
  if ((p.alpha.array() < 0.0).any())
    throw InvariantViolationError("column problem: alpha must be nonnegative");
}

/// Objective of the column subproblem at an interior point.
inline double column_objective(const ColumnProblem& p, const Vector& h) {
  double obj = 0.5 * h.dot(p.Q * h) - p.b.dot(h);
  for (int k = 0; k < p.K(); ++k)
    if (p.alpha[k] > 0.0) obj -= p.alpha[k] * std::log(h[k]);
  return obj;
}

/// Stacked KKT residual [Qh - mu*1 - b - s ; 1'h - 1 ; diag(h)s - alpha].
inline Vector kkt_residual(const ColumnProblem& p, const IpIterate& it) {
  const int k = p.K();
  Vector r(2 * k + 1);
  r.head(k) = p.Q * it.h - Vector::Constant(k, it.mu) - p.b - it.s;
  r[k] = it.h.sum() - 1.0;
  r.tail(k) = it.h.cwiseProduct(it.s) - p.alpha;
  return r;
}

/// Newton direction d solving J d = -F with the block Jacobian
/// [[Q, -1, -I], [1', 0, 0'], [diag(s), 0, diag(h)]].
/// Throws SolverFailureError when the Jacobian is numerically singular.
inline Vector newton_direction(const ColumnProblem& p, const IpIterate& it) {
  const int k = p.K();
  const int n = 2 * k + 1;
  Matrix jac = Matrix::Zero(n, n);
  jac.topLeftCorner(k, k) = p.Q;
  jac.block(0, k, k, 1).setConstant(-1.0);
  jac.topRightCorner(k, k) = -Matrix::Identity(k, k);
  jac.block(k, 0, 1, k).setOnes();
  jac.bottomLeftCorner(k, k) = it.s.asDiagonal();
  jac.bottomRightCorner(k, k) = it.h.asDiagonal();

  const Vector rhs = -kkt_residual(p, it);
  Eigen::PartialPivLU<Matrix> lu(jac);
  Vector d = lu.solve(rhs);
  if (!d.allFinite() || (jac * d - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
    throw SolverFailureError("simplex_qp: singular KKT Jacobian");
  return d;
}

/// Strictly interior starting point: uniform h, complementarity-consistent
/// duals with a small floor.
inline IpIterate init_interior(int k, const Vector& alpha) {
  IpIterate it;
  it.h = Vector::Constant(k, 1.0 / static_cast<double>(k));
  it.s = (alpha.array() * static_cast<double>(k)).max(1e-3).matrix();
  it.mu = 0.0;
  return it;
}

namespace detail {

/// Largest step in [0, cap] keeping v + rho*dv strictly positive.
inline double fraction_to_boundary(const Vector& v, const Vector& dv, double cap) {
  double rho = cap;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) rho = std::min(rho, -v[i] / dv[i]);
  return rho;
}

}  // namespace detail

/// Damped-Newton interior point for one ColumnProblem. Optionally warm-started
/// from `init` (projected into the interior). Stops once the objective change
/// falls below ip_tol*(1+|obj|) and the KKT residual is polished below
/// ip_kkt_tol, or at ip_max_iters; in the latter case the best iterate seen is
/// returned with converged = false.
inline ColumnResult solve_problem(const ColumnProblem& p, const Vector* init,
                                  const SolverConfig& cfg) {
  validate_config(cfg);
  check_column_problem(p);
  const int k = p.K();

  ColumnResult res;
  if (k == 1) {
    // The simplex has a single point.
    res.h = Vector::Ones(1);
    res.converged = true;
    res.objective = column_objective(p, res.h);
    IpIterate it{res.h, p.Q(0, 0) - p.b[0] - p.alpha[0], Vector::Constant(1, p.alpha[0])};
    res.kkt_norm = kkt_residual(p, it).norm();
    return res;
  }

  IpIterate it = init_interior(k, p.alpha);
  if (init != nullptr && init->size() == k) {
    Vector h0 = init->cwiseMax(1e-10);
    h0 /= h0.sum();
    it.h = h0;
    it.s = (p.alpha.array() / h0.array()).max(1e-3).matrix();
  }

  double obj = column_objective(p, it.h);
  Vector best_h = it.h;
  double best_obj = obj;

  bool converged = false;
  int iter = 0;
  for (; iter < cfg.ip_max_iters; ++iter) {
    Vector d;
    try {
      d = newton_direction(p, it);
    } catch (const SolverFailureError&) {
      ColumnProblem reg = p;
      reg.Q.diagonal().array() += 1e-10;
      d = newton_direction(reg, it);
    }
    const auto dh = d.head(k);
    const double dmu = d[k];
    const auto ds = d.tail(k);

    double rho = detail::fraction_to_boundary(it.h, dh, 1.0 / cfg.ip_eta);
    rho = detail::fraction_to_boundary(it.s, ds, rho);
    rho = std::min(1.0, cfg.ip_eta * rho);

    // Keep the accepted iterate non-increasing in the subproblem objective.
    double new_obj = 0.0;
    int backtracks = 0;
    for (;;) {
      new_obj = column_objective(p, it.h + rho * dh);
      if (new_obj <= obj + 1e-12 * (1.0 + std::abs(obj))) break;
      rho *= 0.5;
      if (++backtracks > 40) break;
    }
    if (backtracks > 40) break;  // stalled; best iterate already recorded

    it.h += rho * dh;
    it.mu += rho * dmu;
    it.s += rho * ds;

    const double change = std::abs(obj - new_obj);
    obj = new_obj;
    if (obj < best_obj) {
      best_obj = obj;
      best_h = it.h;
    }
    if (change <= cfg.ip_tol * (1.0 + std::abs(obj)) &&
        kkt_residual(p, it).norm() <= cfg.ip_kkt_tol) {
      converged = true;
      ++iter;
      break;
    }
  }

  res.h = best_h.cwiseMax(cfg.h_floor);
  res.converged = converged;
  res.iterations = iter;
  res.objective = column_objective(p, res.h);
  IpIterate fin{res.h, it.mu, it.s};
  res.kkt_norm = kkt_residual(p, fin).norm();
  return res;
}

/// Builds the subproblem for column x_col of source c and solves it.
/// alpha0 must satisfy alpha0_k >= 1 so the barrier weights are nonnegative.
inline ColumnResult solve_column(const Matrix& W, const Vector& x_col, double sigma2,
                                 const Vector& alpha0, const Vector* init,
                                 const SolverConfig& cfg) {
  if (W.rows() != x_col.size())
    throw DimensionMismatchError("solve_column: W rows and x length differ");
  if (!(sigma2 > 0.0)) throw InvariantViolationError("solve_column: sigma2 must be > 0");
  if ((alpha0.array() < 1.0).any())
    throw InvariantViolationError("solve_column: alpha0 entries must be >= 1");

  ColumnProblem p;
  p.Q = W.transpose() * W;
  p.Q = 0.5 * (p.Q + p.Q.transpose());  // enforce exact symmetry
  p.b = W.transpose() * x_col;
  p.alpha = sigma2 * (alpha0.array() - 1.0);
  p.scale = sigma2;
  return solve_problem(p, init, cfg);
}

}  // namespace bjmd
