#pragma once

#include "bjmd/objective.hpp"
#include "bjmd/parallel.hpp"
#include "bjmd/rng.hpp"
#include "bjmd/simplex_qp.hpp"
#include "bjmd/types.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>

namespace bjmd {

struct MapFit {
  ModelState state;
  FitReport report;
};

/// Closed-form update of the scale-mixture variances: the positive root of the
/// per-entry stationarity equation, clamped at z_floor (the root is 0 where
/// w = 0, which would make the ridge term singular).
inline Matrix update_z(const Matrix& W, double lambda, double z_floor) {
  if (!(lambda > 0.0)) throw InvariantViolationError("update_z: lambda must be > 0");
  const auto w2 = W.array().square();
  return ((lambda * lambda + 8.0 * w2 * lambda).sqrt() - lambda)
      .max(4.0 * z_floor)
      .matrix() / 4.0;
}

namespace detail {

/// Ridge weights for one basis row. diag(z)^-1 is the exact minimizer of the
/// w^2/(2z) penalty and keeps sweeps monotone; the diag(sqrt(z))^-1 variant
/// (exact_ridge = false) matches the update as commonly stated for BJMD but
/// can raise the objective when scales sit at the floor. See README notes.
inline Vector w_ridge_weights(const Vector& z_row, bool exact_ridge) {
  if (exact_ridge) return z_row.cwiseInverse();
  return z_row.cwiseSqrt().cwiseInverse();
}

/// Solves (gram + diag(ridge)) w = rhs for one basis row, falling back to a
/// pseudo-inverse solve if the SPD factorization breaks down.
inline Vector solve_w_row(const Matrix& gram, const Vector& rhs, const Vector& ridge,
                          int row_index) {
  Matrix a = gram;
  a.diagonal() += ridge;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) {
    Vector w = llt.solve(rhs);
    if (w.allFinite()) return w;
  }
  std::cerr << "bjmd: warning: SPD solve failed for basis row " << row_index
            << ", using pseudo-inverse\n";
  Vector w = a.completeOrthogonalDecomposition().solve(rhs);
  if (!w.allFinite())
    throw SolverFailureError("basis-row update failed for row " + std::to_string(row_index));
  return w;
}

struct WSweepPrecomp {
  Matrix gram;  // sum_c H H' / sigma2_c, K x K
  Matrix rhs;   // sum_c X H' / sigma2_c, M x K
};

inline WSweepPrecomp w_sweep_precompute(const MultiViewData& data, const ModelState& state) {
  const int k = static_cast<int>(state.W.cols());
  WSweepPrecomp pre;
  pre.gram = Matrix::Zero(k, k);
  pre.rhs = Matrix::Zero(state.W.rows(), k);
  for (int c = 0; c < data.source_count(); ++c) {
    const Matrix& h = state.H[static_cast<std::size_t>(c)];
    const double inv_v = 1.0 / state.sigma2[c];
    pre.gram.noalias() += inv_v * (h * h.transpose());
    pre.rhs.noalias() += inv_v * (data.sources[static_cast<std::size_t>(c)] * h.transpose());
  }
  pre.gram = 0.5 * (pre.gram + pre.gram.transpose());
  return pre;
}

}  // namespace detail

/// One basis-row update: the ridge-regression style solve combining every
/// source weighted by its noise precision. Does not mutate the state.
inline Vector update_w_row(int i, const MultiViewData& data, const ModelState& state,
                           const Hyperparams& hyper, bool exact_ridge = false) {
  (void)hyper;
  const auto pre = detail::w_sweep_precompute(data, state);
  const Vector ridge = detail::w_ridge_weights(state.Z.row(i).transpose(), exact_ridge);
  return detail::solve_w_row(pre.gram, pre.rhs.row(i).transpose(), ridge, i);
}

/// Conjugate closed-form update of one noise variance.
inline double update_sigma2(int c, const MultiViewData& data, const ModelState& state,
                            const Hyperparams& hyper) {
  const Matrix& x = data.sources[static_cast<std::size_t>(c)];
  const double rss = (x - state.W * state.H[static_cast<std::size_t>(c)]).squaredNorm();
  const double mn = static_cast<double>(x.rows()) * static_cast<double>(x.cols());
  const double v = (2.0 * hyper.b0 + rss) / (2.0 * hyper.a0 + mn + 2.0);
  return std::max(v, 1e-12);
}

/// Random starting point: standard-normal basis, Dirichlet coefficient
/// columns, matched scale variances, per-source sample variance as the
/// initial noise level. Identical output for identical seeds.
inline ModelState init_random(const MultiViewData& data, const Hyperparams& hyper,
                              std::uint64_t seed, double z_floor = 1e-10) {
  validate_data(data);
  validate_hyper(hyper);

  Rng root(seed);
  Rng w_rng = root.spawn(0);

  ModelState state;
  const Eigen::Index m = data.rows();
  const int k = hyper.K();

  state.W.resize(m, k);
  for (Eigen::Index i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) state.W(i, kk) = w_rng.normal();

  state.H.resize(static_cast<std::size_t>(data.source_count()));
  state.sigma2.resize(data.source_count());
  for (int c = 0; c < data.source_count(); ++c) {
    Rng h_rng = root.spawn(static_cast<std::uint64_t>(c) + 1);
    const Eigen::Index n = data.cols(c);
    Matrix& h = state.H[static_cast<std::size_t>(c)];
    h.resize(k, n);
    for (Eigen::Index j = 0; j < n; ++j) h.col(j) = h_rng.dirichlet(hyper.alpha0);

    const Matrix& x = data.sources[static_cast<std::size_t>(c)];
    const double count = static_cast<double>(x.size());
    const double mean = x.sum() / count;
    double var = (x.array() - mean).square().sum() / std::max(count - 1.0, 1.0);
    state.sigma2[c] = std::max(var, 1e-6);
  }

  state.Z = update_z(state.W, hyper.lambda, z_floor);
  return state;
}

/// Block-coordinate MAP: cyclic sweeps of basis rows, coefficient columns,
/// scale variances and noise variances, recording the objective once per
/// sweep and stopping on its relative change.
inline MapFit fit_map(const MultiViewData& data, const Hyperparams& hyper,
                      const SolverConfig& cfg,
                      const std::optional<ModelState>& init = std::nullopt) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_config(cfg);

  ModelState state =
      init.has_value() ? *init : init_random(data, hyper, cfg.rng_seed, cfg.z_floor);
  validate(data, hyper, state, init.has_value() ? 0.0 : cfg.z_floor);

  const int c_count = data.source_count();
  const Eigen::Index m = data.rows();
  const int k = hyper.K();

  FitReport report;
  const auto record = [&](double f, int iter) {
    report.objective_trace.push_back(f);
    report.iteration_trace.push_back(iter);
    report.elapsed_trace.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count());
  };
  double f_prev = map_objective(state, data, hyper);
  record(f_prev, 0);

  bool converged = false;
  int sweeps = 0;
  for (int t = 0; t < cfg.max_outer_iters; ++t) {
    // Basis rows (independent given H and Z).
    {
      const auto pre = detail::w_sweep_precompute(data, state);
      Matrix w_new(m, k);
      parallel_for(static_cast<int>(m), cfg.threads, [&](int i) {
        const Vector ridge =
            detail::w_ridge_weights(state.Z.row(i).transpose(), cfg.exact_w_ridge);
        w_new.row(i) =
            detail::solve_w_row(pre.gram, pre.rhs.row(i).transpose(), ridge, i).transpose();
      });
      state.W = std::move(w_new);
    }

    // Coefficient columns (independent given W), warm-started from the
    // current column; a column is kept unchanged if the subproblem solver
    // failed to improve it.
    {
      Matrix q = state.W.transpose() * state.W;
      q = 0.5 * (q + q.transpose());
      for (int c = 0; c < c_count; ++c) {
        Matrix& h = state.H[static_cast<std::size_t>(c)];
        const Matrix bc = state.W.transpose() * data.sources[static_cast<std::size_t>(c)];
        ColumnProblem base;
        base.Q = q;
        base.alpha = state.sigma2[c] * (hyper.alpha0.array() - 1.0);
        base.scale = state.sigma2[c];
        parallel_for(static_cast<int>(h.cols()), cfg.threads, [&](int j) {
          ColumnProblem p = base;
          p.b = bc.col(j);
          const Vector prev = h.col(j);
          const ColumnResult r = solve_problem(p, &prev, cfg);
          if (r.objective <= column_objective(p, prev)) h.col(j) = r.h;
        });
      }
    }

    state.Z = update_z(state.W, hyper.lambda, cfg.z_floor);

    for (int c = 0; c < c_count; ++c)
      state.sigma2[c] = update_sigma2(c, data, state, hyper);

    const double f = map_objective(state, data, hyper);  // throws on non-finite
    ++sweeps;
    record(f, sweeps);

    const double denom = std::max(std::abs(f_prev), 1e-300);
    if (std::abs(f - f_prev) / denom <= cfg.tol_outer) {
      converged = true;
      f_prev = f;
      break;
    }
    f_prev = f;
  }

  report.iterations = sweeps;
  report.converged = converged;
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  report.final_state = state;
  return MapFit{std::move(state), std::move(report)};
}

}  // namespace bjmd
