#pragma once

#include "bjmd/map_solver.hpp"
#include "bjmd/objective.hpp"
#include "bjmd/rng.hpp"
#include "bjmd/transforms.hpp"
#include "bjmd/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

namespace bjmd {

// ---------------------------------------------------------------------------
// Mean-field Gaussian stochastic VI over the unconstrained coordinates, with
// reparameterized Monte Carlo gradients of the closed-form log joint.
// ---------------------------------------------------------------------------

/// Per-coordinate Gaussian variational factors.
struct VariationalParams {
  Vector mean;
  Vector log_std;

  Eigen::Index dim() const { return mean.size(); }

  static VariationalParams init(const Vector& mean, double log_std) {
    VariationalParams p;
    p.mean = mean;
    p.log_std = Vector::Constant(mean.size(), log_std);
    return p;
  }
};

struct GradientEstimate {
  Vector grad_mean;
  Vector grad_log_std;
  double elbo = 0.0;
  int dropped_samples = 0;
};

/// Differentiable target: log joint of the BJMD model plus the log Jacobian
/// of the constraining transform, as a function of unconstrained coordinates.
class BjmdTarget {
 public:
  BjmdTarget(const MultiViewData& data, const Hyperparams& hyper)
      : data_(&data), hyper_(&hyper), layout_(Layout::of(data, hyper)) {
    validate_data(data);
    validate_hyper(hyper);
    dirichlet_log_norm_ = std::lgamma(hyper.alpha0.sum());
    for (int k = 0; k < hyper.K(); ++k)
      dirichlet_log_norm_ -= std::lgamma(hyper.alpha0[k]);
  }

  Eigen::Index dim() const { return layout_.dim(); }
  const Layout& layout() const { return layout_; }

  /// Value and gradient at xi; gradient is resized and overwritten.
  double log_density(const Vector& xi, Vector& grad) const {
    const Layout& l = layout_;
    const Hyperparams& hyper = *hyper_;
    const int k = l.K;

    grad.resize(l.dim());
    const ConstrainedPoint p = to_constrained(xi, l);

    double value = 0.0;

    // Laplace prior on the basis (identity transform).
    value += -static_cast<double>(l.w_count()) * std::log(2.0 * hyper.lambda) -
             p.W.array().abs().sum() / hyper.lambda;
    Matrix w_grad = -p.W.array().sign().matrix() / hyper.lambda;

    for (int c = 0; c < l.C(); ++c) {
      const Matrix& x = data_->sources[static_cast<std::size_t>(c)];
      const Matrix& h = p.H[static_cast<std::size_t>(c)];
      const double v = p.sigma2[c];
      const double mn = static_cast<double>(x.rows()) * static_cast<double>(x.cols());

      const Matrix resid = x - p.W * h;
      const double rss = resid.squaredNorm();

      // Gaussian likelihood.
      value += -0.5 * mn * std::log(2.0 * M_PI * v) - rss / (2.0 * v);
      w_grad.noalias() += (resid * h.transpose()) / v;

      // Dirichlet prior plus the stick-breaking log Jacobian: the two ln h
      // terms combine into alpha0_k * ln h.
      value += dirichlet_log_norm_ * static_cast<double>(h.cols());
      for (Eigen::Index j = 0; j < h.cols(); ++j)
        for (int kk = 0; kk < k; ++kk) value += hyper.alpha0[kk] * std::log(h(kk, j));

      // d/dh of likelihood + Dirichlet + Jacobian.
      Matrix g_h = (p.W.transpose() * resid) / v;
      g_h.array() += hyper.alpha0.replicate(1, h.cols()).array() / h.array();

      // Chain through the stick-breaking map, column by column:
      //   d/dy_l = g_l h_l (1 - z_l) - z_l * sum_{m>l} g_m h_m,
      // with z_l the stick fraction h_l / (h_l + ... + h_K).
      double* gy = grad.data() + l.h_offset(c);
      for (Eigen::Index j = 0; j < h.cols(); ++j) {
        const auto hcol = h.col(j);
        const auto gcol = g_h.col(j);
        double* out = gy + j * (k - 1);
        double tail = gcol[k - 1] * hcol[k - 1];  // sum_{m>l} g_m h_m
        double stick = hcol[k - 1];               // h_l + ... + h_K
        for (int kk = k - 2; kk >= 0; --kk) {
          stick += hcol[kk];
          const double z = hcol[kk] / stick;
          out[kk] = gcol[kk] * hcol[kk] * (1.0 - z) - z * tail;
          tail += gcol[kk] * hcol[kk];
        }
      }

      // Inverse-gamma prior and the log transform of sigma2. The coordinate
      // is log sigma2, so the chain rule multiplies by v and the transform
      // Jacobian adds ln v to the value and 1 to the gradient.
      value += detail::log_inv_gamma_pdf(v, hyper.a0, hyper.b0) + std::log(v);
      grad[l.sigma_offset() + c] =
          -0.5 * mn - (hyper.a0 + 1.0) + (0.5 * rss + hyper.b0) / v + 1.0;
    }

    Eigen::Map<Matrix>(grad.data(), l.M, k) = w_grad;
    return value;
  }

 private:
  const MultiViewData* data_;
  const Hyperparams* hyper_;
  Layout layout_;
  double dirichlet_log_norm_ = 0.0;
};

/// Reparameterized Monte Carlo estimate of the ELBO and its gradient at the
/// given variational parameters. Non-finite sample contributions are dropped
/// and counted; if every sample is dropped the estimator fails.
template <class Target>
GradientEstimate elbo_gradient_estimate(const Target& target, const VariationalParams& q,
                                        int samples, Rng& rng) {
  if (samples < 1) throw InvariantViolationError("elbo_gradient_estimate: S must be >= 1");
  const Eigen::Index d = q.dim();
  const Vector std_dev = q.log_std.array().exp();

  Vector acc_val_grad = Vector::Zero(d);
  Vector acc_eps_grad = Vector::Zero(d);
  double acc_val = 0.0;
  int used = 0, dropped = 0;

  Vector eps(d), xi(d), grad(d);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < d; ++i) eps[i] = rng.normal();
    xi = q.mean + std_dev.cwiseProduct(eps);
    double value;
    bool ok = true;
    try {
      value = target.log_density(xi, grad);
      ok = std::isfinite(value) && grad.allFinite();
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    acc_val += value;
    acc_val_grad += grad;
    acc_eps_grad += grad.cwiseProduct(eps);
    ++used;
  }

  if (used == 0)
    throw SolverFailureError("elbo_gradient_estimate: all Monte Carlo samples non-finite");

  const double inv = 1.0 / static_cast<double>(used);
  GradientEstimate est;
  est.grad_mean = inv * acc_val_grad;
  est.grad_log_std =
      (inv * acc_eps_grad).cwiseProduct(std_dev) + Vector::Ones(d);  // + entropy gradient
  est.elbo = inv * acc_val + q.log_std.sum() +
             0.5 * static_cast<double>(d) * (1.0 + std::log(2.0 * M_PI));
  est.dropped_samples = dropped;
  return est;
}

/// Convenience overload for the BJMD model itself.
inline GradientEstimate elbo_gradient_estimate(const VariationalParams& q,
                                               const MultiViewData& data,
                                               const Hyperparams& hyper, int samples,
                                               Rng& rng) {
  BjmdTarget target(data, hyper);
  return elbo_gradient_estimate(target, q, samples, rng);
}

struct AdviAscendOptions {
  int iter_max = 10000;
  int check_interval = 100;
  int mc_samples = 1;
  double step_size = 0.1;     // eta of the adaptive schedule
  double ewma_weight = 0.1;   // weight of the newest squared gradient
  double log_std_clamp = 20.0;
};

struct AdviRunStats {
  int iterations = 0;
  std::vector<double> elbo_trace;  // windowed mean ELBO, one entry per check
  int failed_iterations = 0;
};

/// Stochastic gradient ascent with the per-coordinate adaptive step rule
///   step_d(i) = eta * i^(-1/2) / (1 + sqrt(s_d)),  s_d an EWMA of grad^2.
/// `on_check(iter, window_elbo_mean, params)` runs every check_interval
/// iterations and returns true to stop.
template <class Target, class CheckFn>
AdviRunStats advi_ascend(const Target& target, VariationalParams& q,
                         const AdviAscendOptions& opt, Rng& rng, CheckFn&& on_check) {
  const Eigen::Index d = q.dim();
  Vector ewma = Vector::Zero(2 * d);
  AdviRunStats stats;

  double window_sum = 0.0;
  int window_count = 0;
  int bad_checks = 0;

  for (int iter = 1; iter <= opt.iter_max; ++iter) {
    GradientEstimate est;
    bool ok = true;
    try {
      est = elbo_gradient_estimate(target, q, opt.mc_samples, rng);
    } catch (const SolverFailureError&) {
      ok = false;
    }

    if (ok) {
      Vector g(2 * d);
      g.head(d) = est.grad_mean;
      g.tail(d) = est.grad_log_std;
      const Vector g2 = g.cwiseProduct(g);
      ewma = (iter == 1) ? g2 : (opt.ewma_weight * g2 + (1.0 - opt.ewma_weight) * ewma).eval();
      // Windowed-adagrad style step: normalized by the running gradient scale,
      // with no explicit decay, so late iterations keep moving and the
      // coefficient-change stopping rule measures convergence rather than
      // step size.
      const Vector step =
          opt.step_size * (1.0 + ewma.cwiseSqrt().array()).inverse().matrix();
      q.mean += step.head(d).cwiseProduct(g.head(d));
      q.log_std += step.tail(d).cwiseProduct(g.tail(d));
      q.log_std = q.log_std.cwiseMax(-opt.log_std_clamp).cwiseMin(opt.log_std_clamp);
      if (std::isfinite(est.elbo)) {
        window_sum += est.elbo;
        ++window_count;
      }
    } else {
      ++stats.failed_iterations;
    }

    stats.iterations = iter;
    if (iter % opt.check_interval == 0) {
      const double window_mean =
          window_count > 0 ? window_sum / window_count
                           : std::numeric_limits<double>::quiet_NaN();
      stats.elbo_trace.push_back(window_mean);
      bad_checks = std::isfinite(window_mean) ? 0 : bad_checks + 1;
      if (bad_checks >= 10)
        throw SolverFailureError("advi: ELBO estimate non-finite for 10 consecutive checks");
      window_sum = 0.0;
      window_count = 0;
      if (on_check(iter, window_mean, q)) break;
    }
  }
  return stats;
}

struct ViFit {
  VariationalParams params;
  ModelState extracted;
  FitReport report;
  std::vector<double> h_change_trace;
  double elbo_tail_mean = 0.0;  // restart-ranking score (higher is better)
};

namespace detail {

inline ModelState extract_state(const VariationalParams& q, const Layout& layout,
                                const Hyperparams& hyper, double z_floor) {
  ConstrainedPoint p = to_constrained(q.mean, layout);
  ModelState state;
  state.W = std::move(p.W);
  state.H = std::move(p.H);
  state.sigma2 = std::move(p.sigma2);
  state.Z = update_z(state.W, hyper.lambda, z_floor);
  return state;
}

}  // namespace detail

/// Full VI fit: ascend the ELBO, checking every check_interval iterations
/// whether the coefficient matrices extracted from the variational means have
/// stabilized (squared relative Frobenius change below tol_outer), then map
/// the means back to a constrained point estimate.
inline ViFit fit_advi(const MultiViewData& data, const Hyperparams& hyper,
                      const SolverConfig& cfg, std::uint64_t seed) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_config(cfg);
  validate_data(data);
  validate_hyper(hyper);

  BjmdTarget target(data, hyper);
  const Layout& layout = target.layout();

  Rng root(seed);
  const ModelState start = init_random(data, hyper, root.spawn(0).next_u64(), cfg.z_floor);
  VariationalParams q = VariationalParams::init(to_unconstrained(start), cfg.vi_init_log_std);
  Rng grad_rng = root.spawn(1);

  AdviAscendOptions opt;
  opt.iter_max = cfg.max_outer_iters;
  opt.check_interval = cfg.check_interval;
  opt.mc_samples = cfg.mc_samples;
  opt.step_size = cfg.vi_step;

  ViFit fit;
  std::vector<Matrix> h_prev;
  {
    ModelState s0 = detail::extract_state(q, layout, hyper, cfg.z_floor);
    h_prev = std::move(s0.H);
  }

  bool converged = false;
  AdviRunStats stats =
      advi_ascend(target, q, opt, grad_rng, [&](int iter, double, const VariationalParams& qq) {
        fit.report.iteration_trace.push_back(iter);
        fit.report.elapsed_trace.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count());
        ModelState cur = detail::extract_state(qq, layout, hyper, cfg.z_floor);
        double rel = 0.0;
        for (int c = 0; c < data.source_count(); ++c) {
          const double denom = h_prev[static_cast<std::size_t>(c)].squaredNorm();
          const double num =
              (cur.H[static_cast<std::size_t>(c)] - h_prev[static_cast<std::size_t>(c)])
                  .squaredNorm();
          rel = std::max(rel, num / std::max(denom, 1e-300));
        }
        fit.h_change_trace.push_back(rel);
        h_prev = std::move(cur.H);
        // Two consecutive quiet checks, after a burn-in: the coefficient
        // matrices stall transiently early on while the noise estimates are
        // still adapting, and a single quiet window must not stop the run.
        const std::size_t n = fit.h_change_trace.size();
        if (static_cast<int>(n) >= std::max(cfg.vi_min_checks, 2) &&
            rel < cfg.tol_outer && fit.h_change_trace[n - 2] < cfg.tol_outer) {
          converged = true;
          return true;
        }
        return false;
      });

  fit.extracted = detail::extract_state(q, layout, hyper, cfg.z_floor);
  validate(data, hyper, fit.extracted, 0.0);
  fit.params = std::move(q);

  fit.report.objective_trace = stats.elbo_trace;
  fit.report.iterations = stats.iterations;
  fit.report.converged = converged;
  fit.report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  fit.report.final_state = fit.extracted;

  const int tail = std::min<int>(10, static_cast<int>(stats.elbo_trace.size()));
  if (tail > 0) {
    double acc = 0.0;
    int n = 0;
    for (int i = static_cast<int>(stats.elbo_trace.size()) - tail;
         i < static_cast<int>(stats.elbo_trace.size()); ++i)
      if (std::isfinite(stats.elbo_trace[static_cast<std::size_t>(i)])) {
        acc += stats.elbo_trace[static_cast<std::size_t>(i)];
        ++n;
      }
    fit.elbo_tail_mean = n > 0 ? acc / n : -std::numeric_limits<double>::infinity();
  }
  return fit;
}

}  // namespace bjmd
