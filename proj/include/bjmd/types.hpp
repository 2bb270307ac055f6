#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bjmd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Binary K x N indicator matrix; l(k, j) == 1 means sample j belongs to cluster k.
using LabelMatrix = Eigen::MatrixXi;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Shapes of two related matrices disagree (message names the offending source).
class DimensionMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model or data invariant does not hold (message names the invariant).
class InvariantViolationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical subroutine broke down (singular system, no convergence).
class SolverFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An objective or estimate evaluated to a non-finite value.
class NumericOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// C data matrices X(c), all sharing the feature dimension M but with their
/// own sample counts N_c and noise levels.
struct MultiViewData {
  std::vector<Matrix> sources;

  int source_count() const { return static_cast<int>(sources.size()); }
  Eigen::Index rows() const { return sources.empty() ? 0 : sources[0].rows(); }
  Eigen::Index cols(int c) const { return sources[static_cast<std::size_t>(c)].cols(); }
  Eigen::Index total_cols() const {
    Eigen::Index n = 0;
    for (const auto& x : sources) n += x.cols();
    return n;
  }
};

/// Prior hyperparameters: Laplace scale on the basis, Dirichlet concentration
/// on coefficient columns, inverse-gamma shape/scale on noise variances.
struct Hyperparams {
  double lambda = 1.0;  // Laplace scale, > 0
  Vector alpha0;        // Dirichlet concentration, K entries, each >= 1
  double a0 = 1.0;      // inverse-gamma shape, > 0
  double b0 = 1.0;      // inverse-gamma scale, > 0

  int K() const { return static_cast<int>(alpha0.size()); }

  /// Scalar concentration replicated over K factors.
  static Hyperparams with_k(int k, double lambda = 1.0, double alpha0_scalar = 1.1,
                            double a0 = 1.0, double b0 = 1.0) {
    Hyperparams h;
    h.lambda = lambda;
    h.alpha0 = Vector::Constant(k, alpha0_scalar);
    h.a0 = a0;
    h.b0 = b0;
    return h;
  }
};

/// All latent variables of the reformulated model.
///
/// W is the shared M x K basis, Z the matching matrix of Laplace scale-mixture
/// variances, H holds one K x N_c column-stochastic coefficient matrix per
/// source, and sigma2 one Gaussian noise variance per source.
struct ModelState {
  Matrix W;
  Matrix Z;
  std::vector<Matrix> H;
  Vector sigma2;
};

/// Knobs shared by both inference engines. Fields that only one engine reads
/// are ignored by the other.
struct SolverConfig {
  double tol_outer = 1e-3;       // relative-change stopping tolerance
  int max_outer_iters = 500;     // sweep cap (MAP) / iteration cap (VI)
  int check_interval = 100;      // VI: iterations between stopping checks
  int mc_samples = 1;            // VI: Monte Carlo samples per gradient
  double ip_eta = 0.95;          // interior point: step damping in (0,1)
  int ip_max_iters = 50;         // interior point: Newton iteration cap
  double ip_tol = 1e-8;          // interior point: objective-change tolerance
  std::uint64_t rng_seed = 0;
  double z_floor = 1e-10;        // lower clamp for scale-mixture variances

  // Extras beyond the shared block.
  int threads = 1;               // worker threads for row/column blocks
  bool exact_w_ridge = true;     // diag(z)^-1 damping; false = diag(sqrt(z))^-1 variant
  double ip_kkt_tol = 1e-7;      // interior point: extra KKT-residual polish target
  double h_floor = 1e-12;        // lower clamp for returned coefficient entries
  double vi_step = 0.1;          // VI: base step size of the adaptive schedule
  double vi_init_log_std = -2.3; // VI: initial per-coordinate log standard deviation
  int vi_min_checks = 10;        // VI: checks to run before the stop rule may fire
};

/// What a fit run leaves behind besides the state itself.
struct FitReport {
  std::vector<double> objective_trace;  // MAP: objective per sweep; VI: windowed ELBO
  std::vector<double> elapsed_trace;    // cumulative seconds, aligned with the trace
  std::vector<int> iteration_trace;     // iteration number per trace entry
  int iterations = 0;
  double elapsed_seconds = 0.0;
  ModelState final_state;
  bool converged = false;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

inline void validate_data(const MultiViewData& data) {
  if (data.source_count() < 1)
    throw InvariantViolationError("data must contain at least one source");
  const Eigen::Index m = data.rows();
  if (m < 1) throw InvariantViolationError("source 0: feature count M must be >= 1");
  for (int c = 0; c < data.source_count(); ++c) {
    const Matrix& x = data.sources[static_cast<std::size_t>(c)];
    if (x.rows() != m)
      throw DimensionMismatchError("source " + std::to_string(c) + ": has " +
                                   std::to_string(x.rows()) + " rows, expected M = " +
                                   std::to_string(m));
    if (x.cols() < 1)
      throw InvariantViolationError("source " + std::to_string(c) +
                                    ": sample count N_c must be >= 1");
    if (!detail::all_finite(x))
      throw InvariantViolationError("source " + std::to_string(c) +
                                    ": entries must be finite");
  }
}

inline void validate_hyper(const Hyperparams& hyper) {
  if (!(hyper.lambda > 0.0)) throw InvariantViolationError("lambda must be > 0");
  if (hyper.K() < 1) throw InvariantViolationError("K must be >= 1");
  for (int k = 0; k < hyper.K(); ++k)
    if (!(hyper.alpha0[k] >= 1.0))
      throw InvariantViolationError("alpha0[" + std::to_string(k) + "] must be >= 1");
  if (!(hyper.a0 > 0.0)) throw InvariantViolationError("a0 must be > 0");
  if (!(hyper.b0 > 0.0)) throw InvariantViolationError("b0 must be > 0");
}

inline void validate_config(const SolverConfig& cfg) {
  if (!(cfg.ip_eta > 0.0 && cfg.ip_eta < 1.0))
    throw InvariantViolationError("ip_eta must lie in (0,1)");
  if (!(cfg.tol_outer > 0.0)) throw InvariantViolationError("tol_outer must be > 0");
  if (!(cfg.ip_tol > 0.0)) throw InvariantViolationError("ip_tol must be > 0");
  if (!(cfg.z_floor > 0.0)) throw InvariantViolationError("z_floor must be > 0");
  if (cfg.max_outer_iters < 1 || cfg.ip_max_iters < 1 || cfg.check_interval < 1 ||
      cfg.mc_samples < 1)
    throw InvariantViolationError("iteration and sample counts must be >= 1");
}

/// Column sums of H(c) may drift from 1 by the feasibility slack of the
/// interior-point column solver.
inline constexpr double kColumnSumTol = 1e-8;

/// Checks every type invariant plus mutual dimension consistency.
/// `z_floor > 0` additionally enforces the stored-scale clamp.
inline void validate(const MultiViewData& data, const Hyperparams& hyper,
                     const ModelState& state, double z_floor = 0.0) {
  validate_data(data);
  validate_hyper(hyper);

  const Eigen::Index m = data.rows();
  const int k = hyper.K();
  const int c_count = data.source_count();

  if (state.W.rows() != m || state.W.cols() != k)
    throw DimensionMismatchError("W is " + std::to_string(state.W.rows()) + "x" +
                                 std::to_string(state.W.cols()) + ", expected " +
                                 std::to_string(m) + "x" + std::to_string(k));
  if (!detail::all_finite(state.W))
    throw InvariantViolationError("W entries must be finite");

  if (state.Z.rows() != m || state.Z.cols() != k)
    throw DimensionMismatchError("Z is " + std::to_string(state.Z.rows()) + "x" +
                                 std::to_string(state.Z.cols()) + ", expected " +
                                 std::to_string(m) + "x" + std::to_string(k));
  if (!detail::all_finite(state.Z) || (state.Z.array() <= 0.0).any())
    throw InvariantViolationError("Z entries must be positive and finite");
  if (z_floor > 0.0 && (state.Z.array() < z_floor).any())
    throw InvariantViolationError("Z entries must be >= z_floor");

  if (static_cast<int>(state.H.size()) != c_count)
    throw DimensionMismatchError("H holds " + std::to_string(state.H.size()) +
                                 " matrices, expected C = " + std::to_string(c_count));
  for (int c = 0; c < c_count; ++c) {
    const Matrix& h = state.H[static_cast<std::size_t>(c)];
    if (h.rows() != k || h.cols() != data.cols(c))
      throw DimensionMismatchError("H(" + std::to_string(c) + ") is " +
                                   std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                                   ", expected " + std::to_string(k) + "x" +
                                   std::to_string(data.cols(c)));
    if (!detail::all_finite(h) || (h.array() <= 0.0).any())
      throw InvariantViolationError("H(" + std::to_string(c) +
                                    ") entries must be strictly positive");
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      const double colsum = h.col(j).sum();
      if (std::abs(colsum - 1.0) > kColumnSumTol)
        throw InvariantViolationError("H(" + std::to_string(c) + ") column " +
                                      std::to_string(j) + " sums to " +
                                      std::to_string(colsum) + ", expected 1");
    }
  }

  if (state.sigma2.size() != c_count)
    throw DimensionMismatchError("sigma2 has " + std::to_string(state.sigma2.size()) +
                                 " entries, expected C = " + std::to_string(c_count));
  for (int c = 0; c < c_count; ++c)
    if (!(state.sigma2[c] > 0.0) || !std::isfinite(state.sigma2[c]))
      throw InvariantViolationError("sigma2[" + std::to_string(c) +
                                    "] must be positive and finite");
}

}  // namespace bjmd
