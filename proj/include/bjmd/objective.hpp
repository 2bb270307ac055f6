#pragma once

#include "bjmd/types.hpp"

#include <cmath>

namespace bjmd {

namespace detail {

/// log density of InverseGamma(a, b) at v: p(v) = b^a / Gamma(a) v^-(a+1) exp(-b/v).
inline double log_inv_gamma_pdf(double v, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(v) - b / v;
}

/// log density of Laplace(0, lambda) at w.
inline double log_laplace_pdf(double w, double lambda) {
  return -std::log(2.0 * lambda) - std::abs(w) / lambda;
}

/// log density of Normal(mean, var) at x.
inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * M_PI * var) - d * d / (2.0 * var);
}

/// log density of Dirichlet(alpha) at h (h interior of the simplex).
inline double log_dirichlet_pdf(const Vector& h, const Vector& alpha) {
  double v = std::lgamma(alpha.sum());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    v -= std::lgamma(alpha[k]);
    v += (alpha[k] - 1.0) * std::log(h[k]);
  }
  return v;
}

}  // namespace detail

/// Noiseless model mean W * H(c) for one source.
inline Matrix reconstruct(const Matrix& W, const Matrix& Hc) {
  if (W.cols() != Hc.rows())
    throw DimensionMismatchError("reconstruct: W has " + std::to_string(W.cols()) +
                                 " columns but H has " + std::to_string(Hc.rows()) + " rows");
  return W * Hc;
}

/// Negative log posterior of the reformulated model (Gaussian scale mixture in
/// place of the Laplace prior). This is the quantity the block-coordinate MAP
/// engine decreases; 2*pi normalizer constants are dropped throughout.
inline double map_objective(const ModelState& state, const MultiViewData& data,
                            const Hyperparams& hyper) {
  validate(data, hyper, state);

  double f = 0.0;
  const Eigen::Index m = data.rows();

  for (int c = 0; c < data.source_count(); ++c) {
    const Matrix& x = data.sources[static_cast<std::size_t>(c)];
    const Matrix& h = state.H[static_cast<std::size_t>(c)];
    const double v = state.sigma2[c];
    const double rss = (x - state.W * h).squaredNorm();
    const double mn = static_cast<double>(m) * static_cast<double>(x.cols());
    f += rss / (2.0 * v) + 0.5 * mn * std::log(v);
    for (Eigen::Index j = 0; j < h.cols(); ++j)
      for (Eigen::Index k = 0; k < h.rows(); ++k)
        f -= (hyper.alpha0[k] - 1.0) * std::log(h(k, j));
    f -= detail::log_inv_gamma_pdf(v, hyper.a0, hyper.b0);
  }

  f += state.Z.sum() / hyper.lambda;
  f += 0.5 * state.Z.array().log().sum();
  f += (state.W.array().square() / (2.0 * state.Z.array())).sum();

  if (!std::isfinite(f))
    throw NumericOverflowError("map_objective evaluated to a non-finite value");
  return f;
}

/// Log joint density of the original (non-reformulated) model: Laplace prior
/// on W, Dirichlet columns of H(c), Gaussian likelihood, inverse-gamma noise
/// variances. Normalizing constants are kept; Z plays no role here.
inline double bjmd_log_joint(const Matrix& W, const std::vector<Matrix>& H,
                             const Vector& sigma2, const MultiViewData& data,
                             const Hyperparams& hyper) {
  validate_data(data);
  validate_hyper(hyper);
  if (W.rows() != data.rows() || W.cols() != hyper.K())
    throw DimensionMismatchError("bjmd_log_joint: W shape mismatch");
  if (static_cast<int>(H.size()) != data.source_count())
    throw DimensionMismatchError("bjmd_log_joint: H source count mismatch");
  if (sigma2.size() != data.source_count())
    throw DimensionMismatchError("bjmd_log_joint: sigma2 source count mismatch");

  double lj = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index k = 0; k < W.cols(); ++k)
      lj += detail::log_laplace_pdf(W(i, k), hyper.lambda);

  const Eigen::Index m = data.rows();
  for (int c = 0; c < data.source_count(); ++c) {
    const Matrix& x = data.sources[static_cast<std::size_t>(c)];
    const Matrix& h = H[static_cast<std::size_t>(c)];
    const double v = sigma2[c];
    if (!(v > 0.0))
      throw InvariantViolationError("sigma2[" + std::to_string(c) + "] must be > 0");
    if (h.rows() != hyper.K() || h.cols() != x.cols())
      throw DimensionMismatchError("bjmd_log_joint: H(" + std::to_string(c) +
                                   ") shape mismatch");
    if ((h.array() <= 0.0).any())
      throw InvariantViolationError("H(" + std::to_string(c) +
                                    ") entries must be strictly positive");

    for (Eigen::Index j = 0; j < h.cols(); ++j)
      lj += detail::log_dirichlet_pdf(h.col(j), hyper.alpha0);

    const double rss = (x - W * h).squaredNorm();
    const double mn = static_cast<double>(m) * static_cast<double>(x.cols());
    lj += -0.5 * mn * std::log(2.0 * M_PI * v) - rss / (2.0 * v);
    lj += detail::log_inv_gamma_pdf(v, hyper.a0, hyper.b0);
  }

  if (!std::isfinite(lj))
    throw NumericOverflowError("bjmd_log_joint evaluated to a non-finite value");
  return lj;
}

}  // namespace bjmd
