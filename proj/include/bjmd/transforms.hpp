#pragma once

#include "bjmd/types.hpp"

#include <cmath>

namespace bjmd {

// ---------------------------------------------------------------------------
// Bijections between the constrained latent variables (W, H columns on the
// simplex interior, positive sigma2) and a flat unconstrained coordinate
// vector. Coordinate order: W (column-major), then per source the K-1
// stick-breaking coordinates of each H column, then log sigma2 per source.
// ---------------------------------------------------------------------------

struct Layout {
  Eigen::Index M = 0;
  int K = 0;
  std::vector<Eigen::Index> N;  // per-source sample counts

  int C() const { return static_cast<int>(N.size()); }
  Eigen::Index w_count() const { return M * K; }
  Eigen::Index h_count() const {
    Eigen::Index n = 0;
    for (auto nc : N) n += nc;
    return n * (K - 1);
  }
  Eigen::Index dim() const { return w_count() + h_count() + C(); }

  Eigen::Index w_offset() const { return 0; }
  Eigen::Index h_offset(int c) const {
    Eigen::Index off = w_count();
    for (int i = 0; i < c; ++i) off += N[static_cast<std::size_t>(i)] * (K - 1);
    return off;
  }
  Eigen::Index sigma_offset() const { return w_count() + h_count(); }

  static Layout of(const MultiViewData& data, const Hyperparams& hyper) {
    Layout l;
    l.M = data.rows();
    l.K = hyper.K();
    for (int c = 0; c < data.source_count(); ++c) l.N.push_back(data.cols(c));
    return l;
  }
};

struct ConstrainedPoint {
  Matrix W;
  std::vector<Matrix> H;
  Vector sigma2;
};

namespace detail {

inline double logit(double z) { return std::log(z) - std::log1p(-z); }
inline double sigmoid(double y) {
  return y >= 0.0 ? 1.0 / (1.0 + std::exp(-y)) : std::exp(y) / (1.0 + std::exp(y));
}

}  // namespace detail

/// K-1 stick coordinates -> interior simplex point of length K.
inline void stick_to_simplex(const double* y, int k, double* h) {
  double stick = 1.0;
  for (int i = 0; i < k - 1; ++i) {
    const double z = detail::sigmoid(y[i]);
    h[i] = stick * z;
    stick -= h[i];
  }
  h[k - 1] = stick;
}

/// Inverse of stick_to_simplex; h must be strictly interior.
inline void simplex_to_stick(const double* h, int k, double* y) {
  double stick = 1.0;
  for (int i = 0; i < k - 1; ++i) {
    if (!(h[i] > 0.0) || !(stick > h[i]))
      throw InvariantViolationError("simplex_to_stick: point not strictly interior");
    y[i] = detail::logit(h[i] / stick);
    stick -= h[i];
  }
  if (!(h[k - 1] > 0.0))
    throw InvariantViolationError("simplex_to_stick: point not strictly interior");
}

/// log |det d h / d y| of the stick-breaking map; reduces to sum_k ln h_k.
inline double stick_log_jacobian(const double* h, int k) {
  double lj = 0.0;
  for (int i = 0; i < k; ++i) lj += std::log(h[i]);
  return lj;
}

/// Flattens a valid model state into unconstrained coordinates (Z is dropped;
/// it is recovered from W on the way back).
inline Vector to_unconstrained(const ModelState& state) {
  Layout l;
  l.M = state.W.rows();
  l.K = static_cast<int>(state.W.cols());
  for (const auto& h : state.H) l.N.push_back(h.cols());

  Vector xi(l.dim());
  Eigen::Map<const Vector> w_flat(state.W.data(), state.W.size());
  xi.head(l.w_count()) = w_flat;

  for (int c = 0; c < l.C(); ++c) {
    const Matrix& h = state.H[static_cast<std::size_t>(c)];
    double* out = xi.data() + l.h_offset(c);
    for (Eigen::Index j = 0; j < h.cols(); ++j)
      simplex_to_stick(h.col(j).data(), l.K, out + j * (l.K - 1));
  }

  for (int c = 0; c < l.C(); ++c) {
    if (!(state.sigma2[c] > 0.0))
      throw InvariantViolationError("to_unconstrained: sigma2 must be positive");
    xi[l.sigma_offset() + c] = std::log(state.sigma2[c]);
  }
  return xi;
}

/// Maps unconstrained coordinates back to (W, H, sigma2).
inline ConstrainedPoint to_constrained(const Vector& xi, const Layout& l) {
  if (xi.size() != l.dim())
    throw DimensionMismatchError("to_constrained: coordinate count mismatch");

  ConstrainedPoint p;
  p.W = Eigen::Map<const Matrix>(xi.data(), l.M, l.K);

  p.H.resize(static_cast<std::size_t>(l.C()));
  for (int c = 0; c < l.C(); ++c) {
    Matrix& h = p.H[static_cast<std::size_t>(c)];
    h.resize(l.K, l.N[static_cast<std::size_t>(c)]);
    const double* in = xi.data() + l.h_offset(c);
    for (Eigen::Index j = 0; j < h.cols(); ++j)
      stick_to_simplex(in + j * (l.K - 1), l.K, h.col(j).data());
  }

  p.sigma2.resize(l.C());
  for (int c = 0; c < l.C(); ++c) p.sigma2[c] = std::exp(xi[l.sigma_offset() + c]);
  return p;
}

}  // namespace bjmd
