#pragma once

#include "bjmd/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace bjmd {

namespace detail {

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a),
/// series for x < a+1, Lentz continued fraction otherwise.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw InvariantViolationError("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  const double log_gamma_a = std::lgamma(a);
  if (x < a + 1.0) {
    // P(a,x) by series, then Q = 1 - P.
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - log_gamma_a);
    return std::min(1.0, std::max(0.0, 1.0 - p));
  }
  // Q(a,x) by continued fraction.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  const double q = h * std::exp(-x + a * std::log(x) - log_gamma_a);
  return std::min(1.0, std::max(0.0, q));
}

/// Upper-tail probability of a chi-square with k degrees of freedom.
inline double chi2_sf(double x, double k) { return gamma_q(0.5 * k, 0.5 * x); }

}  // namespace detail

/// Mann-Whitney AUC with half credit for ties: the probability that a random
/// positive outscores a random negative. Labels must contain both classes.
inline double auc(const Eigen::VectorXi& labels, const Vector& scores) {
  const Eigen::Index n = labels.size();
  if (scores.size() != n)
    throw DimensionMismatchError("auc: labels and scores must have equal length");
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw InvariantViolationError("auc: labels must be binary");
    n_pos += labels[i];
  }
  const Eigen::Index n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw InvariantViolationError("auc: labels must contain both classes");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

  // Rank sum of positives with average ranks over tie groups.
  double pos_rank_sum = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && scores[order[static_cast<std::size_t>(j + 1)]] ==
                            scores[order[static_cast<std::size_t>(i)]])
      ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t)
      if (labels[order[static_cast<std::size_t>(t)]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  const double n_pos_d = static_cast<double>(n_pos);
  const double n_neg_d = static_cast<double>(n_neg);
  return (pos_rank_sum - n_pos_d * (n_pos_d + 1.0) / 2.0) / (n_pos_d * n_neg_d);
}

struct ClusterMetric {
  std::vector<double> per_row;  // NaN where a label row was excluded
  double average = 0.0;
  int excluded_rows = 0;
};

/// For each usable label row, the best AUC any coefficient row achieves
/// against it; the average runs over the usable rows only. Label rows that
/// are all zero or all one cannot be scored and are excluded (counted).
inline ClusterMetric cluster_metric(const Matrix& h, const LabelMatrix& l) {
  if (h.cols() != l.cols())
    throw DimensionMismatchError("cluster_metric: H and labels disagree on sample count");

  ClusterMetric res;
  double acc = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < l.rows(); ++k) {
    const Eigen::VectorXi row = l.row(k).transpose();
    const int ones = row.sum();
    if (ones == 0 || ones == static_cast<int>(row.size())) {
      res.per_row.push_back(std::numeric_limits<double>::quiet_NaN());
      ++res.excluded_rows;
      continue;
    }
    double best = 0.0;
    for (Eigen::Index kp = 0; kp < h.rows(); ++kp)
      best = std::max(best, auc(row, h.row(kp).transpose()));
    res.per_row.push_back(best);
    acc += best;
    ++used;
  }
  if (used == 0)
    throw InvariantViolationError("cluster_metric: every label row is degenerate");
  res.average = acc / static_cast<double>(used);
  return res;
}

/// Per-source relative errors |sigma_est - sigma_true| / sigma_true.
inline Vector noise_recovery(const Vector& sigmas_est, const Vector& sigmas_true) {
  if (sigmas_est.size() != sigmas_true.size())
    throw DimensionMismatchError("noise_recovery: length mismatch");
  if ((sigmas_est.array() <= 0.0).any() || (sigmas_true.array() <= 0.0).any())
    throw InvariantViolationError("noise_recovery: entries must be positive");
  return ((sigmas_est - sigmas_true).cwiseAbs().array() / sigmas_true.array()).matrix();
}

enum class SelectMode { Any, All };

struct FeatureSelectReport {
  Matrix p_values;            // M x C, upper-tail chi-square p-values
  Matrix q_values;            // Bonferroni-adjusted over all C*M tests
  std::vector<Eigen::Index> selected;
  double significance = 0.05;
  SelectMode mode = SelectMode::Any;
};

/// Variance-vs-noise-floor test: for each feature row and source, the sample
/// variance is tested against the fitted noise variance with a one-sided
/// chi-square test; features significant in any (or all) sources after
/// Bonferroni correction are selected.
inline FeatureSelectReport select_features(const MultiViewData& data,
                                           const Vector& sigma2_est, double significance,
                                           SelectMode mode = SelectMode::Any) {
  validate_data(data);
  if (sigma2_est.size() != data.source_count())
    throw DimensionMismatchError("select_features: one variance per source required");
  if ((sigma2_est.array() <= 0.0).any())
    throw InvariantViolationError("select_features: variances must be positive");
  for (int c = 0; c < data.source_count(); ++c)
    if (data.cols(c) < 2)
      throw InvariantViolationError("select_features: each source needs N_c >= 2");

  const Eigen::Index m = data.rows();
  const int c_count = data.source_count();
  FeatureSelectReport rep;
  rep.significance = significance;
  rep.mode = mode;
  rep.p_values.resize(m, c_count);
  rep.q_values.resize(m, c_count);

  const double n_tests = static_cast<double>(m) * static_cast<double>(c_count);
  for (int c = 0; c < c_count; ++c) {
    const Matrix& x = data.sources[static_cast<std::size_t>(c)];
    const double n = static_cast<double>(x.cols());
    const double dof = n - 1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mean = x.row(i).mean();
      const double s2 = (x.row(i).array() - mean).square().sum() / dof;
      const double p =
          s2 > 0.0 ? detail::chi2_sf(dof * s2 / sigma2_est[c], dof) : 1.0;
      rep.p_values(i, c) = p;
      rep.q_values(i, c) = std::min(1.0, p * n_tests);
    }
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    bool take = false;
    if (mode == SelectMode::Any) {
      take = (rep.q_values.row(i).array() < significance).any();
    } else {
      take = (rep.q_values.row(i).array() < significance).all();
    }
    if (take) rep.selected.push_back(i);
  }
  return rep;
}

}  // namespace bjmd
