#pragma once

#include "bjmd/rng.hpp"
#include "bjmd/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace bjmd {

// ---------------------------------------------------------------------------
// Synthetic multi-source benchmark: banded ground-truth basis with
// overlapping blocks, Bernoulli-supported column-stochastic coefficients,
// Gaussian noise with a distinct level per source.
// ---------------------------------------------------------------------------

struct SynthSpec {
  double a = 2.0;   // basis magnitude
  int C = 3;        // sources
  int K = 5;        // factors
  int L = 30;       // nonzeros per active basis column
  int coh = 5;      // row overlap between consecutive basis columns
  std::vector<Eigen::Index> n_per_source;  // N_c
  double p = 0.3;   // Bernoulli support rate
  Vector sigmas;    // noise standard deviation per source
  std::uint64_t seed = 0;

  Eigen::Index rows() const {
    return static_cast<Eigen::Index>(L) +
           static_cast<Eigen::Index>(K - 2) * static_cast<Eigen::Index>(L - coh);
  }

  void check() const {
    if (K < 2) throw InvariantViolationError("synth spec: K must be >= 2");
    if (!(coh > 0 && coh < L))
      throw InvariantViolationError("synth spec: need 0 < coh < L");
    if (!(a > 0.0)) throw InvariantViolationError("synth spec: a must be > 0");
    if (!(p > 0.0 && p < 1.0))
      throw InvariantViolationError("synth spec: p must lie in (0,1)");
    if (C < 1) throw InvariantViolationError("synth spec: C must be >= 1");
    if (static_cast<int>(n_per_source.size()) != C)
      throw DimensionMismatchError("synth spec: need one sample count per source");
    for (auto n : n_per_source)
      if (n < 1) throw InvariantViolationError("synth spec: sample counts must be >= 1");
    if (sigmas.size() != C)
      throw DimensionMismatchError("synth spec: need one sigma per source");
    if ((sigmas.array() < 0.0).any())
      throw InvariantViolationError("synth spec: sigmas must be nonnegative");
    if (rows() < 1) throw InvariantViolationError("synth spec: derived M must be >= 1");
  }
};

struct SynthDataset {
  MultiViewData data;
  Matrix W_true;
  std::vector<Matrix> H_true;
  std::vector<LabelMatrix> labels;
  Vector sigmas_true;
};

/// Banded ground-truth basis: column k (k = 1..K-1) holds the constant `a` on
/// L consecutive rows, consecutive columns overlapping in `coh` rows; the last
/// column is identically zero.
inline Matrix gen_basis(const SynthSpec& spec) {
  spec.check();
  Matrix w = Matrix::Zero(spec.rows(), spec.K);
  for (int k = 0; k < spec.K - 1; ++k) {
    const Eigen::Index first = static_cast<Eigen::Index>(k) * (spec.L - spec.coh);
    w.block(first, k, spec.L, 1).setConstant(spec.a);
  }
  return w;
}

/// Coefficients and ground-truth labels for source c. Rows 1..K-1 draw iid
/// Bernoulli(p) support; a column with empty support is assigned to the
/// catch-all factor K. Columns are then normalized to sum to exactly 1; the
/// labels record the pre-normalization support.
inline std::pair<Matrix, LabelMatrix> gen_coefficients(const SynthSpec& spec, int c) {
  spec.check();
  if (c < 0 || c >= spec.C)
    throw InvariantViolationError("gen_coefficients: source index out of range");

  Rng rng = Rng(spec.seed).spawn(static_cast<std::uint64_t>(c) + 1);
  const Eigen::Index n = spec.n_per_source[static_cast<std::size_t>(c)];

  Matrix h = Matrix::Zero(spec.K, n);
  LabelMatrix labels = LabelMatrix::Zero(spec.K, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    int support = 0;
    for (int k = 0; k < spec.K - 1; ++k)
      if (rng.bernoulli(spec.p)) {
        h(k, j) = 1.0;
        labels(k, j) = 1;
        ++support;
      }
    if (support == 0) {
      h(spec.K - 1, j) = 1.0;
      labels(spec.K - 1, j) = 1;
      support = 1;
    }
    h.col(j) /= static_cast<double>(support);
    // Pin the column sum to exactly 1.
    Eigen::Index last = spec.K - 1;
    while (last > 0 && h(last, j) == 0.0) --last;
    h(last, j) += 1.0 - h.col(j).sum();
  }
  return {std::move(h), std::move(labels)};
}

/// Full dataset: X(c) = W_true * H_true(c) + Gaussian noise with deviation
/// sigma_c. Bit-identical for identical spec and seed.
inline SynthDataset gen_dataset(const SynthSpec& spec) {
  spec.check();

  SynthDataset ds;
  ds.W_true = gen_basis(spec);
  ds.sigmas_true = spec.sigmas;

  Rng root(spec.seed);
  for (int c = 0; c < spec.C; ++c) {
    auto [h, labels] = gen_coefficients(spec, c);
    Matrix x = ds.W_true * h;
    Rng noise = root.spawn(0x100 + static_cast<std::uint64_t>(c));
    const double sigma = spec.sigmas[c];
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += sigma * noise.normal();
    ds.H_true.push_back(std::move(h));
    ds.labels.push_back(std::move(labels));
    ds.data.sources.push_back(std::move(x));
  }
  return ds;
}

/// All sources merged column-wise into a single source. Column order follows
/// the source order, so per-source slices can be recovered from the counts.
inline MultiViewData concatenate_sources(const MultiViewData& data) {
  validate_data(data);
  Matrix merged(data.rows(), data.total_cols());
  Eigen::Index off = 0;
  for (const auto& x : data.sources) {
    merged.middleCols(off, x.cols()) = x;
    off += x.cols();
  }
  MultiViewData out;
  out.sources.push_back(std::move(merged));
  return out;
}

}  // namespace bjmd
