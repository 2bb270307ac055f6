#pragma once

#include "bjmd/advi.hpp"
#include "bjmd/datagen.hpp"
#include "bjmd/evaluation.hpp"
#include "bjmd/map_solver.hpp"
#include "bjmd/parallel.hpp"
#include "bjmd/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace bjmd {

// ---------------------------------------------------------------------------
// The restart protocol shared by the CLI and the experiment driver: fit R
// times from different seeds, rank by final objective, keep the best B.
// ---------------------------------------------------------------------------

enum class Engine { Map, Advi };

inline const char* engine_name(Engine e) { return e == Engine::Map ? "map" : "advi"; }

struct EngineFit {
  ModelState state;
  FitReport report;
  std::vector<double> h_change_trace;  // VI only
  double ranking_score = 0.0;          // lower is better for both engines
  std::uint64_t seed = 0;
};

inline EngineFit run_engine(Engine engine, const MultiViewData& data,
                            const Hyperparams& hyper, const SolverConfig& cfg,
                            std::uint64_t seed) {
  EngineFit out;
  out.seed = seed;
  if (engine == Engine::Map) {
    SolverConfig c = cfg;
    c.rng_seed = seed;
    MapFit fit = fit_map(data, hyper, c);
    out.state = std::move(fit.state);
    out.report = std::move(fit.report);
    out.ranking_score = out.report.objective_trace.back();
  } else {
    ViFit fit = fit_advi(data, hyper, cfg, seed);
    out.state = std::move(fit.extracted);
    out.report = std::move(fit.report);
    out.h_change_trace = std::move(fit.h_change_trace);
    out.ranking_score = -fit.elbo_tail_mean;  // maximize ELBO
  }
  return out;
}

struct RestartsResult {
  std::vector<EngineFit> kept;  // best first
  std::vector<double> all_scores;
  std::vector<std::uint64_t> all_seeds;
  double total_seconds = 0.0;
};

/// Runs `restarts` independent fits from seeds base_seed, base_seed+1, ...
/// (deterministic for any thread count) and keeps the `keep_best` best ones
/// by final objective (MAP) or tail ELBO (VI).
inline RestartsResult run_restarts(Engine engine, const MultiViewData& data,
                                   const Hyperparams& hyper, const SolverConfig& cfg,
                                   std::uint64_t base_seed, int restarts, int keep_best,
                                   int threads) {
  if (restarts < 1) throw InvariantViolationError("run_restarts: restarts must be >= 1");
  keep_best = std::min(std::max(keep_best, 1), restarts);

  std::vector<EngineFit> fits(static_cast<std::size_t>(restarts));
  parallel_for(restarts, threads, [&](int r) {
    fits[static_cast<std::size_t>(r)] =
        run_engine(engine, data, hyper, cfg, base_seed + static_cast<std::uint64_t>(r));
  });

  RestartsResult res;
  for (const auto& f : fits) {
    res.all_scores.push_back(f.ranking_score);
    res.all_seeds.push_back(f.seed);
    res.total_seconds += f.report.elapsed_seconds;
  }

  std::vector<int> order(static_cast<std::size_t>(restarts));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return fits[static_cast<std::size_t>(a)].ranking_score <
           fits[static_cast<std::size_t>(b)].ranking_score;
  });
  for (int i = 0; i < keep_best; ++i)
    res.kept.push_back(std::move(fits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]));
  return res;
}

/// Per-source cluster metric of one fitted state against ground-truth labels.
inline std::vector<double> per_source_metric(const ModelState& state,
                                             const std::vector<LabelMatrix>& labels) {
  std::vector<double> r;
  for (std::size_t c = 0; c < labels.size(); ++c)
    r.push_back(cluster_metric(state.H[c], labels[c]).average);
  return r;
}

/// Per-source metric for a fit on column-concatenated data: slices the single
/// coefficient matrix back into per-source blocks.
inline std::vector<double> per_source_metric_concat(const ModelState& state,
                                                    const std::vector<LabelMatrix>& labels) {
  const Matrix& h = state.H.at(0);
  std::vector<double> r;
  Eigen::Index off = 0;
  for (const auto& l : labels) {
    r.push_back(cluster_metric(h.middleCols(off, l.cols()), l).average);
    off += l.cols();
  }
  return r;
}

/// Mean per-source metric over the kept fits of a restart run. `concatenated`
/// selects the sliced evaluation for single-source fits of merged data.
inline std::vector<double> mean_metric_over_kept(const RestartsResult& runs,
                                                 const std::vector<LabelMatrix>& labels,
                                                 bool concatenated) {
  std::vector<double> acc(labels.size(), 0.0);
  for (const auto& fit : runs.kept) {
    const auto r = concatenated ? per_source_metric_concat(fit.state, labels)
                                : per_source_metric(fit.state, labels);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += r[c];
  }
  for (auto& v : acc) v /= static_cast<double>(runs.kept.size());
  return acc;
}

// ---------------------------------------------------------------------------
// The sigma3 sweep: for each noise level of the last source, fit the
// multi-source model and the concatenated ablation, both under the requested
// engines, and record per-source metrics.
// ---------------------------------------------------------------------------

struct SweepRow {
  double sigma3 = 0.0;
  Engine engine = Engine::Map;
  bool concatenated = false;
  int source = 0;
  double auc_percent = 0.0;  // NaN when the cell failed
  double seconds = 0.0;
};

struct SweepOptions {
  int restarts = 20;
  int keep_best = 5;
  int threads = 1;
  std::vector<Engine> engines = {Engine::Map};
};

inline SynthSpec spec_with_sigma3(SynthSpec base, double sigma3, std::uint64_t seed) {
  base.sigmas[base.sigmas.size() - 1] = sigma3;
  base.seed = seed;
  return base;
}

inline std::vector<SweepRow> run_sweep(const SynthSpec& base_spec,
                                       const std::vector<double>& sigma3_values,
                                       const Hyperparams& hyper, const SolverConfig& map_cfg,
                                       const SolverConfig& advi_cfg, const SweepOptions& opt) {
  if (sigma3_values.empty())
    throw InvariantViolationError("run_sweep: sigma3 list must be non-empty");

  std::vector<SweepRow> rows;
  for (std::size_t idx = 0; idx < sigma3_values.size(); ++idx) {
    const double sigma3 = sigma3_values[idx];
    const SynthSpec spec =
        spec_with_sigma3(base_spec, sigma3, base_spec.seed + 1000 * (idx + 1));
    const SynthDataset ds = gen_dataset(spec);
    const MultiViewData merged = concatenate_sources(ds.data);

    for (Engine engine : opt.engines) {
      const SolverConfig& cfg = engine == Engine::Map ? map_cfg : advi_cfg;
      for (int variant = 0; variant < 2; ++variant) {
        const bool concat = variant == 1;
        SweepRow proto;
        proto.sigma3 = sigma3;
        proto.engine = engine;
        proto.concatenated = concat;
        try {
          const RestartsResult runs =
              run_restarts(engine, concat ? merged : ds.data, hyper, cfg, spec.seed,
                           opt.restarts, opt.keep_best, opt.threads);
          const auto metric = mean_metric_over_kept(runs, ds.labels, concat);
          for (std::size_t c = 0; c < metric.size(); ++c) {
            SweepRow row = proto;
            row.source = static_cast<int>(c) + 1;
            row.auc_percent = 100.0 * metric[c];
            row.seconds = runs.total_seconds;
            rows.push_back(row);
          }
        } catch (const std::exception&) {
          // Record the failed cell and keep sweeping.
          for (int c = 0; c < spec.C; ++c) {
            SweepRow row = proto;
            row.source = c + 1;
            row.auc_percent = std::numeric_limits<double>::quiet_NaN();
            rows.push_back(row);
          }
        }
      }
    }
  }
  return rows;
}

}  // namespace bjmd
