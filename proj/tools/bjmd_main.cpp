// bjmd: batch front end for the BJMD multi-source decomposition toolkit.
//
// Subcommands: synth (generate benchmark data), fit (run an engine on a
// manifest), eval (cluster AUC metrics against labels), sweep (the sigma3
// heterogeneity experiment), select (noise-calibrated feature selection).

#include "bjmd/bjmd.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bjmd;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

double percent_2dp(double r) { return std::round(r * 10000.0) / 100.0; }

std::string trace_csv(const FitReport& rep) {
  std::ostringstream out;
  out << "iteration,objective,elapsed_seconds\n";
  char buf[64];
  for (std::size_t i = 0; i < rep.objective_trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.6f", rep.iteration_trace[i],
                  rep.objective_trace[i], rep.elapsed_trace[i]);
    out << buf << "\n";
  }
  return out.str();
}

void write_fit_files(const fs::path& dir, const EngineFit& fit,
                     const std::vector<std::string>& source_names) {
  fs::create_directories(dir);
  write_matrix_csv((dir / "W.csv").string(), fit.state.W);
  for (std::size_t c = 0; c < fit.state.H.size(); ++c)
    write_matrix_csv((dir / ("H_" + std::to_string(c + 1) + ".csv")).string(),
                     fit.state.H[c]);

  json sig;
  for (Eigen::Index c = 0; c < fit.state.sigma2.size(); ++c) {
    sig["sigma2"].push_back(fit.state.sigma2[c]);
    sig["sigma"].push_back(std::sqrt(fit.state.sigma2[c]));
    if (c < static_cast<Eigen::Index>(source_names.size()))
      sig["sources"].push_back(source_names[static_cast<std::size_t>(c)]);
  }
  write_json(dir / "sigma2.json", sig);
  write_text(dir / "trace.csv", trace_csv(fit.report));
}

json fit_summary(const EngineFit& fit) {
  json j;
  j["seed"] = fit.seed;
  j["converged"] = fit.report.converged;
  j["iterations"] = fit.report.iterations;
  j["elapsed_seconds"] = fit.report.elapsed_seconds;
  j["score"] = fit.ranking_score;
  return j;
}

Engine parse_engine(const std::string& name) {
  if (name == "map") return Engine::Map;
  if (name == "advi") return Engine::Advi;
  throw IoError("unknown engine '" + name + "' (expected map or advi)");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  SynthSpec spec = parse_synth_spec(spec_path);
  if (seed_override) spec.seed = *seed_override;

  const SynthDataset ds = gen_dataset(spec);
  const fs::path out(out_dir);
  fs::create_directories(out);

  write_matrix_csv((out / "W_true.csv").string(), ds.W_true);
  Manifest m;
  m.K = spec.K;
  m.seed = spec.seed;
  for (int c = 0; c < spec.C; ++c) {
    const std::string suffix = std::to_string(c + 1) + ".csv";
    write_matrix_csv((out / ("X_" + suffix)).string(),
                     ds.data.sources[static_cast<std::size_t>(c)]);
    write_matrix_csv((out / ("H_true_" + suffix)).string(),
                     ds.H_true[static_cast<std::size_t>(c)]);
    write_label_csv((out / ("labels_" + suffix)).string(),
                    ds.labels[static_cast<std::size_t>(c)]);
    m.sources.push_back({"source_" + std::to_string(c + 1), "X_" + suffix,
                         "labels_" + suffix});
  }
  write_manifest((out / "bjmd.manifest").string(), m);

  json prov;
  prov["command"] = "synth";
  prov["seed"] = spec.seed;
  prov["spec_file"] = spec_path;
  prov["spec"] = json::parse("{}");
  prov["spec"]["a"] = spec.a;
  prov["spec"]["c"] = spec.C;
  prov["spec"]["k"] = spec.K;
  prov["spec"]["l"] = spec.L;
  prov["spec"]["coh"] = spec.coh;
  for (auto n : spec.n_per_source) prov["spec"]["n_c"].push_back(n);
  prov["spec"]["p"] = spec.p;
  for (Eigen::Index i = 0; i < spec.sigmas.size(); ++i)
    prov["spec"]["sigmas"].push_back(spec.sigmas[i]);
  write_json(out / "provenance.json", prov);

  std::cout << "synth: wrote " << spec.C << " sources (" << ds.data.rows() << " features) to "
            << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const std::string& manifest_path, const std::string& out_dir,
            const std::string& engine_flag, int restarts, int keep_best,
            std::optional<std::uint64_t> seed_override, int threads) {
  Manifest m = parse_manifest(manifest_path);
  if (!engine_flag.empty()) m.engine = engine_flag;
  if (seed_override) m.seed = *seed_override;

  const Engine engine = parse_engine(m.engine);
  const MultiViewData data = load_data(m, manifest_path);
  const Hyperparams hyper = m.hyperparams();
  const SolverConfig cfg = m.solver_config();

  std::vector<std::string> names;
  for (const auto& s : m.sources) names.push_back(s.name);

  const fs::path out(out_dir);
  fs::create_directories(out);

  RestartsResult runs;
  bool failed = false;
  std::string failure;
  try {
    runs = run_restarts(engine, data, hyper, cfg, m.seed, restarts, keep_best, threads);
  } catch (const std::exception& e) {
    failed = true;
    failure = e.what();
  }

  json report;
  report["engine"] = m.engine;
  report["seed"] = m.seed;
  report["config_hash"] = manifest_hash(m);
  report["restarts"] = restarts;
  report["keep_best"] = keep_best;
  if (failed) {
    report["error"] = failure;
    write_json(out / "report.json", report);
    std::cerr << "fit: solver failure: " << failure << "\n";
    return 1;
  }

  // Best fit at the top level; each kept restart in its own subdirectory.
  write_fit_files(out, runs.kept.front(), names);
  if (static_cast<int>(runs.kept.size()) > 1) {
    for (std::size_t i = 0; i < runs.kept.size(); ++i)
      write_fit_files(out / ("restart_rank_" + std::to_string(i)), runs.kept[i], names);
  }

  const EngineFit& best = runs.kept.front();
  report["converged"] = best.report.converged;
  report["iterations"] = best.report.iterations;
  report["elapsed_seconds"] = best.report.elapsed_seconds;
  report["total_fit_seconds"] = runs.total_seconds;
  report["final_objective"] = best.ranking_score;
  for (std::size_t r = 0; r < runs.all_seeds.size(); ++r) {
    json run;
    run["seed"] = runs.all_seeds[r];
    run["score"] = runs.all_scores[r];
    report["runs"].push_back(run);
  }
  for (const auto& fit : runs.kept) report["kept"].push_back(fit_summary(fit));
  write_json(out / "report.json", report);

  // A copy of the resolved manifest keeps the fit directory self-contained
  // (eval reads label paths from it).
  Manifest used = m;
  const fs::path base = fs::path(manifest_path).parent_path();
  for (auto& s : used.sources) {
    s.matrix_path = fs::absolute(base / s.matrix_path).string();
    if (!s.labels_path.empty())
      s.labels_path = fs::absolute(base / s.labels_path).string();
  }
  write_manifest((out / "manifest.used").string(), used);

  std::cout << "fit: engine=" << m.engine << " iterations=" << best.report.iterations
            << " converged=" << (best.report.converged ? "yes" : "no")
            << " objective=" << best.ranking_score << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

json eval_one_fit(const fs::path& fit_dir, const std::vector<LabelMatrix>& labels,
                  const std::vector<std::string>& names) {
  // Load however many coefficient matrices the fit produced.
  std::vector<Matrix> hs;
  for (int c = 1;; ++c) {
    const fs::path p = fit_dir / ("H_" + std::to_string(c) + ".csv");
    if (!fs::exists(p)) break;
    hs.push_back(read_matrix_csv(p.string()));
  }
  if (hs.empty()) throw IoError(fit_dir.string() + ": no H_<c>.csv files found");

  const bool concatenated = hs.size() == 1 && labels.size() > 1;
  json out;
  Eigen::Index offset = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    Matrix h;
    if (concatenated) {
      h = hs[0].middleCols(offset, labels[c].cols());
      offset += labels[c].cols();
    } else {
      if (c >= hs.size())
        throw IoError(fit_dir.string() + ": fewer H matrices than label files");
      h = hs[c];
    }
    const ClusterMetric metric = cluster_metric(h, labels[c]);
    json src;
    src["name"] = c < names.size() ? names[c] : ("source_" + std::to_string(c + 1));
    src["auc"] = percent_2dp(metric.average);
    src["auc_raw"] = metric.average;
    src["excluded_rows"] = metric.excluded_rows;
    for (double r : metric.per_row)
      src["per_row"].push_back(std::isfinite(r) ? json(percent_2dp(r)) : json());
    out["per_source"].push_back(src);
  }
  return out;
}

int cmd_eval(const std::string& fit_dir, std::vector<std::string> label_paths,
             const std::string& out_path) {
  const fs::path dir(fit_dir);

  std::vector<std::string> names;
  if (label_paths.empty()) {
    // Pull label files from the manifest the fit recorded.
    const fs::path mp = dir / "manifest.used";
    if (!fs::exists(mp))
      throw IoError("eval: no --labels given and " + mp.string() + " not found");
    const Manifest m = parse_manifest(mp.string());
    for (const auto& s : m.sources) {
      if (s.labels_path.empty())
        throw IoError("eval: manifest source '" + s.name + "' has no labels file");
      label_paths.push_back(
          (fs::path(mp).parent_path() / s.labels_path).string());
      names.push_back(s.name);
    }
  }

  std::vector<LabelMatrix> labels;
  for (const auto& p : label_paths) labels.push_back(read_label_csv(p));

  json metrics;
  std::vector<fs::path> fit_dirs;
  for (int i = 0;; ++i) {
    const fs::path p = dir / ("restart_rank_" + std::to_string(i));
    if (!fs::exists(p)) break;
    fit_dirs.push_back(p);
  }
  if (fit_dirs.empty()) fit_dirs.push_back(dir);

  std::vector<double> mean_auc(labels.size(), 0.0);
  for (const auto& fd : fit_dirs) {
    json one = eval_one_fit(fd, labels, names);
    one["fit_dir"] = fd.string();
    for (std::size_t c = 0; c < labels.size(); ++c)
      mean_auc[c] += one["per_source"][c]["auc_raw"].get<double>();
    metrics["fits"].push_back(one);
  }
  for (std::size_t c = 0; c < mean_auc.size(); ++c) {
    mean_auc[c] /= static_cast<double>(fit_dirs.size());
    metrics["average_auc"].push_back(percent_2dp(mean_auc[c]));
  }
  metrics["evaluated_fits"] = fit_dirs.size();

  const fs::path out = out_path.empty() ? dir / "metrics.json" : fs::path(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, metrics);

  std::cout << "eval: average AUC";
  for (double a : mean_auc) std::cout << " " << percent_2dp(a);
  std::cout << " -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const std::string& spec_path, const std::vector<double>& sigma3_values,
              const std::string& out_dir, const std::string& engines_flag, int restarts,
              int keep_best, std::optional<std::uint64_t> seed_override, int threads) {
  SynthSpec base = parse_synth_spec(spec_path);
  if (seed_override) base.seed = *seed_override;

  SweepOptions opt;
  opt.restarts = restarts;
  opt.keep_best = keep_best;
  opt.threads = threads;
  opt.engines.clear();
  for (const auto& name : detail::split(engines_flag, ','))
    opt.engines.push_back(parse_engine(name));

  Hyperparams hyper = Hyperparams::with_k(base.K);
  SolverConfig map_cfg;
  map_cfg.threads = 1;
  SolverConfig advi_cfg = map_cfg;
  advi_cfg.tol_outer = 1e-2;
  advi_cfg.max_outer_iters = 150000;

  const auto rows = run_sweep(base, sigma3_values, hyper, map_cfg, advi_cfg, opt);

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::ostringstream csv;
  csv << "sigma3,engine,variant,source,auc,seconds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%s,%s,%d,%.2f,%.3f\n", r.sigma3,
                  engine_name(r.engine), r.concatenated ? "catbjmd" : "bjmd", r.source,
                  r.auc_percent, r.seconds);
    csv << buf;
  }
  write_text(out / "sweep.csv", csv.str());

  std::cout << "sweep: " << rows.size() << " rows -> " << (out / "sweep.csv").string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

int cmd_select(const std::string& manifest_path, const std::string& fit_dir,
               double alpha, const std::string& mode_flag, const std::string& out_dir) {
  const Manifest m = parse_manifest(manifest_path);
  const MultiViewData data = load_data(m, manifest_path);

  // Noise floor from the fit.
  const fs::path sig_path = fs::path(fit_dir) / "sigma2.json";
  std::ifstream sig_in(sig_path);
  if (!sig_in) throw IoError(sig_path.string() + ": cannot open (run fit first)");
  json sig = json::parse(sig_in);
  Vector sigma2(data.source_count());
  if (static_cast<int>(sig["sigma2"].size()) != data.source_count())
    throw IoError(sig_path.string() + ": source count mismatch with manifest");
  for (int c = 0; c < data.source_count(); ++c)
    sigma2[c] = sig["sigma2"][static_cast<std::size_t>(c)].get<double>();

  const SelectMode mode = mode_flag == "all" ? SelectMode::All : SelectMode::Any;
  const FeatureSelectReport rep = select_features(data, sigma2, alpha, mode);

  const fs::path out(out_dir);
  fs::create_directories(out);

  json jrep;
  jrep["significance"] = rep.significance;
  jrep["mode"] = mode_flag == "all" ? "all" : "any";
  jrep["total_features"] = data.rows();
  jrep["selected_count"] = rep.selected.size();
  for (auto i : rep.selected) jrep["selected"].push_back(i);
  write_json(out / "selection.json", jrep);
  write_matrix_csv((out / "p_values.csv").string(), rep.p_values);
  write_matrix_csv((out / "q_values.csv").string(), rep.q_values);

  Manifest filtered = m;
  if (rep.selected.empty()) {
    std::cerr << "select: warning: no feature passed q < " << alpha
              << "; manifest returned unchanged\n";
    const fs::path base = fs::path(manifest_path).parent_path();
    for (auto& s : filtered.sources) {
      s.matrix_path = fs::absolute(base / s.matrix_path).string();
      if (!s.labels_path.empty())
        s.labels_path = fs::absolute(base / s.labels_path).string();
    }
  } else {
    for (int c = 0; c < data.source_count(); ++c) {
      const Matrix& x = data.sources[static_cast<std::size_t>(c)];
      Matrix kept(static_cast<Eigen::Index>(rep.selected.size()), x.cols());
      for (std::size_t r = 0; r < rep.selected.size(); ++r)
        kept.row(static_cast<Eigen::Index>(r)) = x.row(rep.selected[r]);
      const std::string name = "X_selected_" + std::to_string(c + 1) + ".csv";
      write_matrix_csv((out / name).string(), kept);
      filtered.sources[static_cast<std::size_t>(c)].matrix_path = name;
      // Labels describe samples, not features; keep them if present.
      if (!filtered.sources[static_cast<std::size_t>(c)].labels_path.empty()) {
        const fs::path base = fs::path(manifest_path).parent_path();
        filtered.sources[static_cast<std::size_t>(c)].labels_path =
            fs::absolute(base / filtered.sources[static_cast<std::size_t>(c)].labels_path)
                .string();
      }
    }
  }
  write_manifest((out / "bjmd.manifest").string(), filtered);

  std::cout << "select: kept " << rep.selected.size() << " of " << data.rows()
            << " features\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bjmd: multi-source matrix decomposition with heterogeneous noise"};
  app.require_subcommand(1);

  int threads = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--threads", threads, "worker threads for restarts and sweeps")
      ->capture_default_str();
  app.add_option("--seed", seed, "override the seed from the spec or manifest");

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  std::string synth_spec, synth_out;
  synth->add_option("spec", synth_spec, "synth spec file")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* fit = app.add_subcommand("fit", "fit the model described by a manifest");
  std::string fit_manifest, fit_out, fit_engine;
  int restarts = 1, keep_best = 1;
  fit->add_option("manifest", fit_manifest, "manifest file")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit->add_option("--engine", fit_engine, "map | advi (overrides manifest)");
  fit->add_option("--restarts", restarts, "independent restarts")->capture_default_str();
  fit->add_option("--keep-best", keep_best, "restarts to keep, ranked by objective")
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "cluster-AUC metrics for a fit");
  std::string eval_dir, eval_out;
  std::vector<std::string> eval_labels;
  eval->add_option("fit_dir", eval_dir, "directory written by fit")->required();
  eval->add_option("--labels", eval_labels, "label CSV per source (default: manifest)");
  eval->add_option("--out", eval_out, "metrics file (default: fit_dir/metrics.json)");

  auto* sweep = app.add_subcommand("sweep", "sigma3 sweep with concatenated ablation");
  std::string sweep_spec, sweep_out, sweep_engines = "map";
  std::vector<double> sigma3_values;
  int sweep_restarts = 20, sweep_keep = 5;
  sweep->add_option("spec", sweep_spec, "base synth spec file")->required();
  sweep->add_option("--sigma3", sigma3_values, "noise levels for the last source")
      ->required();
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_option("--engines", sweep_engines, "comma list: map, advi")
      ->capture_default_str();
  sweep->add_option("--restarts", sweep_restarts, "restarts per cell")
      ->capture_default_str();
  sweep->add_option("--keep-best", sweep_keep, "kept fits per cell")->capture_default_str();

  auto* select = app.add_subcommand("select", "noise-calibrated feature selection");
  std::string sel_manifest, sel_fit, sel_out, sel_mode = "any";
  double alpha = 0.05;
  select->add_option("manifest", sel_manifest, "manifest file")->required();
  select->add_option("fit_dir", sel_fit, "fit directory providing sigma2.json")->required();
  select->add_option("--alpha", alpha, "significance level")->capture_default_str();
  select->add_option("--select-mode", sel_mode, "any | all sources significant")
      ->check(CLI::IsMember({"any", "all"}))
      ->capture_default_str();
  select->add_option("--out", sel_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out, seed);
    if (fit->parsed())
      return cmd_fit(fit_manifest, fit_out, fit_engine, restarts, keep_best, seed, threads);
    if (eval->parsed()) return cmd_eval(eval_dir, eval_labels, eval_out);
    if (sweep->parsed())
      return cmd_sweep(sweep_spec, sigma3_values, sweep_out, sweep_engines, sweep_restarts,
                       sweep_keep, seed, threads);
    if (select->parsed()) return cmd_select(sel_manifest, sel_fit, alpha, sel_mode, sel_out);
  } catch (const std::exception& e) {
    std::cerr << "bjmd: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
