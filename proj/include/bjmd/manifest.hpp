#pragma once

#include "bjmd/csv.hpp"
#include "bjmd/datagen.hpp"
#include "bjmd/types.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace bjmd {

// ---------------------------------------------------------------------------
// Key-value config files: `key = value` lines, '#' comments, and repeated
// `source = name, matrix.csv[, labels.csv]` entries for manifests.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

struct ConfigLine {
  std::string key;
  std::string value;
  int lineno;
};

inline std::vector<ConfigLine> read_config_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<ConfigLine> lines;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    // Strip a trailing comment only when preceded by whitespace or at start.
    std::string line = raw;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    lines.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
  }
  return lines;
}

inline double parse_double(const std::string& path, const ConfigLine& l) {
  char* end = nullptr;
  const double v = std::strtod(l.value.c_str(), &end);
  if (end == l.value.c_str() || *end != '\0')
    throw IoError(path + ":" + std::to_string(l.lineno) + ": '" + l.value +
                  "' is not a number");
  return v;
}

inline long long parse_int(const std::string& path, const ConfigLine& l) {
  char* end = nullptr;
  const long long v = std::strtoll(l.value.c_str(), &end, 10);
  if (end == l.value.c_str() || *end != '\0')
    throw IoError(path + ":" + std::to_string(l.lineno) + ": '" + l.value +
                  "' is not an integer");
  return v;
}

inline std::vector<double> parse_double_list(const std::string& path, const ConfigLine& l) {
  std::vector<double> vals;
  for (const auto& piece : split(l.value, ',')) {
    ConfigLine tmp{l.key, piece, l.lineno};
    vals.push_back(parse_double(path, tmp));
  }
  if (vals.empty())
    throw IoError(path + ":" + std::to_string(l.lineno) + ": empty list");
  return vals;
}

/// FNV-1a over the canonical config text; embedded in reports so outputs can
/// be matched to the exact configuration that produced them.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

struct SourceEntry {
  std::string name;
  std::string matrix_path;
  std::string labels_path;  // optional, empty when absent
};

struct Manifest {
  std::vector<SourceEntry> sources;
  int K = 0;
  std::uint64_t seed = 0;
  std::string engine = "map";  // map | advi
  double lambda = 1.0;
  double alpha0_scalar = 1.1;  // used when alpha0_list is empty
  std::vector<double> alpha0_list;
  double a0 = 1.0;
  double b0 = 1.0;
  std::optional<double> tol_outer;  // engine-dependent default when unset
  std::optional<int> max_outer_iters;
  int check_interval = 100;
  int mc_samples = 1;
  double ip_eta = 0.95;
  int ip_max_iters = 50;
  double ip_tol = 1e-8;
  double z_floor = 1e-10;
  double vi_step = 0.1;

  Hyperparams hyperparams() const {
    Hyperparams h;
    h.lambda = lambda;
    h.a0 = a0;
    h.b0 = b0;
    if (!alpha0_list.empty()) {
      h.alpha0 = Eigen::Map<const Vector>(alpha0_list.data(),
                                          static_cast<Eigen::Index>(alpha0_list.size()));
    } else {
      h.alpha0 = Vector::Constant(K, alpha0_scalar);
    }
    return h;
  }

  SolverConfig solver_config() const {
    SolverConfig cfg;
    cfg.tol_outer = tol_outer.value_or(engine == "advi" ? 1e-2 : 1e-3);
    cfg.max_outer_iters = max_outer_iters.value_or(engine == "advi" ? 150000 : 500);
    cfg.check_interval = check_interval;
    cfg.mc_samples = mc_samples;
    cfg.ip_eta = ip_eta;
    cfg.ip_max_iters = ip_max_iters;
    cfg.ip_tol = ip_tol;
    cfg.rng_seed = seed;
    cfg.z_floor = z_floor;
    cfg.vi_step = vi_step;
    return cfg;
  }
};

inline Manifest parse_manifest(const std::string& path) {
  Manifest m;
  bool have_k = false;
  for (const auto& l : detail::read_config_lines(path)) {
    if (l.key == "source") {
      const auto parts = detail::split(l.value, ',');
      if (parts.size() < 2 || parts.size() > 3)
        throw IoError(path + ":" + std::to_string(l.lineno) +
                      ": source needs 'name, matrix.csv[, labels.csv]'");
      SourceEntry e;
      e.name = parts[0];
      e.matrix_path = parts[1];
      if (parts.size() == 3) e.labels_path = parts[2];
      m.sources.push_back(std::move(e));
    } else if (l.key == "k") {
      m.K = static_cast<int>(detail::parse_int(path, l));
      have_k = true;
    } else if (l.key == "seed") {
      m.seed = static_cast<std::uint64_t>(detail::parse_int(path, l));
    } else if (l.key == "engine") {
      if (l.value != "map" && l.value != "advi")
        throw IoError(path + ":" + std::to_string(l.lineno) +
                      ": engine must be 'map' or 'advi'");
      m.engine = l.value;
    } else if (l.key == "lambda") {
      m.lambda = detail::parse_double(path, l);
    } else if (l.key == "alpha0") {
      const auto vals = detail::parse_double_list(path, l);
      if (vals.size() == 1) {
        m.alpha0_scalar = vals[0];
        m.alpha0_list.clear();
      } else {
        m.alpha0_list = vals;
      }
    } else if (l.key == "a0") {
      m.a0 = detail::parse_double(path, l);
    } else if (l.key == "b0") {
      m.b0 = detail::parse_double(path, l);
    } else if (l.key == "tol_outer") {
      m.tol_outer = detail::parse_double(path, l);
    } else if (l.key == "max_outer_iters") {
      m.max_outer_iters = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "check_interval") {
      m.check_interval = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "mc_samples") {
      m.mc_samples = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "ip_eta") {
      m.ip_eta = detail::parse_double(path, l);
    } else if (l.key == "ip_max_iters") {
      m.ip_max_iters = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "ip_tol") {
      m.ip_tol = detail::parse_double(path, l);
    } else if (l.key == "z_floor") {
      m.z_floor = detail::parse_double(path, l);
    } else if (l.key == "vi_step") {
      m.vi_step = detail::parse_double(path, l);
    } else {
      throw IoError(path + ":" + std::to_string(l.lineno) + ": unknown key '" + l.key + "'");
    }
  }
  if (m.sources.empty()) throw IoError(path + ": manifest needs at least one source");
  if (!have_k || m.K < 1) throw IoError(path + ": manifest needs k >= 1");

  // Referenced files must exist at load time, resolved against the manifest dir.
  const auto base = std::filesystem::path(path).parent_path();
  for (auto& s : m.sources) {
    const auto mp = base / s.matrix_path;
    if (!std::filesystem::exists(mp))
      throw IoError(path + ": missing matrix file " + mp.string());
    if (!s.labels_path.empty() && !std::filesystem::exists(base / s.labels_path))
      throw IoError(path + ": missing labels file " + (base / s.labels_path).string());
  }
  if (!m.alpha0_list.empty() && static_cast<int>(m.alpha0_list.size()) != m.K)
    throw IoError(path + ": alpha0 list must have k entries");
  return m;
}

inline std::string manifest_to_string(const Manifest& m) {
  std::ostringstream out;
  out << "# BJMD manifest\n";
  out << "k = " << m.K << "\n";
  out << "seed = " << m.seed << "\n";
  out << "engine = " << m.engine << "\n";
  out << "lambda = " << m.lambda << "\n";
  if (!m.alpha0_list.empty()) {
    out << "alpha0 = ";
    for (std::size_t i = 0; i < m.alpha0_list.size(); ++i)
      out << (i ? ", " : "") << m.alpha0_list[i];
    out << "\n";
  } else {
    out << "alpha0 = " << m.alpha0_scalar << "\n";
  }
  out << "a0 = " << m.a0 << "\n";
  out << "b0 = " << m.b0 << "\n";
  if (m.tol_outer) out << "tol_outer = " << *m.tol_outer << "\n";
  if (m.max_outer_iters) out << "max_outer_iters = " << *m.max_outer_iters << "\n";
  out << "check_interval = " << m.check_interval << "\n";
  out << "mc_samples = " << m.mc_samples << "\n";
  out << "ip_eta = " << m.ip_eta << "\n";
  out << "ip_max_iters = " << m.ip_max_iters << "\n";
  out << "ip_tol = " << m.ip_tol << "\n";
  out << "z_floor = " << m.z_floor << "\n";
  out << "vi_step = " << m.vi_step << "\n";
  for (const auto& s : m.sources) {
    out << "source = " << s.name << ", " << s.matrix_path;
    if (!s.labels_path.empty()) out << ", " << s.labels_path;
    out << "\n";
  }
  return out.str();
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << manifest_to_string(m);
  if (!out) throw IoError(path + ": write failed");
}

inline std::string manifest_hash(const Manifest& m) {
  return detail::fnv1a_hex(manifest_to_string(m));
}

/// Loads every source matrix named by the manifest (paths relative to it).
inline MultiViewData load_data(const Manifest& m, const std::string& manifest_path) {
  const auto base = std::filesystem::path(manifest_path).parent_path();
  MultiViewData data;
  for (const auto& s : m.sources)
    data.sources.push_back(read_matrix_csv((base / s.matrix_path).string()));
  validate_data(data);
  return data;
}

/// Loads label matrices for sources that declare them; entries without labels
/// come back empty.
inline std::vector<LabelMatrix> load_labels(const Manifest& m,
                                            const std::string& manifest_path) {
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<LabelMatrix> labels;
  for (const auto& s : m.sources) {
    if (s.labels_path.empty())
      labels.emplace_back();
    else
      labels.push_back(read_label_csv((base / s.labels_path).string()));
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Synthetic-data spec files share the key-value format.
// ---------------------------------------------------------------------------

inline SynthSpec parse_synth_spec(const std::string& path) {
  SynthSpec s;
  std::vector<Eigen::Index> n_list;
  std::vector<double> sigma_list;
  for (const auto& l : detail::read_config_lines(path)) {
    if (l.key == "a") {
      s.a = detail::parse_double(path, l);
    } else if (l.key == "c") {
      s.C = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "k") {
      s.K = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "l") {
      s.L = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "coh") {
      s.coh = static_cast<int>(detail::parse_int(path, l));
    } else if (l.key == "n_c") {
      for (double v : detail::parse_double_list(path, l))
        n_list.push_back(static_cast<Eigen::Index>(v));
    } else if (l.key == "p") {
      s.p = detail::parse_double(path, l);
    } else if (l.key == "sigmas") {
      sigma_list = detail::parse_double_list(path, l);
    } else if (l.key == "seed") {
      s.seed = static_cast<std::uint64_t>(detail::parse_int(path, l));
    } else {
      throw IoError(path + ":" + std::to_string(l.lineno) + ": unknown key '" + l.key + "'");
    }
  }
  if (n_list.size() == 1)
    s.n_per_source.assign(static_cast<std::size_t>(s.C), n_list[0]);
  else
    s.n_per_source = n_list;
  s.sigmas = Eigen::Map<const Vector>(sigma_list.data(),
                                      static_cast<Eigen::Index>(sigma_list.size()));
  s.check();
  return s;
}

inline std::string synth_spec_to_string(const SynthSpec& s) {
  std::ostringstream out;
  out << "# BJMD synthetic data spec\n";
  out << "a = " << s.a << "\n";
  out << "c = " << s.C << "\n";
  out << "k = " << s.K << "\n";
  out << "l = " << s.L << "\n";
  out << "coh = " << s.coh << "\n";
  out << "n_c = ";
  for (std::size_t i = 0; i < s.n_per_source.size(); ++i)
    out << (i ? ", " : "") << s.n_per_source[i];
  out << "\n";
  out << "p = " << s.p << "\n";
  out << "sigmas = ";
  for (Eigen::Index i = 0; i < s.sigmas.size(); ++i) out << (i ? ", " : "") << s.sigmas[i];
  out << "\n";
  out << "seed = " << s.seed << "\n";
  return out.str();
}

}  // namespace bjmd
