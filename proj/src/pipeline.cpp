#include "airseg/pipeline.hpp"

#include "airseg/clustering.hpp"
#include "airseg/constraints.hpp"
#include "airseg/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace airseg {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value, const std::string& where) {
  std::vector<std::string> items;
  if (trim(value).empty()) return items;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    const std::string piece = trim(comma == std::string::npos
                                       ? value.substr(start)
                                       : value.substr(start, comma - start));
    if (piece.empty()) throw Error(where + ": empty list element");
    items.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

double parse_double(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw Error("");
    return v;
  } catch (const std::exception&) {
    throw Error(where + ": expected a number, got \"" + value + "\"");
  }
}

long long parse_int(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw Error("");
    return v;
  } catch (const std::exception&) {
    throw Error(where + ": expected an integer, got \"" + value + "\"");
  }
}

std::uint64_t parse_uint(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value[0] == '-') throw Error("");
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw Error("");
    return v;
  } catch (const std::exception&) {
    throw Error(where + ": expected a non-negative integer, got \"" + value + "\"");
  }
}

bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw Error(where + ": expected true or false, got \"" + value + "\"");
}

std::vector<Index> parse_index_list(const std::string& value, const std::string& where) {
  std::vector<Index> out;
  for (const auto& item : split_list(value, where))
    out.push_back(Index(parse_int(item, where)));
  return out;
}

// "index:weight" pairs, comma separated.
std::vector<SignalFeature> parse_signal(const std::string& value, const std::string& where) {
  std::vector<SignalFeature> out;
  for (const auto& item : split_list(value, where)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw Error(where + ": expected index:weight, got \"" + item + "\"");
    SignalFeature sf;
    sf.index = Index(parse_int(trim(item.substr(0, colon)), where));
    sf.weight = parse_double(trim(item.substr(colon + 1)), where);
    out.push_back(sf);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ',';
    s += items[i];
  }
  return s;
}

std::string join_indices(const std::vector<Index>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(items[i]);
  }
  return s;
}

std::string join_signal(const std::vector<SignalFeature>& signal) {
  std::string s;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(signal[i].index) + ':' + fmt(signal[i].weight);
  }
  return s;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> v{"euclidean", "covariance", "mmc", "itml",
                                          "lmnn"};
  return v;
}

bool is_learned(const std::string& method) {
  return method == "mmc" || method == "itml" || method == "lmnn";
}

// Filesystem-safe tag for an output name.
std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    s += ok ? c : '_';
  }
  if (s.empty()) s = "output";
  return s;
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  return out;
}

FeatureMatrix subset_rows(const FeatureMatrix& fm, const std::vector<Index>& rows) {
  FeatureMatrix r;
  r.columns = fm.columns;
  r.X.resize(Index(rows.size()), fm.cols());
  r.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.X.row(Index(i)) = fm.X.row(rows[i]);
    r.ids.push_back(fm.ids[std::size_t(rows[i])]);
  }
  return r;
}

OutputVector subset_rows(const OutputVector& out, const std::vector<Index>& rows) {
  OutputVector r;
  r.name = out.name;
  r.unit = out.unit;
  r.y.resize(Index(rows.size()));
  r.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.y(Index(i)) = out.y(rows[i]);
    r.ids.push_back(out.ids[std::size_t(rows[i])]);
  }
  return r;
}

std::vector<OutputVector> select_outputs(std::vector<OutputVector> all,
                                         const std::vector<std::string>& requested,
                                         const std::string& path) {
  if (requested.empty()) return all;
  std::vector<OutputVector> chosen;
  for (const auto& name : requested) {
    const auto it = std::find_if(all.begin(), all.end(),
                                 [&](const OutputVector& o) { return o.name == name; });
    if (it == all.end())
      throw Error("output \"" + name + "\" not present in " + path);
    chosen.push_back(*it);
  }
  return chosen;
}

const LearnerConfig& learner_for(const PipelineConfig& cfg, const std::string& method) {
  if (method == "mmc") return cfg.mmc;
  if (method == "itml") return cfg.itml;
  return cfg.lmnn;
}


struct ConfigSetter {
  PipelineConfig& cfg;
  const std::string& where;

  void apply(const std::string& section, const std::string& key, const std::string& value) {
    if (section == "paths") return paths(key, value);
    if (section == "run") return run(key, value);
    if (section == "training") return training(key, value);
    if (section == "constraints") return constraints(key, value);
    if (section == "mmc") return mmc(key, value);
    if (section == "itml") return itml(key, value);
    if (section == "lmnn") return lmnn(key, value);
    if (section == "synth") return synth(key, value);
    throw Error(where + ": unknown section [" + section + "]");
  }

  void paths(const std::string& key, const std::string& value) {
    if (key == "schema") cfg.schema_path = value;
    else if (key == "features") cfg.features_path = value;
    else if (key == "outputs") cfg.outputs_path = value;
    else if (key == "output_dir") cfg.output_dir = value;
    else throw Error(where + ": unknown key \"" + key + "\" in [paths]");
  }

  void run(const std::string& key, const std::string& value) {
    if (key == "methods") cfg.methods = split_list(value, where);
    else if (key == "outputs") cfg.outputs = split_list(value, where);
    else if (key == "ks") cfg.ks = parse_index_list(value, where);
    else if (key == "threads") cfg.threads = int(parse_int(value, where));
    else if (key == "engineer") cfg.engineer = parse_bool(value, where);
    else if (key == "importance_top") cfg.importance_top = Index(parse_int(value, where));
    else throw Error(where + ": unknown key \"" + key + "\" in [run]");
  }

  void training(const std::string& key, const std::string& value) {
    if (key == "fraction") cfg.training_fraction = parse_double(value, where);
    else if (key == "ids") cfg.training_ids = split_list(value, where);
    else throw Error(where + ": unknown key \"" + key + "\" in [training]");
  }

  void constraints(const std::string& key, const std::string& value) {
    if (key == "tail") cfg.tail = parse_double(value, where);
    else if (key == "rho_mi") cfg.rho_mi = Index(parse_int(value, where));
    else if (key == "rho_ma") cfg.rho_ma = Index(parse_int(value, where));
    else throw Error(where + ": unknown key \"" + key + "\" in [constraints]");
  }

  void mmc(const std::string& key, const std::string& value) {
    if (key == "max_iterations") cfg.mmc.max_iterations = Index(parse_int(value, where));
    else if (key == "tolerance") cfg.mmc.tolerance = parse_double(value, where);
    else if (key == "initial_step") cfg.mmc.initial_step = parse_double(value, where);
    else throw Error(where + ": unknown key \"" + key + "\" in [mmc]");
  }

  void itml(const std::string& key, const std::string& value) {
    if (key == "max_iterations") cfg.itml.max_iterations = Index(parse_int(value, where));
    else if (key == "tolerance") cfg.itml.tolerance = parse_double(value, where);
    else if (key == "gamma") cfg.itml.gamma = parse_double(value, where);
    else if (key == "u") {
      if (trim(value).empty()) cfg.itml.u.reset();
      else cfg.itml.u = parse_double(value, where);
    } else if (key == "l") {
      if (trim(value).empty()) cfg.itml.l.reset();
      else cfg.itml.l = parse_double(value, where);
    } else throw Error(where + ": unknown key \"" + key + "\" in [itml]");
  }

  void lmnn(const std::string& key, const std::string& value) {
    if (key == "max_iterations") cfg.lmnn.max_iterations = Index(parse_int(value, where));
    else if (key == "tolerance") cfg.lmnn.tolerance = parse_double(value, where);
    else if (key == "mu") cfg.lmnn.mu = parse_double(value, where);
    else if (key == "initial_step") cfg.lmnn.initial_step = parse_double(value, where);
    else throw Error(where + ": unknown key \"" + key + "\" in [lmnn]");
  }

  void synth(const std::string& key, const std::string& value) {
    if (key == "n") cfg.synth.n = Index(parse_int(value, where));
    else if (key == "d") cfg.synth.d = Index(parse_int(value, where));
    else if (key == "noise_sd") cfg.synth.noise_sd = parse_double(value, where);
    else if (key == "seed") cfg.synth.seed = parse_uint(value, where);
    else if (key == "offset") cfg.synth.offset = parse_double(value, where);
    else if (key == "signal") cfg.synth.signal = parse_signal(value, where);
    else if (key == "output_name") cfg.synth.output_name = value;
    else throw Error(where + ": unknown key \"" + key + "\" in [synth]");
  }
};

}  // namespace

void PipelineConfig::validate() const {
  if (output_dir.empty()) throw Error("config: output_dir must not be empty");

  if (methods.empty()) throw Error("config: methods must not be empty");
  for (const auto& m : methods) {
    const auto& known = known_methods();
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw Error("config: unknown method \"" + m + "\"");
    if (std::count(methods.begin(), methods.end(), m) > 1)
      throw Error("config: duplicate method \"" + m + "\"");
  }

  if (ks.empty()) throw Error("config: ks must not be empty");
  for (Index k : ks) {
    if (k < 1) throw Error("config: every k must be at least 1");
    if (std::count(ks.begin(), ks.end(), k) > 1)
      throw Error("config: duplicate k " + std::to_string(k));
  }

  if (threads < 1) throw Error("config: threads must be at least 1");
  if (importance_top < 1) throw Error("config: importance_top must be at least 1");

  if (!(training_fraction > 0.0 && training_fraction < 1.0))
    throw Error("config: training fraction must lie in (0, 1)");
  for (const auto& id : training_ids)
    if (std::count(training_ids.begin(), training_ids.end(), id) > 1)
      throw Error("config: duplicate training id \"" + id + "\"");

  if (!(tail > 0.0 && tail < 0.5))
    throw Error("config: tail must lie in (0, 0.5)");
  if (rho_mi < 1) throw Error("config: rho_mi must be at least 1");
  if (rho_ma < 1) throw Error("config: rho_ma must be at least 1");

  LearnerConfig lc = mmc;
  lc.algorithm = "mmc";
  lc.validate();
  lc = itml;
  lc.algorithm = "itml";
  lc.validate();
  lc = lmnn;
  lc.algorithm = "lmnn";
  lc.validate();

  if (synth.n < 4) throw Error("config: synth n must be at least 4");
  if (synth.d < 1) throw Error("config: synth d must be at least 1");
  if (synth.noise_sd < 0.0) throw Error("config: synth noise_sd must be non-negative");
  if (synth.output_name.empty()) throw Error("config: synth output_name must not be empty");
  for (const auto& s : synth.signal)
    if (s.index < 0 || s.index >= synth.d)
      throw Error("config: synth signal index " + std::to_string(s.index) +
                  " out of range for d=" + std::to_string(synth.d));
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = "config line " + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw Error(where + ": malformed section header \"" + t + "\"");
      section = t.substr(1, t.size() - 2);
      static const std::vector<std::string> sections{"paths", "run", "training",
                                                     "constraints", "mmc", "itml",
                                                     "lmnn", "synth"};
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw Error(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(where + ": expected key = value");
    if (section.empty())
      throw Error(where + ": key outside any section");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw Error(where + ": empty key");
    ConfigSetter{cfg, where}.apply(section, key, value);
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_text(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "[paths]\n";
  out << "schema = " << cfg.schema_path << "\n";
  out << "features = " << cfg.features_path << "\n";
  out << "outputs = " << cfg.outputs_path << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "\n[run]\n";
  out << "methods = " << join(cfg.methods) << "\n";
  out << "outputs = " << join(cfg.outputs) << "\n";
  out << "ks = " << join_indices(cfg.ks) << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "engineer = " << (cfg.engineer ? "true" : "false") << "\n";
  out << "importance_top = " << cfg.importance_top << "\n";
  out << "\n[training]\n";
  out << "fraction = " << fmt(cfg.training_fraction) << "\n";
  out << "ids = " << join(cfg.training_ids) << "\n";
  out << "\n[constraints]\n";
  out << "tail = " << fmt(cfg.tail) << "\n";
  out << "rho_mi = " << cfg.rho_mi << "\n";
  out << "rho_ma = " << cfg.rho_ma << "\n";
  out << "\n[mmc]\n";
  out << "max_iterations = " << cfg.mmc.max_iterations << "\n";
  out << "tolerance = " << fmt(cfg.mmc.tolerance) << "\n";
  out << "initial_step = " << fmt(cfg.mmc.initial_step) << "\n";
  out << "\n[itml]\n";
  out << "max_iterations = " << cfg.itml.max_iterations << "\n";
  out << "tolerance = " << fmt(cfg.itml.tolerance) << "\n";
  out << "gamma = " << fmt(cfg.itml.gamma) << "\n";
  out << "u = " << (cfg.itml.u ? fmt(*cfg.itml.u) : "") << "\n";
  out << "l = " << (cfg.itml.l ? fmt(*cfg.itml.l) : "") << "\n";
  out << "\n[lmnn]\n";
  out << "max_iterations = " << cfg.lmnn.max_iterations << "\n";
  out << "tolerance = " << fmt(cfg.lmnn.tolerance) << "\n";
  out << "mu = " << fmt(cfg.lmnn.mu) << "\n";
  out << "initial_step = " << fmt(cfg.lmnn.initial_step) << "\n";
  out << "\n[synth]\n";
  out << "n = " << cfg.synth.n << "\n";
  out << "d = " << cfg.synth.d << "\n";
  out << "noise_sd = " << fmt(cfg.synth.noise_sd) << "\n";
  out << "seed = " << cfg.synth.seed << "\n";
  out << "offset = " << fmt(cfg.synth.offset) << "\n";
  out << "signal = " << join_signal(cfg.synth.signal) << "\n";
  out << "output_name = " << cfg.synth.output_name << "\n";
  return out.str();
}

void save_config(const PipelineConfig& cfg, const std::string& path) {
  auto out = open_out(path);
  out << config_text(cfg);
  if (!out) throw Error("save_config: write failed for " + path);
}

namespace {

int stage_rank(const std::string& until) {
  static const std::vector<std::string> order{"encode", "prototypes", "constraints",
                                              "fit", "segment", "full"};
  const auto it = std::find(order.begin(), order.end(), until);
  if (it == order.end())
    throw Error("run_pipeline: unknown stage \"" + until + "\"");
  return int(it - order.begin());
}

// Cells in method-major order; comparisons against the baseline when present.
SegmentationReport build_report(
    const std::vector<std::string>& methods,
    const std::vector<OutputVector>& outs, const std::vector<Index>& ks,
    const std::function<const Clustering&(const std::string&, const std::string&,
                                          std::size_t)>& clustering_at) {
  SegmentationReport rep;
  if (std::find(methods.begin(), methods.end(), "euclidean") != methods.end())
    rep.baseline = "euclidean";
  for (const auto& m : methods) {
    for (const auto& out : outs) {
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        const Clustering& c = clustering_at(m, out.name, ki);
        SegmentationCell cell;
        cell.method = m;
        cell.output = out.name;
        cell.k = ks[ki];
        cell.clustering = c;
        cell.cv = cv_summary(c, out);
        cell.max_range = maximum_range(c, out);
        rep.cells.push_back(std::move(cell));
      }
    }
  }
  if (!rep.baseline.empty()) {
    std::map<std::pair<std::string, Index>, double> base_median;
    for (const auto& cell : rep.cells)
      if (cell.method == rep.baseline)
        base_median[{cell.output, cell.k}] = cell.cv.median;
    for (const auto& cell : rep.cells) {
      if (cell.method == rep.baseline) continue;
      const double base = base_median.at({cell.output, cell.k});
      MedianComparison cmp;
      cmp.method = cell.method;
      cmp.output = cell.output;
      cmp.k = cell.k;
      cmp.median_cv = cell.cv.median;
      cmp.baseline_median_cv = base;
      cmp.win = cell.cv.median < base;
      rep.comparisons.push_back(cmp);
    }
  }
  return rep;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& until) {
  const int until_rank = stage_rank(until);
  cfg.validate();
  if (cfg.schema_path.empty() || cfg.features_path.empty() || cfg.outputs_path.empty())
    throw Error("run_pipeline: schema, features, and outputs paths must all be set");

  fs::create_directories(cfg.output_dir);
  const std::string lock_path = (fs::path(cfg.output_dir) / "lock").string();
  if (fs::exists(lock_path))
    throw Error("run_pipeline: output directory is locked; remove " + lock_path +
                " if no other run is active");
  {
    std::ofstream lock(lock_path);
    if (!lock) throw Error("run_pipeline: cannot create " + lock_path);
    lock << "active\n";
  }

  PipelineResult result;
  std::vector<std::string>& warnings = result.warnings;
  std::string stage = "setup";
  const auto art = [&](const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
  };
  const std::string config_path = art("effective_config.txt");

  const auto body = [&]() {
    save_config(cfg, config_path);
    result.artifacts.push_back(config_path);

    stage = "load";
    const auto schema = load_schema(cfg.schema_path);
    LoadResult lr = load_raw(cfg.features_path, schema);
    RawTable raw = std::move(lr.table);
    if (!lr.rejected.empty()) {
      auto out = open_out(art("rejected_rows.txt"));
      for (const auto& r : lr.rejected)
        out << "line " << r.line << "\t" << r.id << "\t" << r.reason << "\n";
      result.artifacts.push_back(art("rejected_rows.txt"));
      warnings.push_back(std::to_string(lr.rejected.size()) +
                         " input row(s) rejected; see rejected_rows.txt");
    }
    std::vector<OutputVector> outs =
        select_outputs(load_outputs(cfg.outputs_path), cfg.outputs, cfg.outputs_path);

    stage = "engineer";
    if (cfg.engineer) raw = engineer_features(raw);

    stage = "encode";
    const FeatureMatrix fm = encode(raw);
    save_encoded(fm, art("encoded.csv"));
    result.artifacts.push_back(art("encoded.csv"));
    for (auto& o : outs) o = align_output(fm, o);
    if (until_rank <= stage_rank("encode")) return;

    stage = "prototypes";
    const Index n = fm.rows();
    std::vector<Index> training;
    if (!cfg.training_ids.empty()) {
      std::unordered_map<std::string, Index> row_of;
      for (Index i = 0; i < n; ++i) row_of.emplace(fm.ids[std::size_t(i)], i);
      for (const auto& id : cfg.training_ids) {
        const auto it = row_of.find(id);
        if (it == row_of.end())
          throw Error("training id \"" + id + "\" not found in the feature matrix");
        training.push_back(it->second);
      }
      std::sort(training.begin(), training.end());
    } else {
      const Matrix D = pairwise_distances(fm.X, DistanceSpec::euclidean(), cfg.threads);
      const Dendrogram dend = minimax_linkage_cluster(D);
      // Guard against float noise pushing an exact product over the ceiling.
      Index k = Index(std::ceil(cfg.training_fraction * double(n) - 1e-9));
      k = std::max<Index>(1, std::min(n, k));
      const PrototypeSet ps = select_prototypes(dend, k, D);
      training = ps.prototypes;
      save_prototypes(ps, fm.ids, art("prototypes.txt"));
      result.artifacts.push_back(art("prototypes.txt"));
    }
    {
      auto out = open_out(art("training_ids.txt"));
      for (Index i : training) out << fm.ids[std::size_t(i)] << "\n";
      result.artifacts.push_back(art("training_ids.txt"));
    }
    if (until_rank <= stage_rank("prototypes")) return;

    const FeatureMatrix Xtr = subset_rows(fm, training);

    std::vector<ConstraintSets> css(outs.size());
    for (std::size_t oi = 0; oi < outs.size(); ++oi) {
      stage = "constraints[" + outs[oi].name + "]";
      const OutputVector ytr = subset_rows(outs[oi], training);
      css[oi] = identify_constraints(Xtr, ytr, cfg.tail, cfg.rho_mi, cfg.rho_ma);
      for (const auto& w : css[oi].warnings)
        warnings.push_back("constraints[" + outs[oi].name + "]: " + w);
      const std::string p = art("constraints_" + slug(outs[oi].name) + ".txt");
      save_constraints(css[oi], Xtr.ids, p);
      result.artifacts.push_back(p);
    }
    if (until_rank <= stage_rank("constraints")) return;

    std::map<std::string, MetricMatrix> metrics;  // "method/output" or "covariance"
    if (std::find(cfg.methods.begin(), cfg.methods.end(), "covariance") != cfg.methods.end()) {
      stage = "fit[covariance]";
      MetricMatrix cov = covariance_metric(fm.X);
      save_metric(cov, art("metric_covariance.txt"));
      result.artifacts.push_back(art("metric_covariance.txt"));
      metrics.emplace("covariance", std::move(cov));
    }
    for (const auto& m : cfg.methods) {
      if (!is_learned(m)) continue;
      LearnerConfig lc = learner_for(cfg, m);
      lc.algorithm = m;
      for (std::size_t oi = 0; oi < outs.size(); ++oi) {
        stage = "fit[" + m + "][" + outs[oi].name + "]";
        auto [metric, report] = fit(Xtr, css[oi], lc);
        const std::string tag = m + "_" + slug(outs[oi].name);
        save_metric(metric, art("metric_" + tag + ".txt"));
        result.artifacts.push_back(art("metric_" + tag + ".txt"));
        save_fit_report(report, art("fit_" + tag + ".txt"));
        result.artifacts.push_back(art("fit_" + tag + ".txt"));
        if (!report.converged)
          warnings.push_back("fit[" + m + "][" + outs[oi].name +
                             "]: did not converge (" + report.stop_reason + ")");
        metrics.emplace(m + "/" + outs[oi].name, std::move(metric));
      }
    }
    if (until_rank <= stage_rank("fit")) return;

    const auto spec_for = [&](const std::string& method,
                              const std::string& output) -> DistanceSpec {
      if (method == "covariance") return DistanceSpec::mahalanobis(metrics.at("covariance"));
      if (is_learned(method)) return DistanceSpec::mahalanobis(metrics.at(method + "/" + output));
      return DistanceSpec::euclidean();
    };

    // Cuts of the full population, keyed by method or method/output.
    std::map<std::string, std::vector<Clustering>> cuts;
    for (const auto& m : cfg.methods) {
      const std::vector<std::string> keys =
          is_learned(m) ? [&] {
            std::vector<std::string> v;
            for (const auto& o : outs) v.push_back(m + "/" + o.name);
            return v;
          }()
                        : std::vector<std::string>{m};
      for (const auto& key : keys) {
        const std::string output = is_learned(m) ? key.substr(m.size() + 1) : "";
        stage = is_learned(m) ? "segment[" + m + "][" + output + "]" : "segment[" + m + "]";
        const DistanceSpec spec = spec_for(m, output);
        const Matrix D = pairwise_distances(fm.X, spec, cfg.threads);
        const Dendrogram dend = average_linkage_cluster(D);
        const std::string tag = is_learned(m) ? m + "_" + slug(output) : m;
        save_dendrogram(dend, fm.ids, art("dendrogram_" + tag + ".txt"));
        result.artifacts.push_back(art("dendrogram_" + tag + ".txt"));
        std::vector<Clustering>& list = cuts[key];
        for (Index k : cfg.ks) {
          Clustering c = cut(dend, k);
          c.spec = spec.describe();
          const std::string p = art("clustering_" + tag + "_k" + std::to_string(k) + ".csv");
          save_clustering(c, fm.ids, p);
          result.artifacts.push_back(p);
          list.push_back(std::move(c));
        }
      }
    }
    if (until_rank <= stage_rank("segment")) return;

    stage = "evaluate";
    result.full = build_report(
        cfg.methods, outs, cfg.ks,
        [&](const std::string& m, const std::string& output, std::size_t ki)
            -> const Clustering& {
          return cuts.at(is_learned(m) ? m + "/" + output : m)[ki];
        });
    save_long_form(result.full, art("report_long.csv"));
    result.artifacts.push_back(art("report_long.csv"));
    save_boxplot_stats(result.full, art("report_box.csv"));
    result.artifacts.push_back(art("report_box.csv"));

    stage = "holdout";
    std::vector<Index> holdout;
    {
      std::vector<char> in_training(std::size_t(n), 0);
      for (Index i : training) in_training[std::size_t(i)] = 1;
      for (Index i = 0; i < n; ++i)
        if (!in_training[std::size_t(i)]) holdout.push_back(i);
    }
    if (holdout.empty()) {
      warnings.push_back("holdout evaluation skipped: every object is in the training scope");
    } else {
      std::vector<Index> hks;
      for (Index k : cfg.ks)
        if (k <= Index(holdout.size())) hks.push_back(k);
        else warnings.push_back("holdout: dropped k=" + std::to_string(k) +
                                " (exceeds holdout size " +
                                std::to_string(holdout.size()) + ")");
      if (hks.empty()) {
        warnings.push_back("holdout evaluation skipped: every k exceeds the holdout size");
      } else {
        const FeatureMatrix Xh = subset_rows(fm, holdout);
        std::vector<OutputVector> outs_h;
        for (const auto& o : outs) outs_h.push_back(subset_rows(o, holdout));
        std::map<std::string, std::vector<Clustering>> hcuts;
        for (const auto& m : cfg.methods) {
          if (is_learned(m)) {
            for (const auto& o : outs)
              hcuts[m + "/" + o.name] = segment(Xh, spec_for(m, o.name), hks, cfg.threads);
          } else {
            hcuts[m] = segment(Xh, spec_for(m, ""), hks, cfg.threads);
          }
        }
        result.holdout = build_report(
            cfg.methods, outs_h, hks,
            [&](const std::string& m, const std::string& output, std::size_t ki)
                -> const Clustering& {
              return hcuts.at(is_learned(m) ? m + "/" + output : m)[ki];
            });
        save_long_form(result.holdout, art("report_holdout_long.csv"));
        result.artifacts.push_back(art("report_holdout_long.csv"));
        save_boxplot_stats(result.holdout, art("report_holdout_box.csv"));
        result.artifacts.push_back(art("report_holdout_box.csv"));
      }
    }

    if (std::find(cfg.methods.begin(), cfg.methods.end(), "mmc") != cfg.methods.end()) {
      for (const auto& o : outs) {
        stage = "importance[" + o.name + "]";
        const FeatureImportance fi = feature_importance(metrics.at("mmc/" + o.name),
                                                        fm.columns, cfg.importance_top);
        const std::string p = art("importance_mmc_" + slug(o.name) + ".csv");
        save_feature_importance(fi, p);
        result.artifacts.push_back(p);
      }
    }
  };

  try {
    body();
    stage = "finalize";
    if (!warnings.empty()) {
      auto out = open_out(art("warnings.txt"));
      for (const auto& w : warnings) out << w << "\n";
      result.artifacts.push_back(art("warnings.txt"));
    }
  } catch (const std::exception& e) {
    std::error_code ec;
    for (const auto& a : result.artifacts)
      if (a != config_path) fs::remove(a, ec);
    fs::remove(lock_path, ec);
    throw Error("stage " + stage + ": " + e.what());
  }

  std::error_code ec;
  fs::remove(lock_path, ec);
  return result;
}

void export_distance_matrix(const PipelineConfig& cfg, const std::string& method,
                            const std::string& output, const std::string& path) {
  const auto& known = known_methods();
  if (std::find(known.begin(), known.end(), method) == known.end())
    throw Error("export_distance_matrix: unknown method \"" + method + "\"");
  if (cfg.schema_path.empty() || cfg.features_path.empty())
    throw Error("export_distance_matrix: schema and features paths must be set");

  const auto schema_cols = load_schema(cfg.schema_path);
  RawTable raw = std::move(load_raw(cfg.features_path, schema_cols).table);
  if (cfg.engineer) raw = engineer_features(raw);
  const FeatureMatrix fm = encode(raw);

  DistanceSpec spec;
  if (method == "covariance") {
    const std::string p = (fs::path(cfg.output_dir) / "metric_covariance.txt").string();
    spec = DistanceSpec::mahalanobis(fs::exists(p) ? load_metric(p)
                                                   : covariance_metric(fm.X));
  } else if (is_learned(method)) {
    if (output.empty())
      throw Error("export_distance_matrix: method \"" + method +
                  "\" requires an output name");
    const std::string p =
        (fs::path(cfg.output_dir) / ("metric_" + method + "_" + slug(output) + ".txt"))
            .string();
    if (!fs::exists(p))
      throw Error("export_distance_matrix: no fitted metric at " + p +
                  "; run the pipeline first");
    spec = DistanceSpec::mahalanobis(load_metric(p));
  } else {
    spec = DistanceSpec::euclidean();
  }

  const Matrix D = pairwise_distances(fm.X, spec, cfg.threads);
  auto out = open_out(path);
  out << "id";
  for (const auto& id : fm.ids) out << "," << id;
  out << "\n";
  for (Index i = 0; i < D.rows(); ++i) {
    out << fm.ids[std::size_t(i)];
    for (Index j = 0; j < D.cols(); ++j) out << "," << fmt(D(i, j));
    out << "\n";
  }
  if (!out) throw Error("export_distance_matrix: write failed for " + path);
}

void run_synth(const PipelineConfig& cfg) {
  if (cfg.schema_path.empty() || cfg.features_path.empty() || cfg.outputs_path.empty())
    throw Error("run_synth: schema, features, and outputs paths must all be set");
  const SynthConfig& s = cfg.synth;
  auto [fm, out] = generate_synthetic(s.n, s.d, s.signal, s.noise_sd, s.seed, s.offset);
  out.name = s.output_name;

  {
    auto f = open_out(cfg.schema_path);
    for (const auto& col : fm.columns) f << col.name << " numeric\n";
    if (!f) throw Error("run_synth: write failed for " + cfg.schema_path);
  }
  {
    auto f = open_out(cfg.features_path);
    f << "id";
    for (const auto& col : fm.columns) f << "," << col.name;
    f << "\n";
    for (Index i = 0; i < fm.rows(); ++i) {
      f << fm.ids[std::size_t(i)];
      for (Index j = 0; j < fm.cols(); ++j) f << "," << fmt(fm.X(i, j));
      f << "\n";
    }
    if (!f) throw Error("run_synth: write failed for " + cfg.features_path);
  }
  {
    auto f = open_out(cfg.outputs_path);
    f << "id," << out.name << "\n";
    for (Index i = 0; i < out.y.size(); ++i)
      f << out.ids[std::size_t(i)] << "," << fmt(out.y(i)) << "\n";
    if (!f) throw Error("run_synth: write failed for " + cfg.outputs_path);
  }
}

}  // namespace airseg
