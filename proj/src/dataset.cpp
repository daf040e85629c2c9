#include "airseg/dataset.hpp"

#include "airseg/stats.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace airseg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == sep) fields.push_back("");
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size() && std::isfinite(out);
}

struct EngineeredSpec {
  std::string name;
  std::vector<std::string> sources;
  double (*compute)(const std::vector<double>&);
};

double product2(const std::vector<double>& v) { return v[0] * v[1]; }

const std::vector<EngineeredSpec>& engineered_specs() {
  static const std::vector<EngineeredSpec> specs = {
      {"NOX_COEFF_TO", {"THR_STATIC", "NOX_REI_TO"}, product2},
      {"NOX_COEFF_CO", {"THR_STATIC", "NOX_REI_CO"}, product2},
      {"NOX_COEFF_ID", {"THR_STATIC", "NOX_REI_ID"}, product2},
      {"CO_COEFF_TO", {"THR_STATIC", "CO_REI_TO"}, product2},
      {"CO_COEFF_CO", {"THR_STATIC", "CO_REI_CO"}, product2},
      {"CO_COEFF_ID", {"THR_STATIC", "CO_REI_ID"}, product2},
      {"TWR_TO",
       {"THR_STATIC", "MX_GW_TKO"},
       [](const std::vector<double>& v) { return v[0] / v[1]; }},
      {"WING_LOADING",
       {"MX_GW_TKO", "WING_AREA"},
       [](const std::vector<double>& v) { return v[0] / v[1]; }},
      {"MLD_MTOW_RATIO",
       {"MX_GW_LND", "MX_GW_TKO"},
       [](const std::vector<double>& v) { return v[0] / v[1]; }},
      {"DEP_FUEL_FLOW",
       {"UA_RWF_ID", "UA_RWF_TO", "UA_RWF_CO"},
       [](const std::vector<double>& v) {
         return 0.75 * v[0] + 0.05 * v[1] + 0.20 * v[2];
       }},
  };
  return specs;
}

bool is_ratio(const std::string& name) {
  return name == "TWR_TO" || name == "WING_LOADING" || name == "MLD_MTOW_RATIO";
}

}  // namespace

std::string to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::Numeric: return "numeric";
    case AttributeKind::Nominal: return "nominal";
    case AttributeKind::Ordinal: return "ordinal";
  }
  throw Error("to_string: unknown attribute kind");
}

AttributeKind attribute_kind_from_string(const std::string& s) {
  if (s == "numeric") return AttributeKind::Numeric;
  if (s == "nominal") return AttributeKind::Nominal;
  if (s == "ordinal") return AttributeKind::Ordinal;
  throw Error("unknown attribute kind: " + s);
}

const RawColumn* RawTable::find(const std::string& name) const {
  for (const auto& col : columns)
    if (col.schema.name == name) return &col;
  return nullptr;
}

std::vector<ColumnSchema> load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_schema: cannot open " + path);
  std::vector<ColumnSchema> schema;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ColumnSchema col;
    std::string kind;
    if (!(is >> col.name >> kind))
      throw Error("load_schema: line " + std::to_string(lineno) +
                  ": expected <name> <kind> [categories]");
    col.kind = attribute_kind_from_string(kind);
    std::string rest;
    std::getline(is, rest);
    rest = trim(rest);
    if (!rest.empty()) {
      if (col.kind == AttributeKind::Numeric)
        throw Error("load_schema: line " + std::to_string(lineno) + ": numeric column " +
                    col.name + " declares categories");
      for (const auto& cat : split(rest, ',')) {
        if (cat.empty())
          throw Error("load_schema: line " + std::to_string(lineno) +
                      ": empty category name in " + col.name);
        if (std::find(col.categories.begin(), col.categories.end(), cat) !=
            col.categories.end())
          throw Error("load_schema: line " + std::to_string(lineno) +
                      ": duplicate category " + cat + " in " + col.name);
        col.categories.push_back(cat);
      }
    }
    if (col.kind != AttributeKind::Numeric && col.categories.empty())
      throw Error("load_schema: line " + std::to_string(lineno) + ": categorical column " +
                  col.name + " declares no categories");
    if (!seen.insert(col.name).second)
      throw Error("load_schema: duplicate column " + col.name);
    schema.push_back(std::move(col));
  }
  return schema;
}

LoadResult load_raw(const std::string& path, const std::vector<ColumnSchema>& schema) {
  std::ifstream in(path);
  if (!in) throw Error("load_raw: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("load_raw: empty file " + path);
  const std::vector<std::string> header = split(line, ',');
  if (header.empty() || header[0] != "id")
    throw Error("load_raw: first header column must be \"id\" in " + path);

  LoadResult result;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto it = std::find_if(schema.begin(), schema.end(),
                                 [&](const ColumnSchema& s) { return s.name == header[c]; });
    if (it == schema.end())
      throw Error("load_raw: column " + header[c] + " not declared in the schema");
    RawColumn col;
    col.schema = *it;
    result.table.columns.push_back(std::move(col));
  }

  std::unordered_set<std::string> seen_ids;
  std::size_t lineno = 1;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ++data_row;
    const std::vector<std::string> fields = split(line, ',');
    const std::string id = fields.empty() ? "" : fields[0];
    if (id.empty()) throw Error("load_raw: line " + std::to_string(lineno) + ": empty id");
    if (!seen_ids.insert(id).second)
      throw Error("load_raw: line " + std::to_string(lineno) + ": duplicate id " + id);
    if (fields.size() != header.size()) {
      result.rejected.push_back({lineno, id,
                                 "expected " + std::to_string(header.size()) +
                                     " fields, found " + std::to_string(fields.size())});
      continue;
    }
    if (std::any_of(fields.begin() + 1, fields.end(),
                    [](const std::string& f) { return f.empty(); })) {
      result.rejected.push_back({lineno, id, "missing value"});
      continue;
    }

    std::vector<double> numerics(result.table.columns.size(), 0.0);
    std::vector<int> cats(result.table.columns.size(), -1);
    for (std::size_t c = 0; c < result.table.columns.size(); ++c) {
      const ColumnSchema& cs = result.table.columns[c].schema;
      const std::string& cell = fields[c + 1];
      if (cs.kind == AttributeKind::Numeric) {
        if (!parse_double(cell, numerics[c]))
          throw Error("load_raw: row " + std::to_string(data_row) + " (line " +
                      std::to_string(lineno) + "), column " + cs.name +
                      ": cannot parse \"" + cell + "\" as a number");
      } else {
        const auto cat = std::find(cs.categories.begin(), cs.categories.end(), cell);
        if (cat == cs.categories.end())
          throw Error("load_raw: row " + std::to_string(data_row) + " (line " +
                      std::to_string(lineno) + "), column " + cs.name +
                      ": undeclared category \"" + cell + "\"");
        cats[c] = int(cat - cs.categories.begin());
      }
    }
    result.table.ids.push_back(id);
    for (std::size_t c = 0; c < result.table.columns.size(); ++c) {
      RawColumn& col = result.table.columns[c];
      if (col.schema.kind == AttributeKind::Numeric)
        col.numeric.push_back(numerics[c]);
      else
        col.category.push_back(cats[c]);
    }
  }
  return result;
}

const std::vector<std::string>& engineered_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& spec : engineered_specs()) v.push_back(spec.name);
    return v;
  }();
  return names;
}

RawTable engineer_features(const RawTable& raw, const std::vector<std::string>& requested) {
  std::vector<const EngineeredSpec*> todo;
  if (requested.empty()) {
    for (const auto& spec : engineered_specs()) {
      const bool have_all =
          std::all_of(spec.sources.begin(), spec.sources.end(), [&](const std::string& s) {
            const RawColumn* col = raw.find(s);
            return col && col->schema.kind == AttributeKind::Numeric;
          });
      if (have_all) todo.push_back(&spec);
    }
  } else {
    for (const auto& name : requested) {
      const auto it =
          std::find_if(engineered_specs().begin(), engineered_specs().end(),
                       [&](const EngineeredSpec& s) { return s.name == name; });
      if (it == engineered_specs().end())
        throw Error("engineer_features: unknown engineered feature " + name);
      for (const auto& src : it->sources) {
        const RawColumn* col = raw.find(src);
        if (!col)
          throw Error("engineer_features: " + name + " needs missing column " + src);
        if (col->schema.kind != AttributeKind::Numeric)
          throw Error("engineer_features: " + name + " source " + src + " is not numeric");
      }
      todo.push_back(&*it);
    }
  }

  RawTable out = raw;
  std::vector<std::string> zero_divisions;
  for (const EngineeredSpec* spec : todo) {
    if (raw.find(spec->name))
      throw Error("engineer_features: column " + spec->name + " already present");
    RawColumn col;
    col.schema.name = spec->name;
    col.schema.kind = AttributeKind::Numeric;
    std::vector<const std::vector<double>*> srcs;
    for (const auto& s : spec->sources) srcs.push_back(&raw.find(s)->numeric);
    std::vector<double> args(srcs.size());
    for (Index r = 0; r < raw.rows(); ++r) {
      for (std::size_t a = 0; a < srcs.size(); ++a) args[a] = (*srcs[a])[size_t(r)];
      if (is_ratio(spec->name) && args[1] == 0.0) {
        zero_divisions.push_back(spec->name + ": zero " + spec->sources[1] + " for id " +
                                 raw.ids[size_t(r)]);
        col.numeric.push_back(0.0);
        continue;
      }
      col.numeric.push_back(spec->compute(args));
    }
    out.columns.push_back(std::move(col));
  }
  if (!zero_divisions.empty()) {
    std::string msg = "engineer_features: division by zero:";
    for (const auto& z : zero_divisions) msg += "\n  " + z;
    throw Error(msg);
  }
  return out;
}

FeatureMatrix encode(const RawTable& raw) {
  FeatureMatrix fm;
  fm.ids = raw.ids;
  const Index n = raw.rows();

  for (const auto& col : raw.columns) {
    if (col.schema.kind == AttributeKind::Numeric) {
      if (Index(col.numeric.size()) != n)
        throw Error("encode: column " + col.schema.name + " length mismatch");
      FeatureColumn fc;
      fc.name = col.schema.name;
      fc.source = col.schema.name;
      fm.columns.push_back(fc);
    } else {
      if (Index(col.category.size()) != n)
        throw Error("encode: column " + col.schema.name + " length mismatch");
      for (const auto& cat : col.schema.categories) {
        FeatureColumn fc;
        fc.name = col.schema.name + "=" + cat;
        fc.source = col.schema.name;
        fc.category = cat;
        fm.columns.push_back(fc);
      }
    }
  }

  fm.X.resize(n, Index(fm.columns.size()));
  Index j = 0;
  for (const auto& col : raw.columns) {
    if (col.schema.kind == AttributeKind::Numeric) {
      for (Index r = 0; r < n; ++r) fm.X(r, j) = col.numeric[size_t(r)];
      ++j;
    } else {
      for (std::size_t c = 0; c < col.schema.categories.size(); ++c) {
        for (Index r = 0; r < n; ++r)
          fm.X(r, j) = col.category[size_t(r)] == int(c) ? 1.0 : 0.0;
        ++j;
      }
    }
  }

  for (Index c = 0; c < fm.X.cols(); ++c) {
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) vals[size_t(r)] = fm.X(r, c);
    const double mu = n > 0 ? mean(vals) : 0.0;
    const double sd = sample_sd(vals);
    fm.columns[size_t(c)].mean = mu;
    if (sd > 0.0) {
      fm.columns[size_t(c)].scale = sd;
      fm.X.col(c) = (fm.X.col(c).array() - mu) / sd;
    } else {
      fm.columns[size_t(c)].scale = 1.0;
      fm.columns[size_t(c)].constant = true;
      fm.X.col(c).setZero();
    }
  }
  return fm;
}

std::vector<OutputVector> load_outputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_outputs: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("load_outputs: empty file " + path);
  const std::vector<std::string> header = split(line, ',');
  if (header.empty() || header[0] != "id")
    throw Error("load_outputs: first header column must be \"id\" in " + path);
  if (header.size() < 2) throw Error("load_outputs: no output columns in " + path);

  std::vector<OutputVector> outputs(header.size() - 1);
  std::vector<std::vector<double>> values(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    // "NAME (unit)" splits into name and unit label.
    std::string name = header[c], unit;
    const auto open = name.find('(');
    if (open != std::string::npos && name.back() == ')') {
      unit = trim(name.substr(open + 1, name.size() - open - 2));
      name = trim(name.substr(0, open));
    }
    outputs[c - 1].name = name;
    outputs[c - 1].unit = unit;
  }

  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != header.size())
      throw Error("load_outputs: line " + std::to_string(lineno) + ": expected " +
                  std::to_string(header.size()) + " fields");
    if (fields[0].empty())
      throw Error("load_outputs: line " + std::to_string(lineno) + ": empty id");
    if (!seen.insert(fields[0]).second)
      throw Error("load_outputs: line " + std::to_string(lineno) + ": duplicate id " +
                  fields[0]);
    ids.push_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v;
      if (!parse_double(fields[c], v))
        throw Error("load_outputs: line " + std::to_string(lineno) + ", column " +
                    header[c] + ": cannot parse \"" + fields[c] + "\" as a number");
      values[c - 1].push_back(v);
    }
  }
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    outputs[c].ids = ids;
    outputs[c].y = Eigen::Map<const Vector>(values[c].data(), Index(values[c].size()));
  }
  return outputs;
}

OutputVector align_output(const FeatureMatrix& fm, const OutputVector& out) {
  std::unordered_map<std::string, Index> where;
  for (std::size_t i = 0; i < out.ids.size(); ++i) where[out.ids[i]] = Index(i);
  OutputVector aligned;
  aligned.name = out.name;
  aligned.unit = out.unit;
  aligned.ids = fm.ids;
  aligned.y.resize(fm.rows());
  std::vector<std::string> missing;
  for (Index i = 0; i < fm.rows(); ++i) {
    const auto it = where.find(fm.ids[size_t(i)]);
    if (it == where.end()) {
      missing.push_back(fm.ids[size_t(i)]);
      continue;
    }
    aligned.y(i) = out.y(it->second);
  }
  if (!missing.empty()) {
    std::string msg = "align_output: output " + out.name + " missing ids:";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }
  return aligned;
}

std::pair<FeatureMatrix, OutputVector> generate_synthetic(
    Index n, Index d, const std::vector<SignalFeature>& signal, double noise_sd,
    std::uint64_t seed, double offset) {
  if (n < 4) throw Error("generate_synthetic: need n >= 4");
  if (d < 1) throw Error("generate_synthetic: need d >= 1");
  if (noise_sd < 0.0) throw Error("generate_synthetic: negative noise sd");
  for (const auto& s : signal)
    if (s.index < 0 || s.index >= d)
      throw Error("generate_synthetic: signal index " + std::to_string(s.index) +
                  " out of range for d=" + std::to_string(d));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FeatureMatrix fm;
  fm.X.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) fm.X(i, j) = gauss(rng);

  std::size_t width = 1;
  for (Index v = n; v >= 10; v /= 10) ++width;
  for (Index i = 0; i < n; ++i) {
    const std::string digits = std::to_string(i + 1);
    fm.ids.push_back("obj" + std::string(width - digits.size(), '0') + digits);
  }
  for (Index j = 0; j < d; ++j) {
    FeatureColumn fc;
    fc.name = "f" + std::to_string(j);
    fc.source = fc.name;
    fm.columns.push_back(fc);
  }

  OutputVector out;
  out.ids = fm.ids;
  out.name = "SYNTH";
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    double v = offset;
    for (const auto& s : signal) v += s.weight * fm.X(i, s.index);
    if (noise_sd > 0.0) v += noise_sd * gauss(rng);
    out.y(i) = v;
  }
  return {std::move(fm), std::move(out)};
}

void save_encoded(const FeatureMatrix& fm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_encoded: cannot open " + path);
  out << "# encoded feature matrix: n=" << fm.rows() << " d=" << fm.cols() << "\n";
  out << "# column,source,category,mean,scale,constant\n";
  char buf[64];
  for (const auto& col : fm.columns) {
    out << "# " << col.name << "," << col.source << "," << col.category << ",";
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,", col.mean, col.scale);
    out << buf << (col.constant ? "1" : "0") << "\n";
  }
  out << "id";
  for (const auto& col : fm.columns) out << "," << col.name;
  out << "\n";
  for (Index i = 0; i < fm.rows(); ++i) {
    out << fm.ids[size_t(i)];
    for (Index j = 0; j < fm.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", fm.X(i, j));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw Error("save_encoded: write failed for " + path);
}

}  // namespace airseg
