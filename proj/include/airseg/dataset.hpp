#pragma once

#include "airseg/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace airseg {

enum class AttributeKind { Numeric, Nominal, Ordinal };

std::string to_string(AttributeKind kind);
AttributeKind attribute_kind_from_string(const std::string& s);

struct ColumnSchema {
  std::string name;
  AttributeKind kind = AttributeKind::Numeric;
  std::vector<std::string> categories;  // nominal/ordinal only, declared order
};

/// One ingested column: numeric values, or indices into the declared
/// category list for nominal/ordinal columns.
struct RawColumn {
  ColumnSchema schema;
  std::vector<double> numeric;
  std::vector<int> category;
};

struct RawTable {
  std::vector<std::string> ids;
  std::vector<RawColumn> columns;

  Index rows() const { return Index(ids.size()); }
  const RawColumn* find(const std::string& name) const;
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based line number in the source file
  std::string id;
  std::string reason;
};

struct LoadResult {
  RawTable table;
  std::vector<RejectedRow> rejected;
};

std::vector<ColumnSchema> load_schema(const std::string& path);

/// Parses a comma-separated file whose first header column is "id". Every
/// data column must appear in the schema. Rows with missing values are
/// rejected (with line numbers), not errors; a malformed cell is an error.
LoadResult load_raw(const std::string& path, const std::vector<ColumnSchema>& schema);

/// Appends engineered numeric columns. With an empty request, computes every
/// engineered feature whose source columns are all present; with an explicit
/// list, a missing source column is an error. Division by zero is collected
/// per row and thrown as one error.
RawTable engineer_features(const RawTable& raw,
                           const std::vector<std::string>& requested = {});

/// Names of all engineered features, in output order.
const std::vector<std::string>& engineered_feature_names();

struct FeatureColumn {
  std::string name;      // "MX_GW_TKO" or "ENGINE_TYPE=JT"
  std::string source;    // raw column the value came from
  std::string category;  // one-hot category, empty for numeric columns
  double mean = 0.0;
  double scale = 1.0;    // sample sd divided out; 1 for constant columns
  bool constant = false;
};

struct FeatureMatrix {
  std::vector<std::string> ids;
  Matrix X;
  std::vector<FeatureColumn> columns;

  Index rows() const { return X.rows(); }
  Index cols() const { return X.cols(); }
};

/// One-hot expands categoricals (one column per declared category, declared
/// order), then standardizes every column to sample mean 0 and sample sd 1.
/// Constant columns end up all zero and are flagged.
FeatureMatrix encode(const RawTable& raw);

struct OutputVector {
  std::vector<std::string> ids;
  Vector y;
  std::string name;
  std::string unit;
};

/// Reads an outputs CSV (header: id, then one column per output).
std::vector<OutputVector> load_outputs(const std::string& path);

/// Reorders `out` to match the feature matrix ids exactly; ids present in the
/// outputs but not the matrix are dropped, missing ids are an error.
OutputVector align_output(const FeatureMatrix& fm, const OutputVector& out);

struct SignalFeature {
  Index index = 0;
  double weight = 0.0;
};

/// Standard-normal feature matrix plus a linear-signal output with Gaussian
/// noise. Deterministic for a fixed seed. `offset` shifts every output so
/// strictly positive populations can be generated for ratio-based summaries.
std::pair<FeatureMatrix, OutputVector> generate_synthetic(
    Index n, Index d, const std::vector<SignalFeature>& signal, double noise_sd,
    std::uint64_t seed, double offset = 0.0);

/// CSV dump with per-column provenance header comments.
void save_encoded(const FeatureMatrix& fm, const std::string& path);

}  // namespace airseg
