#pragma once

#include "airseg/evaluation.hpp"
#include "airseg/learners.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace airseg {

/// Settings for the synthetic-population generator.
struct SynthConfig {
  Index n = 200;
  Index d = 20;
  double noise_sd = 0.05;
  std::uint64_t seed = 1;
  double offset = 10.0;
  std::vector<SignalFeature> signal;
  std::string output_name = "Y";
};

/// Everything a run needs, loadable from a sectioned key-value text file.
struct PipelineConfig {
  // [paths]
  std::string schema_path;
  std::string features_path;
  std::string outputs_path;
  std::string output_dir = "out";

  // [run]
  std::vector<std::string> methods{"euclidean"};
  std::vector<std::string> outputs;  // empty selects every output in the file
  std::vector<Index> ks{5, 10, 15, 20};
  int threads = 1;
  bool engineer = true;
  Index importance_top = 15;

  // [training]
  double training_fraction = 0.4;
  std::vector<std::string> training_ids;  // explicit override when non-empty

  // [constraints]
  double tail = 0.1;
  Index rho_mi = 2;
  Index rho_ma = 5;

  // [mmc] / [itml] / [lmnn]
  LearnerConfig mmc;
  LearnerConfig itml;
  LearnerConfig lmnn;

  // [synth]
  SynthConfig synth;

  void validate() const;
};

/// Parses the sectioned key = value format. Unknown sections or keys and
/// malformed values are errors; omitted keys keep their defaults.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

/// Canonical serialization: every key in a fixed order, doubles at full
/// precision, so save(load(save(cfg))) is byte-identical to save(cfg).
std::string config_text(const PipelineConfig& cfg);
void save_config(const PipelineConfig& cfg, const std::string& path);

struct PipelineResult {
  SegmentationReport full;     // full-population evaluation
  SegmentationReport holdout;  // objects outside the training scope; may be
                               // empty when every k exceeds the holdout size
  std::vector<std::string> warnings;
  std::vector<std::string> artifacts;  // files written, in creation order
};

/// Runs load -> engineer -> encode -> training selection -> constraints ->
/// fits -> segmentation -> evaluation, writing artifacts under
/// cfg.output_dir. `until` truncates the run after a stage prefix: one of
/// "encode", "prototypes", "constraints", "fit", "segment", or "full".
/// A lock file guards the output directory; on a stage error all artifacts
/// written by this run except the effective config are removed and the
/// error names the stage.
PipelineResult run_pipeline(const PipelineConfig& cfg,
                            const std::string& until = "full");

/// Pairwise distance matrix for one method (and output, when the method is
/// learned) as a CSV with id header row and column. Learned metrics are read
/// from the fit artifacts in cfg.output_dir and must exist.
void export_distance_matrix(const PipelineConfig& cfg, const std::string& method,
                            const std::string& output, const std::string& path);

/// Writes a synthetic features CSV, outputs CSV, and numeric schema to the
/// configured input paths so a subsequent run can consume them.
void run_synth(const PipelineConfig& cfg);

}  // namespace airseg
