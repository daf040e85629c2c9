#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "airseg/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace airseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? path.string() : (path / sub).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  REQUIRE(bool(out));
  out << content;
}

std::set<std::string> dir_files(const std::string& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    names.insert(e.path().filename().string());
  return names;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(comma == std::string::npos ? line.substr(start)
                                                : line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_line(line));
  return rows;
}

// 12 objects, 2 varied numeric features, strictly positive varied output.
void write_hand_dataset(const TempDir& dir) {
  write_file(dir.str("schema.txt"), "w numeric\nh numeric\n");
  std::ostringstream f, o;
  f << "id,w,h\n";
  o << "id,Y\n";
  for (int i = 0; i < 12; ++i) {
    const double w = 1.0 + 0.7 * i + (i % 3) * 0.2;
    const double h = 5.0 - 0.3 * i + (i % 4) * 0.5;
    const double y = 10.0 + 1.5 * i + (i % 2) * 0.4;
    f << "p" << i << "," << w << "," << h << "\n";
    o << "p" << i << "," << y << "\n";
  }
  write_file(dir.str("features.csv"), f.str());
  write_file(dir.str("outputs.csv"), o.str());
}

PipelineConfig hand_config(const TempDir& dir, const std::string& out_sub) {
  PipelineConfig cfg;
  cfg.schema_path = dir.str("schema.txt");
  cfg.features_path = dir.str("features.csv");
  cfg.outputs_path = dir.str("outputs.csv");
  cfg.output_dir = dir.str(out_sub);
  cfg.engineer = false;
  cfg.ks = {2, 3};
  return cfg;
}

PipelineConfig synth_config(const TempDir& dir, const std::string& out_sub) {
  PipelineConfig cfg;
  cfg.schema_path = dir.str("schema.txt");
  cfg.features_path = dir.str("features.csv");
  cfg.outputs_path = dir.str("outputs.csv");
  cfg.output_dir = dir.str(out_sub);
  cfg.engineer = false;
  cfg.synth.n = 40;
  cfg.synth.d = 6;
  cfg.synth.noise_sd = 0.05;
  cfg.synth.seed = 11;
  cfg.synth.offset = 10.0;
  cfg.synth.signal = {{0, 1.2}, {3, 1.0}};
  cfg.synth.output_name = "Y";
  return cfg;
}

}  // namespace

TEST_CASE("euclidean-only run works without any learner invocation") {
  TempDir dir("tmp_pipe_baseline");
  write_hand_dataset(dir);
  PipelineConfig cfg = hand_config(dir, "out");
  cfg.methods = {"euclidean"};

  const PipelineResult r = run_pipeline(cfg);

  for (const auto& a : r.artifacts) CHECK(fs::exists(a));
  const std::set<std::string> files = dir_files(cfg.output_dir);
  CHECK(files.count("effective_config.txt") == 1);
  CHECK(files.count("encoded.csv") == 1);
  CHECK(files.count("prototypes.txt") == 1);
  CHECK(files.count("training_ids.txt") == 1);
  CHECK(files.count("constraints_Y.txt") == 1);
  CHECK(files.count("dendrogram_euclidean.txt") == 1);
  CHECK(files.count("clustering_euclidean_k2.csv") == 1);
  CHECK(files.count("clustering_euclidean_k3.csv") == 1);
  CHECK(files.count("report_long.csv") == 1);
  CHECK(files.count("report_box.csv") == 1);
  // No learner ran, so no metric or fit artifacts exist.
  for (const auto& f : files) {
    CHECK(f.find("metric_") == std::string::npos);
    CHECK(f.find("fit_") == std::string::npos);
    CHECK(f.find("importance_") == std::string::npos);
  }

  CHECK(r.full.baseline == "euclidean");
  CHECK(r.full.cells.size() == 2);  // 1 method x 1 output x 2 ks
  CHECK(r.full.comparisons.empty());
  CHECK(r.full.cells[0].method == "euclidean");
  CHECK(r.full.cells[0].output == "Y");
  CHECK(r.full.cells[0].k == 2);
  CHECK(r.full.cells[1].k == 3);

  // ceil(0.4 * 12) = 5 training prototypes, leaving 7 holdout objects.
  const std::string ids_text = slurp(dir.str("out/training_ids.txt"));
  CHECK(std::count(ids_text.begin(), ids_text.end(), '\n') == 5);
  CHECK(r.holdout.cells.size() == 2);

  // The lock is gone after a successful run.
  CHECK_FALSE(fs::exists(dir.str("out/lock")));
}

TEST_CASE("full five-method synthetic run produces a complete artifact set") {
  TempDir dir("tmp_pipe_full");
  PipelineConfig cfg = synth_config(dir, "out");
  run_synth(cfg);
  cfg.methods = {"euclidean", "covariance", "mmc", "itml", "lmnn"};
  cfg.ks = {3, 5};

  const PipelineResult r = run_pipeline(cfg);

  // The artifact list and the directory agree exactly.
  std::set<std::string> listed;
  for (const auto& a : r.artifacts) {
    CHECK(fs::exists(a));
    listed.insert(fs::path(a).filename().string());
  }
  CHECK(listed == dir_files(cfg.output_dir));
  CHECK(listed.size() == r.artifacts.size());

  for (const std::string& m : {"mmc", "itml", "lmnn"}) {
    CHECK(listed.count("metric_" + m + "_Y.txt") == 1);
    CHECK(listed.count("fit_" + m + "_Y.txt") == 1);
    CHECK(listed.count("dendrogram_" + m + "_Y.txt") == 1);
    CHECK(listed.count("clustering_" + m + "_Y_k3.csv") == 1);
    CHECK(listed.count("clustering_" + m + "_Y_k5.csv") == 1);
  }
  CHECK(listed.count("metric_covariance.txt") == 1);
  CHECK(listed.count("dendrogram_covariance.txt") == 1);
  CHECK(listed.count("importance_mmc_Y.csv") == 1);
  CHECK(listed.count("report_holdout_long.csv") == 1);
  CHECK(listed.count("report_holdout_box.csv") == 1);

  CHECK(r.full.cells.size() == 10);        // 5 methods x 1 output x 2 ks
  CHECK(r.full.comparisons.size() == 8);   // 4 non-baseline methods x 2 ks
  CHECK(r.full.baseline == "euclidean");
  // ceil(0.4 * 40) = 16 training objects leaves 24 for holdout, above both ks.
  CHECK(r.holdout.cells.size() == 10);
  CHECK(r.holdout.comparisons.size() == 8);

  // Importance export: sparsity comment, header, one row per encoded column.
  const auto imp = read_csv(dir.str("out/importance_mmc_Y.csv"));
  REQUIRE(imp.size() >= 2);
  CHECK(imp[0][0].rfind("# zero_weight_features", 0) == 0);
  CHECK(imp.size() == 2 + 6);

  // Every cell's clustering carries the distance description it came from.
  for (const auto& cell : r.full.cells) CHECK_FALSE(cell.clustering.spec.empty());
}

TEST_CASE("reruns and thread counts leave every report byte-identical") {
  TempDir dir("tmp_pipe_determinism");
  PipelineConfig cfg = synth_config(dir, "a");
  run_synth(cfg);
  cfg.methods = {"euclidean", "mmc", "itml"};
  cfg.ks = {3, 5};

  const PipelineResult ra = run_pipeline(cfg);

  PipelineConfig cfg_b = cfg;
  cfg_b.output_dir = dir.str("b");
  run_pipeline(cfg_b);

  PipelineConfig cfg_c = cfg;
  cfg_c.output_dir = dir.str("c");
  cfg_c.threads = 4;
  run_pipeline(cfg_c);

  const std::set<std::string> names = dir_files(dir.str("a"));
  CHECK(names == dir_files(dir.str("b")));
  CHECK(names == dir_files(dir.str("c")));
  for (const auto& name : names) {
    if (name == "effective_config.txt") continue;  // differs by output_dir/threads
    INFO("artifact: " << name);
    const std::string a = slurp(dir.str("a/" + name));
    CHECK(a == slurp(dir.str("b/" + name)));
    CHECK(a == slurp(dir.str("c/" + name)));
  }

  // The effective config reloads, validates, and reruns to the same bytes.
  PipelineConfig reloaded = load_config(dir.str("a/effective_config.txt"));
  CHECK_NOTHROW(reloaded.validate());
  reloaded.output_dir = dir.str("d");
  run_pipeline(reloaded);
  CHECK(slurp(dir.str("a/report_long.csv")) == slurp(dir.str("d/report_long.csv")));

  CHECK(ra.artifacts.size() == dir_files(dir.str("a")).size());
}

TEST_CASE("until truncates the run after the named stage") {
  TempDir dir("tmp_pipe_until");
  write_hand_dataset(dir);

  PipelineConfig cfg = hand_config(dir, "enc");
  const PipelineResult enc = run_pipeline(cfg, "encode");
  CHECK(dir_files(dir.str("enc")) ==
        std::set<std::string>{"effective_config.txt", "encoded.csv"});
  CHECK(enc.full.cells.empty());

  cfg.output_dir = dir.str("proto");
  run_pipeline(cfg, "prototypes");
  CHECK(dir_files(dir.str("proto")) ==
        std::set<std::string>{"effective_config.txt", "encoded.csv", "prototypes.txt",
                              "training_ids.txt"});

  cfg.output_dir = dir.str("cons");
  run_pipeline(cfg, "constraints");
  CHECK(dir_files(dir.str("cons")).count("constraints_Y.txt") == 1);
  CHECK(dir_files(dir.str("cons")).count("dendrogram_euclidean.txt") == 0);

  cfg.output_dir = dir.str("seg");
  cfg.methods = {"euclidean", "mmc"};
  const PipelineResult seg = run_pipeline(cfg, "segment");
  CHECK(dir_files(dir.str("seg")).count("clustering_mmc_Y_k2.csv") == 1);
  CHECK(dir_files(dir.str("seg")).count("report_long.csv") == 0);
  CHECK(seg.full.cells.empty());

  CHECK_THROWS_WITH_AS(run_pipeline(cfg, "nonsense"),
                       doctest::Contains("unknown stage"), Error);
}

TEST_CASE("a lock file blocks a second run and errors clean up partial artifacts") {
  TempDir dir("tmp_pipe_lock");
  write_hand_dataset(dir);
  PipelineConfig cfg = hand_config(dir, "out");

  fs::create_directories(cfg.output_dir);
  write_file(dir.str("out/lock"), "active\n");
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("locked"), Error);
  CHECK(fs::exists(dir.str("out/lock")));  // a foreign lock is never removed
  fs::remove(dir.str("out/lock"));

  // A failing stage removes everything it wrote except the effective config,
  // names the stage, and releases the lock.
  cfg.outputs = {"MISSING"};
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("stage load"), Error);
  CHECK(dir_files(cfg.output_dir) == std::set<std::string>{"effective_config.txt"});
  CHECK_FALSE(fs::exists(dir.str("out/lock")));

  // The directory is usable again immediately.
  cfg.outputs = {};
  CHECK_NOTHROW(run_pipeline(cfg, "encode"));
}

TEST_CASE("explicit training ids replace prototype selection") {
  TempDir dir("tmp_pipe_ids");
  write_hand_dataset(dir);
  PipelineConfig cfg = hand_config(dir, "out");
  cfg.training_ids = {"p7", "p2", "p11", "p0"};

  const PipelineResult r = run_pipeline(cfg, "prototypes");
  // Listed in row order, not request order; no prototype artifact exists.
  CHECK(slurp(dir.str("out/training_ids.txt")) == "p0\np2\np7\np11\n");
  CHECK(dir_files(cfg.output_dir).count("prototypes.txt") == 0);
  CHECK(r.artifacts.size() == 3);  // config, encoded, training ids

  PipelineConfig bad = cfg;
  bad.output_dir = dir.str("bad");
  bad.training_ids = {"p1", "ghost"};
  CHECK_THROWS_WITH_AS(run_pipeline(bad, "prototypes"),
                       doctest::Contains("stage prototypes"), Error);
  CHECK_THROWS_WITH_AS(run_pipeline(bad, "prototypes"),
                       doctest::Contains("\"ghost\" not found"), Error);
}

TEST_CASE("constraint warnings propagate to the result and warnings file") {
  TempDir dir("tmp_pipe_warn");
  write_hand_dataset(dir);
  PipelineConfig cfg = hand_config(dir, "out");
  // Four training objects cannot fill a rho = 5 window, which must warn.
  cfg.training_ids = {"p0", "p4", "p8", "p11"};

  const PipelineResult r = run_pipeline(cfg);
  const auto tagged = [&](const std::string& needle) {
    return std::any_of(r.warnings.begin(), r.warnings.end(), [&](const std::string& w) {
      return w.find(needle) != std::string::npos;
    });
  };
  CHECK(tagged("constraints[Y]"));
  CHECK(dir_files(cfg.output_dir).count("warnings.txt") == 1);
  CHECK(slurp(dir.str("out/warnings.txt")).find("constraints[Y]") != std::string::npos);
}

TEST_CASE("distance export matches hand euclidean values") {
  TempDir dir("tmp_pipe_export");
  write_file(dir.str("schema.txt"), "v numeric\n");
  write_file(dir.str("features.csv"), "id,v\na,0\nb,1\nc,2\n");
  write_file(dir.str("outputs.csv"), "id,Y\na,1\nb,2\nc,3\n");
  PipelineConfig cfg;
  cfg.schema_path = dir.str("schema.txt");
  cfg.features_path = dir.str("features.csv");
  cfg.outputs_path = dir.str("outputs.csv");
  cfg.output_dir = dir.str("out");
  cfg.engineer = false;

  // Standardizing {0,1,2} gives {-1,0,1}: all pairwise distances are exact.
  export_distance_matrix(cfg, "euclidean", "", dir.str("eu.csv"));
  const auto rows = read_csv(dir.str("eu.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"id", "a", "b", "c"});
  CHECK(rows[1] == std::vector<std::string>{"a", "0", "1", "2"});
  CHECK(rows[2] == std::vector<std::string>{"b", "1", "0", "1"});
  CHECK(rows[3] == std::vector<std::string>{"c", "2", "1", "0"});
}

TEST_CASE("identity-metric export is byte-identical to the euclidean export") {
  TempDir dir("tmp_pipe_export_id");
  write_hand_dataset(dir);
  PipelineConfig cfg = hand_config(dir, "out");
  fs::create_directories(cfg.output_dir);
  save_metric(MetricMatrix::identity(2), dir.str("out/metric_itml_Y.txt"));

  export_distance_matrix(cfg, "euclidean", "", dir.str("eu.csv"));
  export_distance_matrix(cfg, "itml", "Y", dir.str("id.csv"));
  CHECK(slurp(dir.str("eu.csv")) == slurp(dir.str("id.csv")));
}

TEST_CASE("learned-metric export is symmetric with a zero diagonal") {
  TempDir dir("tmp_pipe_export_mmc");
  PipelineConfig cfg = synth_config(dir, "out");
  run_synth(cfg);
  cfg.methods = {"euclidean", "mmc"};
  cfg.ks = {3};
  run_pipeline(cfg, "fit");

  export_distance_matrix(cfg, "mmc", "Y", dir.str("dm.csv"));
  const auto rows = read_csv(dir.str("dm.csv"));
  REQUIRE(rows.size() == 41);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 41);
    CHECK(rows[i][i] == "0");
    for (std::size_t j = 1; j < rows[i].size(); ++j)
      CHECK(rows[i][j] == rows[j][i]);  // text equality implies exact symmetry
  }

  // Covariance export works from data alone, without a stored metric.
  export_distance_matrix(cfg, "covariance", "", dir.str("cov.csv"));
  CHECK(read_csv(dir.str("cov.csv")).size() == 41);

  CHECK_THROWS_WITH_AS(export_distance_matrix(cfg, "itml", "Y", dir.str("x.csv")),
                       doctest::Contains("no fitted metric"), Error);
  CHECK_THROWS_WITH_AS(export_distance_matrix(cfg, "mmc", "", dir.str("x.csv")),
                       doctest::Contains("requires an output name"), Error);
  CHECK_THROWS_WITH_AS(export_distance_matrix(cfg, "sonar", "", dir.str("x.csv")),
                       doctest::Contains("unknown method"), Error);
}

TEST_CASE("synthetic generation is deterministic and reloadable") {
  TempDir dir("tmp_pipe_synth");
  PipelineConfig cfg = synth_config(dir, "out");
  run_synth(cfg);
  const std::string features = slurp(cfg.features_path);
  const std::string outputs = slurp(cfg.outputs_path);
  const std::string schema = slurp(cfg.schema_path);

  run_synth(cfg);
  CHECK(slurp(cfg.features_path) == features);
  CHECK(slurp(cfg.outputs_path) == outputs);
  CHECK(slurp(cfg.schema_path) == schema);

  const auto schema_cols = load_schema(cfg.schema_path);
  CHECK(schema_cols.size() == 6);
  const LoadResult lr = load_raw(cfg.features_path, schema_cols);
  CHECK(lr.table.rows() == 40);
  CHECK(lr.rejected.empty());
  const auto outs = load_outputs(cfg.outputs_path);
  REQUIRE(outs.size() == 1);
  CHECK(outs[0].name == "Y");
  CHECK(outs[0].y.size() == 40);

  // A different seed changes the population.
  PipelineConfig other = cfg;
  other.synth.seed = 12;
  run_synth(other);
  CHECK(slurp(cfg.features_path) != features);
}
