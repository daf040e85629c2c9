#include "CLI11.hpp"

#include "airseg/pipeline.hpp"

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using airseg::Error;
using airseg::Index;
using airseg::PipelineConfig;
using airseg::SignalFeature;

// Every flag is optional; engaged values override the loaded config.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> schema, features, outputs, out_dir;
  std::vector<std::string> methods, output_names, training_ids;
  std::vector<long long> ks;
  std::optional<int> threads;
  int engineer_on = 0, engineer_off = 0;
  std::optional<long long> importance_top;
  std::optional<double> training_fraction;
  std::optional<double> tail;
  std::optional<long long> rho_mi, rho_ma;

  std::optional<long long> mmc_max_iterations;
  std::optional<double> mmc_tolerance, mmc_initial_step;
  std::optional<long long> itml_max_iterations;
  std::optional<double> itml_tolerance, itml_gamma, itml_u, itml_l;
  std::optional<long long> lmnn_max_iterations;
  std::optional<double> lmnn_tolerance, lmnn_mu, lmnn_initial_step;

  std::optional<long long> synth_n, synth_d;
  std::optional<double> synth_noise_sd, synth_offset;
  std::optional<unsigned long long> synth_seed;
  std::optional<std::string> synth_signal, synth_output_name;
};

std::vector<SignalFeature> parse_signal_arg(const std::string& text) {
  std::vector<SignalFeature> out;
  std::string::size_type start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = comma == std::string::npos ? text.substr(start)
                                                        : text.substr(start, comma - start);
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw Error("--synth-signal: expected index:weight, got \"" + item + "\"");
    try {
      std::size_t pos = 0;
      const long long idx = std::stoll(item.substr(0, colon), &pos);
      if (pos != colon) throw std::invalid_argument("");
      const std::string w = item.substr(colon + 1);
      const double weight = std::stod(w, &pos);
      if (pos != w.size()) throw std::invalid_argument("");
      out.push_back({Index(idx), weight});
    } catch (const std::exception&) {
      throw Error("--synth-signal: malformed element \"" + item + "\"");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Config file to load before applying flags");
  cmd->add_option("--schema", o.schema, "Schema file path");
  cmd->add_option("--features", o.features, "Features CSV path");
  cmd->add_option("--outputs", o.outputs, "Outputs CSV path");
  cmd->add_option("--out", o.out_dir, "Output directory");
  cmd->add_option("--methods", o.methods, "Distance methods to run")->delimiter(',');
  cmd->add_option("--output-names", o.output_names,
                  "Outputs to evaluate (default: all in the outputs CSV)")
      ->delimiter(',');
  cmd->add_option("--ks", o.ks, "Cluster counts")->delimiter(',');
  cmd->add_option("--threads", o.threads, "Worker threads for pairwise distances");
  cmd->add_flag("--engineer", o.engineer_on, "Enable derived feature engineering");
  cmd->add_flag("--no-engineer", o.engineer_off, "Disable derived feature engineering");
  cmd->add_option("--importance-top", o.importance_top, "Ranked features to export");
  cmd->add_option("--training-fraction", o.training_fraction,
                  "Fraction of objects selected as training prototypes");
  cmd->add_option("--training-ids", o.training_ids, "Explicit training object ids")
      ->delimiter(',');
  cmd->add_option("--tail", o.tail, "Tail fraction for pair identification");
  cmd->add_option("--rho-mi", o.rho_mi, "Microscopic triplet reduction level");
  cmd->add_option("--rho-ma", o.rho_ma, "Macroscopic triplet reduction level");

  cmd->add_option("--mmc-max-iterations", o.mmc_max_iterations, "");
  cmd->add_option("--mmc-tolerance", o.mmc_tolerance, "");
  cmd->add_option("--mmc-initial-step", o.mmc_initial_step, "");
  cmd->add_option("--itml-max-iterations", o.itml_max_iterations, "");
  cmd->add_option("--itml-tolerance", o.itml_tolerance, "");
  cmd->add_option("--itml-gamma", o.itml_gamma, "");
  cmd->add_option("--itml-u", o.itml_u, "Similar-pair squared-distance bound");
  cmd->add_option("--itml-l", o.itml_l, "Dissimilar-pair squared-distance bound");
  cmd->add_option("--lmnn-max-iterations", o.lmnn_max_iterations, "");
  cmd->add_option("--lmnn-tolerance", o.lmnn_tolerance, "");
  cmd->add_option("--lmnn-mu", o.lmnn_mu, "Push-loss weight in [0,1]");
  cmd->add_option("--lmnn-initial-step", o.lmnn_initial_step, "");

  cmd->add_option("--synth-n", o.synth_n, "Synthetic population size");
  cmd->add_option("--synth-d", o.synth_d, "Synthetic feature count");
  cmd->add_option("--synth-noise-sd", o.synth_noise_sd, "Synthetic output noise sd");
  cmd->add_option("--synth-seed", o.synth_seed, "Synthetic generator seed");
  cmd->add_option("--synth-offset", o.synth_offset, "Synthetic output offset");
  cmd->add_option("--synth-signal", o.synth_signal,
                  "Signal features as index:weight,index:weight,...");
  cmd->add_option("--synth-output-name", o.synth_output_name, "Synthetic output name");
}

PipelineConfig build_config(const Overrides& o) {
  PipelineConfig cfg;
  if (o.config) cfg = airseg::load_config(*o.config);
  if (o.schema) cfg.schema_path = *o.schema;
  if (o.features) cfg.features_path = *o.features;
  if (o.outputs) cfg.outputs_path = *o.outputs;
  if (o.out_dir) cfg.output_dir = *o.out_dir;
  if (!o.methods.empty()) cfg.methods = o.methods;
  if (!o.output_names.empty()) cfg.outputs = o.output_names;
  if (!o.ks.empty()) {
    cfg.ks.clear();
    for (long long k : o.ks) cfg.ks.push_back(Index(k));
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.engineer_on) cfg.engineer = true;
  if (o.engineer_off) cfg.engineer = false;
  if (o.importance_top) cfg.importance_top = Index(*o.importance_top);
  if (o.training_fraction) cfg.training_fraction = *o.training_fraction;
  if (!o.training_ids.empty()) cfg.training_ids = o.training_ids;
  if (o.tail) cfg.tail = *o.tail;
  if (o.rho_mi) cfg.rho_mi = Index(*o.rho_mi);
  if (o.rho_ma) cfg.rho_ma = Index(*o.rho_ma);

  if (o.mmc_max_iterations) cfg.mmc.max_iterations = Index(*o.mmc_max_iterations);
  if (o.mmc_tolerance) cfg.mmc.tolerance = *o.mmc_tolerance;
  if (o.mmc_initial_step) cfg.mmc.initial_step = *o.mmc_initial_step;
  if (o.itml_max_iterations) cfg.itml.max_iterations = Index(*o.itml_max_iterations);
  if (o.itml_tolerance) cfg.itml.tolerance = *o.itml_tolerance;
  if (o.itml_gamma) cfg.itml.gamma = *o.itml_gamma;
  if (o.itml_u) cfg.itml.u = *o.itml_u;
  if (o.itml_l) cfg.itml.l = *o.itml_l;
  if (o.lmnn_max_iterations) cfg.lmnn.max_iterations = Index(*o.lmnn_max_iterations);
  if (o.lmnn_tolerance) cfg.lmnn.tolerance = *o.lmnn_tolerance;
  if (o.lmnn_mu) cfg.lmnn.mu = *o.lmnn_mu;
  if (o.lmnn_initial_step) cfg.lmnn.initial_step = *o.lmnn_initial_step;

  if (o.synth_n) cfg.synth.n = Index(*o.synth_n);
  if (o.synth_d) cfg.synth.d = Index(*o.synth_d);
  if (o.synth_noise_sd) cfg.synth.noise_sd = *o.synth_noise_sd;
  if (o.synth_seed) cfg.synth.seed = *o.synth_seed;
  if (o.synth_offset) cfg.synth.offset = *o.synth_offset;
  if (o.synth_signal) cfg.synth.signal = parse_signal_arg(*o.synth_signal);
  if (o.synth_output_name) cfg.synth.output_name = *o.synth_output_name;
  return cfg;
}

void report_run(const airseg::PipelineResult& result, const PipelineConfig& cfg) {
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << result.artifacts.size() << " artifact(s) under "
            << cfg.output_dir << "\n";
  if (!result.full.comparisons.empty()) {
    std::map<std::string, std::pair<int, int>> tally;  // method -> wins/cells
    for (const auto& c : result.full.comparisons) {
      auto& t = tally[c.method];
      t.first += c.win ? 1 : 0;
      t.second += 1;
    }
    for (const auto& [method, t] : tally)
      std::cout << method << ": " << t.first << "/" << t.second
                << " median-CV wins vs " << result.full.baseline << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised metric learning and population segmentation"};
  app.require_subcommand(1);
  Overrides o;

  CLI::App* cmd_run = app.add_subcommand("run", "Full pipeline: encode through reports");
  CLI::App* cmd_encode = app.add_subcommand("encode", "Stop after the encoded matrix dump");
  CLI::App* cmd_protos =
      app.add_subcommand("prototypes", "Stop after training prototype selection");
  CLI::App* cmd_constraints =
      app.add_subcommand("constraints", "Stop after constraint identification");
  CLI::App* cmd_fit = app.add_subcommand("fit", "Stop after metric fitting");
  CLI::App* cmd_segment =
      app.add_subcommand("segment", "Stop after dendrograms and clusterings");
  CLI::App* cmd_evaluate =
      app.add_subcommand("evaluate", "Full pipeline (alias emphasizing the reports)");
  CLI::App* cmd_export =
      app.add_subcommand("export-distances", "Write one pairwise distance matrix as CSV");
  CLI::App* cmd_synth =
      app.add_subcommand("synth", "Generate a synthetic dataset at the configured paths");

  for (CLI::App* cmd : {cmd_run, cmd_encode, cmd_protos, cmd_constraints, cmd_fit,
                        cmd_segment, cmd_evaluate, cmd_export, cmd_synth})
    add_common(cmd, o);

  std::string fit_algorithm;
  cmd_fit->add_option("--algorithm", fit_algorithm,
                      "Fit only this learner (mmc, itml, or lmnn)");

  std::string export_method, export_output, export_to;
  cmd_export->add_option("--method", export_method, "Distance method to export")
      ->required();
  cmd_export->add_option("--output", export_output,
                         "Output name (required for learned methods)");
  cmd_export->add_option("--to", export_to, "Destination CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = build_config(o);
    if (cmd_synth->parsed()) {
      airseg::run_synth(cfg);
      std::cout << "wrote " << cfg.features_path << ", " << cfg.outputs_path << ", "
                << cfg.schema_path << "\n";
      return 0;
    }
    if (cmd_export->parsed()) {
      airseg::export_distance_matrix(cfg, export_method, export_output, export_to);
      std::cout << "wrote " << export_to << "\n";
      return 0;
    }
    std::string until = "full";
    if (cmd_encode->parsed()) until = "encode";
    if (cmd_protos->parsed()) until = "prototypes";
    if (cmd_constraints->parsed()) until = "constraints";
    if (cmd_fit->parsed()) {
      until = "fit";
      if (!fit_algorithm.empty()) cfg.methods = {fit_algorithm};
    }
    if (cmd_segment->parsed()) until = "segment";
    const airseg::PipelineResult result = airseg::run_pipeline(cfg, until);
    report_run(result, cfg);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
