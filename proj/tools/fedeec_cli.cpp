// Command-line front end: validate configs, execute runs, compare runs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedeec/baseline.hpp"
#include "fedeec/config.hpp"

namespace fs = std::filesystem;
using namespace fedeec;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cli", "cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int cmd_validate(const std::string& config_path, bool describe) {
  const std::string text = read_file(config_path);
  sim::ExperimentConfig cfg = config::parse(text);
  const auto diagnostics = config::validate(cfg);
  if (!diagnostics.empty()) {
    for (const auto& d : diagnostics) std::cerr << "error: " << d.format() << "\n";
    return 1;
  }
  std::cout << "ok: " << config_path << "\n";
  if (describe) {
    const auto topology = topo::TreeTopology::parse(cfg.topology_spec);
    std::cout << topology.describe();
    for (int tier = 1; tier <= topology.tiers(); ++tier) {
      std::cout << "tier" << tier << " dims =";
      for (int d : cfg.tier_model_dims.at(tier)) std::cout << ' ' << d;
      std::cout << "\n";
    }
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override, std::optional<std::string> mode_override) {
  const std::string snapshot = read_file(config_path);
  sim::ExperimentConfig cfg = config::parse(snapshot);
  if (seed_override) cfg.seed = *seed_override;
  if (mode_override) cfg.mode = sim::mode_from_string(*mode_override);
  const auto diagnostics = config::validate(cfg);
  if (!diagnostics.empty()) {
    for (const auto& d : diagnostics) std::cerr << "error: " << d.format() << "\n";
    return 1;
  }

  sim::RunResult result = cfg.mode == sim::Mode::hierfavg ? baseline::run_hierfavg(cfg)
                                                          : sim::run(cfg);
  const fs::path dir(out_dir);
  sim::write_run_dir(dir, snapshot, result, cfg.mode, cfg.seed);

  nlohmann::ordered_json manifest;
  manifest["config_path"] = config_path;
  manifest["config_hash"] = hex64(fnv1a(snapshot));
  manifest["output_dir"] = out_dir;
  manifest["seed"] = cfg.seed;
  manifest["mode"] = sim::to_string(cfg.mode);
  manifest["timestamp"] = static_cast<long long>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  mf << manifest.dump(2) << '\n';

  double best = 0.0;
  for (const auto& r : result.rounds) best = std::max(best, r.cloud_accuracy);
  std::cout << "mode=" << sim::to_string(cfg.mode) << " seed=" << cfg.seed
            << " rounds=" << (result.rounds.empty() ? 0 : result.rounds.back().round)
            << " best_cloud_accuracy=" << best << "\n"
            << "artifacts: " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_csv) {
  std::vector<telemetry::RunArtifact> runs;
  for (const auto& dir : run_dirs) runs.push_back(sim::load_run_dir(dir));
  const auto rows = telemetry::summarize(runs);
  const std::string csv = telemetry::summary_to_csv(rows);
  std::ofstream out(out_csv, std::ios::binary);
  if (!out) throw Error("cli", "cannot write " + out_csv);
  out << csv;

  std::cout << "method        seeds  mean_best  max_best   end-edge      edge-cloud\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %6zu  %9.4f  %8.4f  %12llu  %12llu\n",
                  row.method.c_str(), row.seeds.size(), row.mean_best_accuracy,
                  row.max_best_accuracy,
                  static_cast<unsigned long long>(row.end_edge_scalars),
                  static_cast<unsigned long long>(row.edge_cloud_scalars));
    std::cout << line;
  }
  std::cout << "summary written to " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated learning simulator (distillation + averaging baseline)"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::string out_csv = "summary.csv";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> mode_override;
  bool describe = false;
  std::vector<std::string> run_dirs;

  auto* validate = app.add_subcommand("validate", "check a config without running");
  validate->add_option("--config", config_path, "config file")->required();
  validate->add_flag("--describe", describe, "print the topology and model layout");

  auto* run = app.add_subcommand("run", "execute an experiment");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory")->envname("FEDEEC_OUT");
  run->add_option("--seed", seed_override, "override [mode] seed");
  run->add_option("--mode", mode_override, "override [mode] mode (fedeec|fedagg|hierfavg)");

  auto* report = app.add_subcommand("report", "summarize one or more run directories");
  report->add_option("dirs", run_dirs, "run directories")->required();
  report->add_option("--out", out_csv, "summary CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(validate)) return cmd_validate(config_path, describe);
    if (app.got_subcommand(run)) return cmd_run(config_path, out_dir, seed_override, mode_override);
    if (app.got_subcommand(report)) return cmd_report(run_dirs, out_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
