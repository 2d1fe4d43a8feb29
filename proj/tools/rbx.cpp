// rbx <experiment> [--config FILE] [--seed N]... [--out DIR] [--bins N] [--full-resolution]
// Exit status: 0 when every asserted property holds, 1 when one fails,
// 2 on invalid input.

#include "rbx/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Runs one of the example experiments and reports its asserted properties."};
  std::string name, config_path, out_dir;
  std::vector<std::uint64_t> seeds;
  int bins = 0;
  bool full = false, quiet = false;
  app.add_option("experiment", name, "yield | microsphere | steelbar | damage | rubber | poisson")
      ->required()
      ->check(CLI::IsMember(rbx::kExperimentNames));
  app.add_option("--config", config_path, "JSON file with experiment, seeds, params, bins")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seeds, "Seed to run; repeatable, replaces the configured seeds");
  app.add_option("--out", out_dir, "Directory for report.json and curves.csv");
  app.add_option("--bins", bins, "Bins per axis of the statistic grid")->check(CLI::PositiveNumber);
  app.add_flag("--full-resolution", full, "Use the finest evaluation lattice");
  app.add_flag("--quiet", quiet, "Only print the exit summary");
  CLI11_PARSE(app, argc, argv);

  try {
    rbx::ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      nlohmann::json j = nlohmann::json::parse(in);
      if (!j.contains("experiment")) j["experiment"] = name;
      cfg = rbx::experiment_config_from_json(j);
      if (cfg.name != name) {
        std::cerr << "error: config is for experiment '" << cfg.name << "', not '" << name << "'\n";
        return 2;
      }
    }
    cfg.name = name;
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (bins > 0) cfg.bins = bins;
    if (full) cfg.full_resolution = true;

    const rbx::RunReport report = rbx::run_experiment(cfg);
    if (!quiet) {
      for (const auto& c : report.checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
        std::cout << '\n';
      }
      std::cout << "aggregate: " << report.aggregate.dump() << '\n';
    }
    std::printf("%s: %s in %.2f s\n", name.c_str(), report.all_passed() ? "all checks passed" : "CHECKS FAILED",
                report.wall_time_s);
    return report.all_passed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
