#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "treetier/bench.hpp"

using namespace treetier;

int main(int argc, char** argv) {
  CLI::App app{"tiered-memory placement benchmark for tree indexes"};
  app.require_subcommand(1);

  std::string cfg_path, out_dir;
  u64 seed_override = 0;
  u32 threads_override = 0;
  bool virtual_clock = false;
  auto* run_cmd = app.add_subcommand("run", "run one benchmark configuration");
  run_cmd->add_option("--config", cfg_path, "path to the JSON config")->required();
  run_cmd->add_option("--out", out_dir, "output directory for report.json and timeline.csv");
  run_cmd->add_option("--seed", seed_override, "override the config seed");
  run_cmd->add_option("--threads", threads_override, "override the worker thread count");
  run_cmd->add_flag("--virtual-clock", virtual_clock, "force the deterministic virtual clock");

  std::string cfg_a, cfg_b;
  auto* cmp_cmd = app.add_subcommand("compare", "paired A/B run with a shared workload and seed");
  cmp_cmd->add_option("--a", cfg_a, "config A")->required();
  cmp_cmd->add_option("--b", cfg_b, "config B")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      RunConfig cfg;
      try {
        cfg = RunConfig::from_json_file(cfg_path);
        if (seed_override) cfg.seed = seed_override;
        if (threads_override) cfg.threads = threads_override;
        if (virtual_clock) cfg.clock = ClockMode::VirtualTick;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
      } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      RunReport r = run(cfg);
      std::cout << r.to_json(cfg) << "\n";
      return 0;
    }
    if (*cmp_cmd) {
      RunConfig a, b;
      try {
        a = RunConfig::from_json_file(cfg_a);
        b = RunConfig::from_json_file(cfg_b);
      } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      try {
        ComparisonReport r = compare(a, b);
        std::cout << r.to_json(a, b) << "\n";
      } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
