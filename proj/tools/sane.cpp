#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sane/config.hpp"
#include "sane/runner.hpp"
#include "sane/version.hpp"

namespace {

sane::RunConfig load_config(const std::string& path,
                            const std::vector<std::string>& overrides,
                            int workers_flag) {
  std::ifstream in(path);
  if (!in.good())
    throw sane::ConfigError("config: cannot open file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw sane::ConfigError(std::string("config: JSON parse error: ") +
                            e.what());
  }
  for (const auto& assignment : overrides) sane::apply_override(j, assignment);
  sane::RunConfig cfg = sane::RunConfig::parse(j);
  if (workers_flag >= 0) cfg.workers = workers_flag;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sane: differentiable architecture search for graph neural "
               "networks"};
  app.set_version_flag("--version", sane::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int workers = -1;
  std::string genotype_path;
  std::string baseline_kind;
  bool k_sweep = false;
  int enumerate_k = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config JSON")->required();
    sub->add_option("--set", overrides,
                    "flat override, e.g. --set search.epochs=10");
    sub->add_option("--workers", workers, "worker pool size (default: cores)");
  };

  CLI::App* search = app.add_subcommand(
      "search", "run seeded supernet searches and derive the best genotype");
  add_common(search);

  CLI::App* retrain = app.add_subcommand(
      "retrain", "tune and retrain a derived genotype from scratch");
  add_common(retrain);
  retrain->add_option("--genotype", genotype_path, "genotype JSON file")
      ->required();

  CLI::App* baseline =
      app.add_subcommand("baseline", "discrete-space baselines and ablations");
  add_common(baseline);
  baseline->add_option("--kind", baseline_kind, "random | mlp | epsilon")
      ->required();
  baseline->add_flag("--k-sweep", k_sweep,
                     "run the layer-count ablation K=1..6 instead");

  CLI::App* enumerate =
      app.add_subcommand("enumerate", "print the search-space cardinality");
  enumerate->add_option("K", enumerate_k, "number of GNN layers")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (enumerate->parsed()) {
      if (enumerate_k < 1)
        throw sane::ConfigError("enumerate: K must be >= 1");
      return sane::cmd_enumerate(enumerate_k, std::cout);
    }
    const sane::RunConfig cfg = load_config(config_path, overrides, workers);
    if (search->parsed()) return sane::cmd_search(cfg);
    if (retrain->parsed()) return sane::cmd_retrain(genotype_path, cfg);
    if (baseline->parsed()) return sane::cmd_baseline(baseline_kind, cfg, k_sweep);
    return 2;
  } catch (const sane::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
