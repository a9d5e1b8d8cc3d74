#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sane/baselines.hpp"
#include "sane/checkpoint.hpp"
#include "sane/config.hpp"
#include "sane/genotype.hpp"
#include "sane/search.hpp"
#include "sane/trainer.hpp"
#include "sane/version.hpp"

namespace sane {

namespace detail {

inline int effective_workers(const RunConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    out += ch;
    if (ch == '"') out += '"';
  }
  out += '"';
  return out;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path);
  SANE_REQUIRE(out.good(), "cannot open ", path.string(), " for writing");
  out << text;
}

inline void write_resolved_config(const RunConfig& cfg,
                                  const std::filesystem::path& dir) {
  nlohmann::ordered_json j = cfg.resolved();
  j["version"] = kVersion;
  write_text(dir / "resolved_config.json", j.dump(2) + "\n");
}

inline void write_summary(const std::filesystem::path& dir,
                          const std::string& command, double seconds,
                          nlohmann::ordered_json extra = {}) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["wall_clock_seconds"] = seconds;
  if (!extra.empty()) j["results"] = std::move(extra);
  write_text(dir / "summary.json", j.dump(2) + "\n");
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& rec : history) {
    os << rec.epoch << ',' << format_double(rec.train_loss) << ','
       << format_double(rec.val_loss) << ',' << format_double(rec.val_acc)
       << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json genotype_file_json(const Genotype& geno,
                                                 const RunConfig& cfg,
                                                 const Graph& g) {
  nlohmann::ordered_json j = geno.to_json();
  std::ostringstream hash;
  hash << std::hex << std::setfill('0') << std::setw(16) << g.content_hash();
  j["provenance"]["seed"] = cfg.seed;
  j["provenance"]["epochs"] = cfg.search.epochs;
  j["provenance"]["dataset_hash"] = hash.str();
  return j;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["metric"] = r.metric;
  j["mean"] = r.mean;
  j["std"] = r.stddev;
  j["repeats"] = r.repeats;
  j["values"] = r.values;
  j["seeds"] = r.seeds;
  return j;
}

struct SearchRunOutput {
  Genotype genotype;
  std::vector<EpochRecord> history;
  double retrain_val = 0.0;
  SuperNet net;
  ArchParams arch;
};

// One seeded search plus a fixed-hyperparameter retrain of the derived
// genotype, whose validation metric ranks the run.
inline SearchRunOutput one_search_run(const Graph& g, const RunConfig& cfg,
                                      std::uint64_t run_seed) {
  SearchConfig sc = cfg.search;
  sc.seed = run_seed;
  Rng init_rng(Rng(run_seed).fork(1).seed());
  SearchRunOutput out{
      {},
      {},
      0.0,
      SuperNet(g.feat_dim, g.num_classes, sc.supernet(), init_rng),
      ArchParams::init(sc.k_layers, init_rng)};
  out.history = run_search(out.net, out.arch, g, sc);
  out.genotype = derive(out.arch);

  HyperParams hp = baseline_trial_hyperparams();
  hp.epochs = cfg.baseline.epochs;
  hp.patience = cfg.baseline.patience;
  Rng retrain_rng = Rng(run_seed).fork(2);
  GnnModel model(out.genotype, hp, g.feat_dim, g.num_classes, retrain_rng);
  out.retrain_val = train_model(model, g, retrain_rng.next_u64()).best_val_metric;
  return out;
}

}  // namespace detail

/// Runs `search.runs` seeded searches, ranks the derived genotypes by
/// validation metric, and writes the winner plus all candidates.
inline int cmd_search(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const Graph g = load_graph(cfg.data);
  SANE_REQUIRE(g.has_masks(), "cmd_search: graph has no train/val masks");

  std::vector<detail::SearchRunOutput> runs;
  Rng base(cfg.seed);
  for (int r = 0; r < cfg.search_runs; ++r)
    runs.push_back(detail::one_search_run(g, cfg, base.fork(100 + r).seed()));

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].retrain_val > runs[best].retrain_val) best = r;

  for (std::size_t r = 0; r < runs.size(); ++r) {
    detail::write_text(dir / ("genotype_run" + std::to_string(r) + ".json"),
                       detail::genotype_file_json(runs[r].genotype, cfg, g)
                               .dump(2) +
                           "\n");
  }
  detail::write_text(dir / "genotype.json",
                     detail::genotype_file_json(runs[best].genotype, cfg, g)
                             .dump(2) +
                         "\n");
  detail::write_text(dir / "history.csv",
                     detail::history_csv(runs[best].history));
  NamedTensors ckpt = runs[best].net.named_params();
  runs[best].arch.collect(ckpt);
  save_checkpoint(ckpt, dir / "supernet");
  detail::write_resolved_config(cfg, dir);

  nlohmann::ordered_json extra;
  extra["best_run"] = best;
  extra["best_genotype"] = runs[best].genotype.brief();
  extra["best_retrain_val"] = runs[best].retrain_val;
  detail::write_summary(dir, "search", detail::seconds_since(start),
                        std::move(extra));
  return 0;
}

/// Tunes a genotype file, retrains the winner, and writes the report.
inline int cmd_retrain(const std::string& genotype_path,
                       const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  SANE_REQUIRE(fs::exists(genotype_path), "cmd_retrain: missing genotype file ",
               genotype_path);
  nlohmann::json gj;
  {
    std::ifstream in(genotype_path);
    try {
      in >> gj;
    } catch (const std::exception& e) {
      detail::fail("cmd_retrain: malformed genotype JSON: ", e.what());
    }
  }
  const Genotype genotype = Genotype::from_json(gj);
  const Graph g = load_graph(cfg.data);

  TuneOptions opt;
  opt.repeats = cfg.trainer.repeats;
  opt.workers = detail::effective_workers(cfg);
  opt.epochs = cfg.trainer.epochs;
  opt.patience = cfg.trainer.patience;
  const TuneResult result = tune(genotype, g, cfg.trainer.trials, cfg.seed, opt);

  nlohmann::ordered_json j = detail::report_json(result.report);
  j["genotype"] = genotype.to_json();
  j["best_hyperparams"]["heads"] = result.best.heads;
  j["best_hyperparams"]["hidden"] = result.best.hidden;
  j["best_hyperparams"]["lr"] = result.best.lr;
  j["best_hyperparams"]["l2"] = result.best.l2;
  j["best_hyperparams"]["activation"] = to_string(result.best.activation);
  j["best_hyperparams"]["dropout"] = result.best.dropout;
  j["tuning_trials"] = cfg.trainer.trials;
  detail::write_text(dir / "eval_report.json", j.dump(2) + "\n");
  detail::write_resolved_config(cfg, dir);
  detail::write_summary(dir, "retrain", detail::seconds_since(start));
  return 0;
}

namespace detail {

inline std::string trials_csv(const std::vector<TrialRecord>& trials,
                              bool mlp) {
  std::ostringstream os;
  os << "trial_index,genotype_json,val_metric,test_metric,seconds\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialRecord& t = trials[i];
    nlohmann::ordered_json gj;
    if (mlp) {
      gj["mlp_width"] = t.mlp_width;
      gj["mlp_depth"] = t.mlp_depth;
    } else {
      gj = t.genotype.to_json();
    }
    os << i << ',' << csv_quote(gj.dump()) << ',' << format_double(t.val_metric)
       << ',' << format_double(t.test_metric) << ','
       << format_double(t.seconds) << '\n';
  }
  return os.str();
}

struct SweepRow {
  double x = 0.0;
  double mean_test = 0.0;
  double std_test = 0.0;
  double seconds = 0.0;
};

// Shared by the epsilon and K ablations: per setting, `runs` seeded
// searches, each derived genotype retrained once with fixed
// hyperparameters, test accuracy averaged.
inline SweepRow sweep_point(const Graph& g, RunConfig cfg, double x) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> tests;
  Rng base(cfg.seed);
  for (int r = 0; r < cfg.search_runs; ++r) {
    const auto run = one_search_run(g, cfg, base.fork(100 + r).seed());
    HyperParams hp = baseline_trial_hyperparams();
    hp.epochs = cfg.baseline.epochs;
    hp.patience = cfg.baseline.patience;
    Rng rng = Rng(base.fork(100 + r).seed()).fork(3);
    GnnModel model(run.genotype, hp, g.feat_dim, g.num_classes, rng);
    train_model(model, g, rng.next_u64());
    tests.push_back(evaluate(model, g, Split::kTest));
  }
  const EvalReport rep = EvalReport::from_values("test", std::move(tests), {});
  return SweepRow{x, rep.mean, rep.stddev, seconds_since(start)};
}

}  // namespace detail

inline const std::vector<double> kEpsilonGrid = {0.0, 0.2, 0.5, 0.9, 1.0};
inline const std::vector<int> kLayerSweep = {1, 2, 3, 4, 5, 6};

/// kind = random | mlp | epsilon; with k_sweep set, runs the K ablation
/// instead of the named baseline.
inline int cmd_baseline(const std::string& kind, const RunConfig& cfg,
                        bool k_sweep = false) {
  const auto start = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const Graph g = load_graph(cfg.data);
  const int workers = detail::effective_workers(cfg);

  HyperParams trial_hp = baseline_trial_hyperparams();
  trial_hp.epochs = cfg.baseline.epochs;
  trial_hp.patience = cfg.baseline.patience;

  if (k_sweep) {
    std::ostringstream os;
    os << "K,mean_test,std_test,seconds\n";
    for (int k : kLayerSweep) {
      RunConfig point = cfg;
      point.search.k_layers = k;
      const auto row = detail::sweep_point(g, point, static_cast<double>(k));
      os << k << ',' << detail::format_double(row.mean_test) << ','
         << detail::format_double(row.std_test) << ','
         << detail::format_double(row.seconds) << '\n';
    }
    detail::write_text(dir / "ksweep.csv", os.str());
    detail::write_resolved_config(cfg, dir);
    detail::write_summary(dir, "baseline:ksweep",
                          detail::seconds_since(start));
    return 0;
  }

  if (kind == "random" || kind == "mlp") {
    const BaselineResult result =
        kind == "random"
            ? random_search(g, cfg.baseline.budget, trial_hp, cfg.seed, workers)
            : mlp_search(g, cfg.baseline.budget, trial_hp, cfg.seed, workers);
    detail::write_text(dir / "results.csv",
                       detail::trials_csv(result.trials, kind == "mlp"));
    nlohmann::ordered_json best;
    best["trial_index"] = result.best_index;
    if (kind == "mlp") {
      best["mlp_width"] = result.best().mlp_width;
      best["mlp_depth"] = result.best().mlp_depth;
    } else {
      best["genotype"] = result.best().genotype.to_json();
    }
    best["val_metric"] = result.best().val_metric;
    best["test_metric"] = result.best().test_metric;
    best["note"] =
        "per-trial hyperparameters fixed to the search-phase settings";
    detail::write_text(dir / "best_report.json", best.dump(2) + "\n");
    detail::write_resolved_config(cfg, dir);
    detail::write_summary(dir, "baseline:" + kind,
                          detail::seconds_since(start));
    return 0;
  }

  if (kind == "epsilon") {
    std::ostringstream os;
    os << "epsilon,mean_test,std_test,seconds\n";
    for (double eps : kEpsilonGrid) {
      RunConfig point = cfg;
      point.search.epsilon = eps;
      const auto row = detail::sweep_point(g, point, eps);
      os << eps << ',' << detail::format_double(row.mean_test) << ','
         << detail::format_double(row.std_test) << ','
         << detail::format_double(row.seconds) << '\n';
    }
    detail::write_text(dir / "epsilon.csv", os.str());
    detail::write_resolved_config(cfg, dir);
    detail::write_summary(dir, "baseline:epsilon",
                          detail::seconds_since(start));
    return 0;
  }

  detail::fail("cmd_baseline: unknown kind '", kind,
               "'; legal kinds: random, mlp, epsilon");
}

inline int cmd_enumerate(int k_layers, std::ostream& out) {
  out << enumerate_space_size(k_layers) << "\n";
  return 0;
}

}  // namespace sane
