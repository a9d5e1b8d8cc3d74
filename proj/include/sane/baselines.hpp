#pragma once

#include <chrono>
#include <cstdint>
#include <utility>
#include <vector>

#include "sane/genotype.hpp"
#include "sane/graph.hpp"
#include "sane/model.hpp"
#include "sane/pool.hpp"
#include "sane/trainer.hpp"

namespace sane {

struct TrialRecord {
  Genotype genotype;
  int mlp_width = 0;  // set only for MLP trials
  int mlp_depth = 0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

struct BaselineResult {
  std::vector<TrialRecord> trials;
  std::size_t best_index = 0;  // best validation metric, lowest index wins ties

  const TrialRecord& best() const { return trials[best_index]; }
};

namespace detail {

inline double seconds_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

inline std::size_t best_by_val(const std::vector<TrialRecord>& trials) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < trials.size(); ++i)
    if (trials[i].val_metric > trials[best].val_metric) best = i;
  return best;
}

}  // namespace detail

// Per-trial trainer settings for the discrete baselines: the search-phase
// hyperparameters with a reduced epoch budget.
inline HyperParams baseline_trial_hyperparams() {
  HyperParams hp;
  hp.heads = 2;
  hp.hidden = 32;
  hp.lr = 0.005;
  hp.l2 = 2e-4;
  hp.activation = Activation::kElu;
  hp.dropout = 0.6;
  hp.epochs = 200;
  hp.patience = 30;
  return hp;
}

/// Uniform random search over the discrete space; every candidate is
/// trained from scratch and scored on validation, test reported per trial.
inline BaselineResult random_search(const Graph& g, int budget,
                                    const HyperParams& trial_hp,
                                    std::uint64_t seed, int workers = 1) {
  SANE_REQUIRE(budget >= 1, "random_search: budget must be >= 1");
  SANE_REQUIRE(g.has_masks(), "random_search: graph is missing masks");
  const int k_layers = 3;
  Rng geno_rng(seed);
  std::vector<Genotype> genotypes;
  genotypes.reserve(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i)
    genotypes.push_back(sample_genotype(k_layers, geno_rng));

  BaselineResult result;
  result.trials.resize(static_cast<std::size_t>(budget));
  Rng base(seed);
  parallel_for(static_cast<std::size_t>(budget), workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    Rng trial_rng = base.fork(i);
    GnnModel model(genotypes[i], trial_hp, g.feat_dim, g.num_classes,
                   trial_rng);
    const TrainResult tr = train_model(model, g, trial_rng.next_u64());
    TrialRecord rec;
    rec.genotype = genotypes[i];
    rec.val_metric = tr.best_val_metric;
    rec.test_metric = evaluate(model, g, Split::kTest);
    rec.seconds = detail::seconds_since(start);
    rec.seed = trial_rng.seed();
    result.trials[i] = std::move(rec);
  });
  result.best_index = detail::best_by_val(result.trials);
  return result;
}

inline std::vector<std::pair<int, int>> mlp_grid() {
  std::vector<std::pair<int, int>> cells;
  for (int w : kMlpWidths)
    for (int d : kMlpDepths) cells.push_back({w, d});
  return cells;
}

/// Random search over the 12-cell MLP-aggregator grid. Cells are drawn
/// without replacement per 12-trial cycle, so any budget >= 12 covers the
/// whole grid.
inline BaselineResult mlp_search(const Graph& g, int budget,
                                 const HyperParams& trial_hp,
                                 std::uint64_t seed, int workers = 1) {
  SANE_REQUIRE(budget >= 1, "mlp_search: budget must be >= 1");
  SANE_REQUIRE(g.has_masks(), "mlp_search: graph is missing masks");
  const int k_layers = 3;
  Rng cell_rng(seed);
  std::vector<std::pair<int, int>> schedule;
  while (static_cast<int>(schedule.size()) < budget) {
    auto cycle = mlp_grid();
    cell_rng.shuffle(cycle);
    for (auto& c : cycle) {
      if (static_cast<int>(schedule.size()) >= budget) break;
      schedule.push_back(c);
    }
  }

  BaselineResult result;
  result.trials.resize(static_cast<std::size_t>(budget));
  Rng base(seed);
  parallel_for(static_cast<std::size_t>(budget), workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    Rng trial_rng = base.fork(i);
    const auto [w, d] = schedule[i];
    GnnModel model(k_layers, w, d, trial_hp, g.feat_dim, g.num_classes,
                   trial_rng);
    const TrainResult tr = train_model(model, g, trial_rng.next_u64());
    TrialRecord rec;
    rec.mlp_width = w;
    rec.mlp_depth = d;
    rec.val_metric = tr.best_val_metric;
    rec.test_metric = evaluate(model, g, Split::kTest);
    rec.seconds = detail::seconds_since(start);
    rec.seed = trial_rng.seed();
    result.trials[i] = std::move(rec);
  });
  result.best_index = detail::best_by_val(result.trials);
  return result;
}

}  // namespace sane
