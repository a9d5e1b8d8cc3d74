#include <catch2/catch_amalgamated.hpp>

#include "sane/baselines.hpp"
#include "support/oracles.hpp"

using namespace sane;
using Catch::Approx;

namespace {

Graph small_planted(std::uint64_t seed = 41) {
  Graph g = synth_planted(90, 3, 8, 0.1, 0.01, seed);
  return make_splits(g, {0.6, 0.2, 0.2}, seed + 1);
}

HyperParams quick_hp() {
  HyperParams hp = baseline_trial_hyperparams();
  hp.hidden = 8;
  hp.epochs = 25;
  hp.patience = 10;
  return hp;
}

}  // namespace

TEST_CASE("sampled genotypes are close to uniform per coordinate") {
  Rng rng(1);
  const int draws = 50000;
  std::vector<std::vector<int>> node_counts(3, std::vector<int>(kNumNodeAggs, 0));
  std::vector<int> layer_counts(kNumLayerAggs, 0);
  for (int i = 0; i < draws; ++i) {
    const Genotype g = sample_genotype(3, rng);
    for (int l = 0; l < 3; ++l)
      ++node_counts[l][static_cast<int>(g.node_ops[l])];
    ++layer_counts[static_cast<int>(g.layer_op)];
  }
  const double expected = static_cast<double>(draws) / kNumNodeAggs;
  for (int l = 0; l < 3; ++l)
    for (int op = 0; op < kNumNodeAggs; ++op) {
      CHECK(node_counts[l][op] > expected * 0.9);
      CHECK(node_counts[l][op] < expected * 1.1);
    }
  for (int c : layer_counts) {
    CHECK(c > draws / 3 * 0.9);
    CHECK(c < draws / 3 * 1.1);
  }
}

TEST_CASE("random search basics") {
  Graph g = small_planted();

  SECTION("budget of one returns that single trial") {
    const BaselineResult r = random_search(g, 1, quick_hp(), 7);
    CHECK(r.trials.size() == 1);
    CHECK(r.best_index == 0);
    CHECK(r.best().val_metric >= 0.0);
    CHECK(r.best().val_metric <= 1.0);
    CHECK(r.best().seconds > 0.0);
  }
  SECTION("the same seed draws the same genotype sequence") {
    Rng a(9), b(9);
    for (int i = 0; i < 200; ++i)
      CHECK(sample_genotype(3, a) == sample_genotype(3, b));
  }
  SECTION("best validation metric is at least the median") {
    const BaselineResult r = random_search(g, 7, quick_hp(), 3);
    std::vector<double> vals;
    for (const auto& t : r.trials) vals.push_back(t.val_metric);
    std::sort(vals.begin(), vals.end());
    CHECK(r.best().val_metric >= vals[vals.size() / 2]);
    for (const auto& t : r.trials) {
      CHECK(t.val_metric >= 0.0);
      CHECK(t.test_metric <= 1.0);
    }
  }
}

TEST_CASE("mlp search covers the grid") {
  CHECK(mlp_grid().size() == 12);

  Graph g = small_planted(43);
  HyperParams hp = quick_hp();
  hp.epochs = 12;
  const BaselineResult r = mlp_search(g, 12, hp, 5);
  std::set<std::pair<int, int>> seen;
  for (const auto& t : r.trials) seen.insert({t.mlp_width, t.mlp_depth});
  CHECK(seen.size() == 12);  // one full cycle covers every cell
  for (const auto& t : r.trials) {
    CHECK(t.mlp_width >= 8);
    CHECK(t.mlp_depth >= 1);
  }
}

TEST_CASE("an MLP aggregator trial trains above chance on the planted graph") {
  Graph g = small_planted(47);
  HyperParams hp = quick_hp();
  hp.epochs = 80;
  Rng rng(13);
  GnnModel m(3, 8, 2, hp, g.feat_dim, g.num_classes, rng);
  const TrainResult tr = train_model(m, g, 13);
  CHECK(tr.best_val_metric > 1.0 / 3.0 + 0.1);
}

TEST_CASE("parallel and sequential runs agree") {
  Graph g = small_planted(53);
  HyperParams hp = quick_hp();
  hp.epochs = 10;
  const BaselineResult seq = random_search(g, 4, hp, 11, 1);
  const BaselineResult par = random_search(g, 4, hp, 11, 4);
  REQUIRE(seq.trials.size() == par.trials.size());
  for (std::size_t i = 0; i < seq.trials.size(); ++i) {
    CHECK(seq.trials[i].genotype == par.trials[i].genotype);
    CHECK(seq.trials[i].val_metric == par.trials[i].val_metric);
    CHECK(seq.trials[i].test_metric == par.trials[i].test_metric);
  }
  CHECK(seq.best_index == par.best_index);
}
