#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sane/common.hpp"
#include "sane/genotype.hpp"
#include "sane/graph.hpp"
#include "sane/metrics.hpp"
#include "sane/model.hpp"
#include "sane/optim.hpp"
#include "sane/pool.hpp"
#include "sane/tensor.hpp"

namespace sane {

enum class Split { kTrain, kVal, kTest };

inline double evaluate(const GnnModel& model, const Graph& g, Split split) {
  Rng rng(0);  // unused: evaluation runs without dropout
  const Tensor logits = model.forward(g, false, rng);
  switch (split) {
    case Split::kTrain: return metric_of_logits(logits, g, g.train_mask());
    case Split::kVal: return metric_of_logits(logits, g, g.val_mask());
    case Split::kTest: return metric_of_logits(logits, g, g.test_mask());
  }
  detail::fail("evaluate: unknown split");
}

struct TrainResult {
  double best_val_metric = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> train_losses;
};

/// Full-batch Adam with early stopping on the validation metric; the model
/// is left at its best-validation checkpoint. lr == 0 runs the loop
/// without updates, leaving parameters untouched.
inline TrainResult train_model(GnnModel& model, const Graph& g,
                               std::uint64_t seed) {
  SANE_REQUIRE(g.has_masks(), "train: graph is missing train/val masks");
  const HyperParams& hp = model.hyperparams();
  Rng rng(seed);
  const std::vector<Tensor> params = model.params();
  std::optional<Adam> opt;
  if (hp.lr > 0.0) opt.emplace(params, hp.lr, hp.l2);
  Tape tape;

  TrainResult result;
  std::vector<std::vector<double>> best_snapshot;
  int since_best = 0;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    double loss_value = 0.0;
    if (opt) {
      TapeScope scope(tape);
      const Tensor logits = model.forward(g, true, rng);
      const Tensor loss = graph_loss(logits, g, g.train_mask());
      loss_value = loss.item();
      SANE_REQUIRE(std::isfinite(loss_value),
                   "train: loss diverged (non-finite) at epoch ", epoch);
      for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
      backward(loss);
      opt->step();
    } else {
      const Tensor logits = model.forward(g, true, rng);
      loss_value = graph_loss(logits, g, g.train_mask()).item();
    }
    result.train_losses.push_back(loss_value);
    result.epochs_run = epoch;

    // validation forward runs off-tape and without dropout
    const Tensor val_logits = model.forward(g, false, rng);
    const double val_metric = metric_of_logits(val_logits, g, g.val_mask());
    if (best_snapshot.empty() || val_metric > result.best_val_metric) {
      result.best_val_metric = val_metric;
      result.best_epoch = epoch;
      best_snapshot.clear();
      for (const Tensor& p : params) best_snapshot.push_back(p.values());
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    const_cast<Tensor&>(params[i]).values() = best_snapshot[i];
  return result;
}

struct EvalReport {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  int repeats = 0;

  static EvalReport from_values(std::string metric_name,
                                std::vector<double> vals,
                                std::vector<std::uint64_t> used_seeds) {
    EvalReport r;
    r.metric = std::move(metric_name);
    r.values = std::move(vals);
    r.seeds = std::move(used_seeds);
    r.repeats = static_cast<int>(r.values.size());
    for (double v : r.values) r.mean += v;
    r.mean /= static_cast<double>(r.values.size());
    if (r.values.size() >= 2) {
      double ss = 0.0;
      for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
      r.stddev = std::sqrt(ss / static_cast<double>(r.values.size() - 1));
    }
    return r;
  }
};

struct TuneTrial {
  HyperParams hp;
  double val_metric = 0.0;
};

struct TuneOptions {
  int repeats = 5;
  int workers = 1;
  int epochs = 600;
  int patience = 30;
};

struct TuneResult {
  HyperParams best;
  EvalReport report;
  std::vector<TuneTrial> trials;
};

inline HyperParams sample_hyperparams(Rng& rng, int epochs, int patience) {
  static const std::vector<int> kHeads = {1, 2, 4, 8};
  static const std::vector<int> kHidden = {16, 32, 64, 128, 256, 512};
  static const std::vector<double> kDropout = {0.2, 0.4, 0.5, 0.6, 0.8};
  static const std::vector<Activation> kActs = {
      Activation::kRelu, Activation::kElu, Activation::kTanh};
  HyperParams hp;
  hp.heads = rng.pick(kHeads);
  hp.hidden = rng.pick(kHidden);
  hp.lr = rng.log_uniform(1e-4, 1e-2);
  hp.l2 = rng.bernoulli(0.2) ? 0.0 : rng.log_uniform(1e-5, 1e-3);
  hp.activation = rng.pick(kActs);
  hp.dropout = rng.pick(kDropout);
  hp.epochs = epochs;
  hp.patience = patience;
  hp.validate();
  return hp;
}

/// Seeded random search over the hyperparameter domains, then a final
/// report from `repeats` retrains of the winner on held-out test nodes.
inline TuneResult tune(const Genotype& genotype, const Graph& g, int trials,
                       std::uint64_t seed, const TuneOptions& opt = {}) {
  SANE_REQUIRE(trials >= 1, "tune: trials must be >= 1");
  SANE_REQUIRE(opt.repeats >= 1, "tune: repeats must be >= 1");
  Rng sampler(seed);
  std::vector<HyperParams> configs;
  configs.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t)
    configs.push_back(sample_hyperparams(sampler, opt.epochs, opt.patience));

  TuneResult result;
  result.trials.resize(static_cast<std::size_t>(trials));
  Rng base(seed);
  parallel_for(static_cast<std::size_t>(trials), opt.workers,
               [&](std::size_t t) {
                 Rng trial_rng = base.fork(1000 + t);
                 GnnModel model(genotype, configs[t], g.feat_dim,
                                g.num_classes, trial_rng);
                 const TrainResult tr =
                     train_model(model, g, trial_rng.next_u64());
                 result.trials[t] = TuneTrial{configs[t], tr.best_val_metric};
               });

  std::size_t best = 0;
  for (std::size_t t = 1; t < result.trials.size(); ++t)
    if (result.trials[t].val_metric > result.trials[best].val_metric) best = t;
  result.best = result.trials[best].hp;

  std::vector<double> test_values(static_cast<std::size_t>(opt.repeats));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(opt.repeats));
  parallel_for(static_cast<std::size_t>(opt.repeats), opt.workers,
               [&](std::size_t r) {
                 Rng repeat_rng = base.fork(2000 + r);
                 seeds[r] = repeat_rng.seed();
                 GnnModel model(genotype, result.best, g.feat_dim,
                                g.num_classes, repeat_rng);
                 train_model(model, g, repeat_rng.next_u64());
                 test_values[r] = evaluate(model, g, Split::kTest);
               });
  result.report = EvalReport::from_values(metric_name(g),
                                          std::move(test_values),
                                          std::move(seeds));
  return result;
}

}  // namespace sane
