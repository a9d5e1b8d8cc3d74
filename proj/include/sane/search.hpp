#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sane/common.hpp"
#include "sane/genotype.hpp"
#include "sane/graph.hpp"
#include "sane/metrics.hpp"
#include "sane/optim.hpp"
#include "sane/supernet.hpp"
#include "sane/tensor.hpp"

namespace sane {

struct SearchConfig {
  int epochs = 200;  // T
  double lr_w = 0.005;
  double weight_decay_w = 2e-4;
  double lr_alpha = 3e-4;
  double weight_decay_alpha = 1e-3;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  int k_layers = 3;
  int hidden = 32;
  int heads = 2;
  double dropout = 0.6;

  void validate() const {
    SANE_REQUIRE(epochs >= 1, "search config: epochs T=", epochs,
                 " must be >= 1");
    SANE_REQUIRE(epsilon >= 0.0 && epsilon <= 1.0,
                 "search config: epsilon=", epsilon, " outside [0,1]");
    SANE_REQUIRE(k_layers >= 1, "search config: K=", k_layers,
                 " must be >= 1");
    SANE_REQUIRE(hidden >= 1, "search config: hidden=", hidden,
                 " must be >= 1");
  }

  SuperNetConfig supernet() const {
    SuperNetConfig c;
    c.k_layers = k_layers;
    c.hidden = hidden;
    c.heads = heads;
    c.dropout = dropout;
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

/// Discrete architecture from trained alphas: per-edge argmax over the
/// mixing weights, ties broken toward the lowest index. Only top-1
/// derivation is supported.
inline Genotype derive(const ArchParams& arch, int top_k = 1) {
  SANE_REQUIRE(top_k == 1,
               "derive: only top-1 derivation is implemented, got k=", top_k);
  auto argmax = [](const Tensor& alpha) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < alpha.size(); ++i)
      if (alpha.data()[i] > alpha.data()[best]) best = i;
    return best;
  };
  Genotype g;
  for (const auto& a : arch.alpha_node)
    g.node_ops.push_back(static_cast<NodeAggKind>(argmax(a)));
  for (const auto& a : arch.alpha_skip)
    g.skip_ops.push_back(static_cast<SkipKind>(argmax(a)));
  g.layer_op = static_cast<LayerAggKind>(argmax(arch.alpha_layer));
  return g;
}

/// Alternating first-order bi-level optimization: each epoch updates the
/// architecture on the validation loss, then the weights on the training
/// loss. With epsilon > 0, each step may replace per-edge mixtures by a
/// single uniformly sampled operation.
inline std::vector<EpochRecord> run_search(SuperNet& net, ArchParams& arch,
                                           const Graph& g,
                                           const SearchConfig& cfg) {
  cfg.validate();
  SANE_REQUIRE(g.has_masks(), "search: graph is missing train/val masks");
  Tape tape;
  TapeScope scope(tape);
  Rng rng(cfg.seed);

  const std::vector<Tensor> w_params = net.params();
  const std::vector<Tensor> a_params = arch.all();
  // zero learning rates freeze the corresponding variable group
  std::optional<Adam> opt_w, opt_a;
  if (cfg.lr_w > 0.0) opt_w.emplace(w_params, cfg.lr_w, cfg.weight_decay_w);
  if (cfg.lr_alpha > 0.0)
    opt_a.emplace(a_params, cfg.lr_alpha, cfg.weight_decay_alpha);

  auto zero_all = [&] {
    for (const Tensor& t : w_params) const_cast<Tensor&>(t).zero_grad();
    for (const Tensor& t : a_params) const_cast<Tensor&>(t).zero_grad();
  };
  auto check_finite = [&](double loss, int epoch) {
    SANE_REQUIRE(std::isfinite(loss), "search: loss is not finite at epoch ",
                 epoch);
    for (const Tensor& a : a_params)
      for (double x : a.values())
        SANE_REQUIRE(std::isfinite(x),
                     "search: alpha became non-finite at epoch ", epoch);
  };

  std::vector<EpochRecord> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;

    // (a) architecture step on the validation loss
    {
      OpMasks masks;
      const bool use_masks = cfg.epsilon > 0.0;
      if (use_masks) masks = sample_op_masks(cfg.k_layers, cfg.epsilon, rng);
      const Tensor logits =
          net.forward(g, arch, true, rng, use_masks ? &masks : nullptr);
      const Tensor loss = graph_loss(logits, g, g.val_mask());
      rec.val_loss = loss.item();
      rec.val_acc = metric_of_logits(logits, g, g.val_mask());
      zero_all();
      backward(loss);
      if (opt_a) opt_a->step();
    }

    // (b) weight step on the training loss, with the updated architecture
    {
      OpMasks masks;
      const bool use_masks = cfg.epsilon > 0.0;
      if (use_masks) masks = sample_op_masks(cfg.k_layers, cfg.epsilon, rng);
      const Tensor logits =
          net.forward(g, arch, true, rng, use_masks ? &masks : nullptr);
      const Tensor loss = graph_loss(logits, g, g.train_mask());
      rec.train_loss = loss.item();
      zero_all();
      backward(loss);
      if (opt_w) opt_w->step();
    }

    check_finite(rec.train_loss, epoch);
    history.push_back(rec);
  }
  return history;
}

}  // namespace sane
