#pragma once

#include <string>
#include <vector>

#include "sane/aggregators.hpp"
#include "sane/common.hpp"
#include "sane/graph.hpp"
#include "sane/ops.hpp"
#include "sane/tensor.hpp"

namespace sane {

/// Continuous architecture variables: one vector per node-aggregation
/// edge, one per skip edge, one for the layer aggregator.
struct ArchParams {
  std::vector<Tensor> alpha_node;  // K x [11]
  std::vector<Tensor> alpha_skip;  // K x [2]
  Tensor alpha_layer;              // [3]

  static ArchParams init(int k_layers, Rng& rng, double stddev = 1e-3) {
    SANE_REQUIRE(k_layers >= 1, "ArchParams: K must be >= 1");
    ArchParams a;
    for (int l = 0; l < k_layers; ++l) {
      a.alpha_node.push_back(Tensor::randn(
          {static_cast<std::size_t>(kNumNodeAggs)}, rng, stddev, true));
      a.alpha_skip.push_back(Tensor::randn(
          {static_cast<std::size_t>(kNumSkips)}, rng, stddev, true));
    }
    a.alpha_layer = Tensor::randn({static_cast<std::size_t>(kNumLayerAggs)},
                                  rng, stddev, true);
    return a;
  }

  int k() const { return static_cast<int>(alpha_node.size()); }

  std::vector<Tensor> all() const {
    std::vector<Tensor> ts;
    for (const auto& t : alpha_node) ts.push_back(t);
    for (const auto& t : alpha_skip) ts.push_back(t);
    ts.push_back(alpha_layer);
    return ts;
  }

  void collect(NamedTensors& out) const {
    for (std::size_t l = 0; l < alpha_node.size(); ++l)
      out.emplace_back("alpha.node" + std::to_string(l), alpha_node[l]);
    for (std::size_t l = 0; l < alpha_skip.size(); ++l)
      out.emplace_back("alpha.skip" + std::to_string(l), alpha_skip[l]);
    out.emplace_back("alpha.layer", alpha_layer);
  }
};

/// Softmax mixing weights of each alpha vector, as plain values (no tape).
struct MixWeights {
  std::vector<std::vector<double>> node;
  std::vector<std::vector<double>> skip;
  std::vector<double> layer;
};

namespace detail {

inline std::vector<double> softmax_values(const Tensor& alpha) {
  std::vector<double> w(alpha.size());
  double mx = alpha.data()[0];
  for (std::size_t i = 1; i < alpha.size(); ++i)
    mx = std::max(mx, alpha.data()[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    w[i] = std::exp(alpha.data()[i] - mx);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

}  // namespace detail

inline MixWeights softmax_weights(const ArchParams& a) {
  MixWeights mw;
  for (const auto& t : a.alpha_node)
    mw.node.push_back(detail::softmax_values(t));
  for (const auto& t : a.alpha_skip)
    mw.skip.push_back(detail::softmax_values(t));
  mw.layer = detail::softmax_values(a.alpha_layer);
  return mw;
}

/// Softmax-weighted sum of candidate operation outputs.
inline Tensor mixed_op(const Tensor& alpha, const std::vector<Tensor>& outputs) {
  SANE_REQUIRE(alpha.size() == outputs.size(), "mixed_op: ", alpha.size(),
               " weights for ", outputs.size(), " operations");
  SANE_REQUIRE(!outputs.empty(), "mixed_op: no operations");
  for (const Tensor& o : outputs)
    SANE_REQUIRE(o.shape() == outputs[0].shape(),
                 "mixed_op: operation output shapes differ: ",
                 shape_str(o.shape()), " vs ", shape_str(outputs[0].shape()));
  const Tensor w = softmax(alpha, 0);
  Tensor acc;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    Tensor term = mul(outputs[i], element(w, i));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

/// Per-edge operation masks for epsilon random explore; -1 keeps the full
/// mixture, otherwise the indexed op runs alone with weight 1.
struct OpMasks {
  std::vector<int> node;
  std::vector<int> skip;
  int layer = -1;
};

inline OpMasks sample_op_masks(int k_layers, double epsilon, Rng& rng) {
  SANE_REQUIRE(epsilon >= 0.0 && epsilon <= 1.0,
               "sample_op_masks: epsilon=", epsilon, " outside [0,1]");
  OpMasks m;
  auto draw = [&](int num_ops) {
    if (epsilon > 0.0 && rng.bernoulli(epsilon))
      return static_cast<int>(rng.below(static_cast<std::uint64_t>(num_ops)));
    return -1;
  };
  for (int l = 0; l < k_layers; ++l) {
    m.node.push_back(draw(kNumNodeAggs));
    m.skip.push_back(draw(kNumSkips));
  }
  m.layer = draw(kNumLayerAggs);
  return m;
}

struct SuperNetConfig {
  int k_layers = 3;
  int hidden = 32;
  int heads = 2;
  double dropout = 0.6;
  AggOptions agg;
};

/// The relaxed search space: every candidate operation instantiated on
/// every edge, evaluated as softmax mixtures. Layer-aggregator branches
/// differ in width, so each branch carries its own linear projection back
/// to the hidden width before mixing.
class SuperNet {
 public:
  SuperNet(std::size_t in_dim, std::size_t num_classes, SuperNetConfig cfg,
           Rng& rng)
      : cfg_(cfg), in_dim_(in_dim), num_classes_(num_classes) {
    const auto d = static_cast<std::size_t>(cfg_.hidden);
    const auto k = static_cast<std::size_t>(cfg_.k_layers);
    SANE_REQUIRE(cfg_.k_layers >= 1, "SuperNet: K must be >= 1");
    input_w_ = Tensor::glorot(in_dim, d, rng);
    input_b_ = Tensor::zeros({d}, true);
    for (std::size_t l = 0; l < k; ++l) {
      Layer layer;
      for (int op = 0; op < kNumNodeAggs; ++op)
        layer.aggs.push_back(NodeAggParams::make(static_cast<NodeAggKind>(op),
                                                 d, cfg_.heads, rng));
      layer.shared_w = Tensor::glorot(d, d, rng);
      layers_.push_back(std::move(layer));
    }
    layer_agg_ = LayerAggParams::make(d, rng);
    proj_concat_ = Tensor::glorot(k * d, d, rng);
    proj_max_ = Tensor::glorot(d, d, rng);
    proj_lstm_ = Tensor::glorot(d, d, rng);
    cls_w_ = Tensor::glorot(d, num_classes, rng);
    cls_b_ = Tensor::zeros({num_classes}, true);
  }

  const SuperNetConfig& config() const { return cfg_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t num_classes() const { return num_classes_; }

  // Eq-style forward: mixed node aggregation, shared transform, elu and
  // dropout per layer; skip mixtures feed the layer-aggregator mixture.
  Tensor forward(const Graph& g, const ArchParams& arch, bool training,
                 Rng& rng, const OpMasks* masks = nullptr) const {
    SANE_REQUIRE(g.feat_dim == in_dim_, "SuperNet::forward: graph feature dim ",
                 g.feat_dim, " != supernet input dim ", in_dim_);
    SANE_REQUIRE(arch.k() == cfg_.k_layers,
                 "SuperNet::forward: arch has ", arch.k(), " layers, net has ",
                 cfg_.k_layers);
    Tensor h = add(matmul(g.features, input_w_), input_b_);
    std::vector<Tensor> skipped;
    for (int l = 0; l < cfg_.k_layers; ++l) {
      const Layer& layer = layers_[static_cast<std::size_t>(l)];
      const int node_mask = masks ? masks->node[static_cast<std::size_t>(l)] : -1;
      Tensor mixed;
      if (node_mask >= 0) {
        mixed = node_aggregate(layer.aggs[static_cast<std::size_t>(node_mask)],
                               h, g, cfg_.agg);
      } else {
        std::vector<Tensor> outs;
        outs.reserve(kNumNodeAggs);
        for (const auto& p : layer.aggs)
          outs.push_back(node_aggregate(p, h, g, cfg_.agg));
        mixed = mixed_op(arch.alpha_node[static_cast<std::size_t>(l)], outs);
      }
      h = elu(matmul(mixed, layer.shared_w));
      if (training && cfg_.dropout > 0.0)
        h = dropout(h, cfg_.dropout, rng, true);
      const int skip_mask = masks ? masks->skip[static_cast<std::size_t>(l)] : -1;
      if (skip_mask >= 0) {
        skipped.push_back(
            skip_apply(static_cast<SkipKind>(skip_mask), h));
      } else {
        // ZERO contributes nothing, so the mixture is just w_identity * h
        const Tensor ws = softmax(arch.alpha_skip[static_cast<std::size_t>(l)], 0);
        skipped.push_back(mul(h, element(ws, 0)));
      }
    }
    const int layer_mask = masks ? masks->layer : -1;
    Tensor z;
    if (layer_mask >= 0) {
      z = branch(static_cast<LayerAggKind>(layer_mask), skipped);
    } else {
      std::vector<Tensor> branches;
      for (int i = 0; i < kNumLayerAggs; ++i)
        branches.push_back(branch(static_cast<LayerAggKind>(i), skipped));
      z = mixed_op(arch.alpha_layer, branches);
    }
    return add(matmul(z, cls_w_), cls_b_);
  }

  NamedTensors named_params() const {
    NamedTensors out;
    out.emplace_back("input.w", input_w_);
    out.emplace_back("input.b", input_b_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l);
      for (const auto& p : layers_[l].aggs)
        p.collect(out, prefix + "." + to_string(p.kind));
      out.emplace_back(prefix + ".shared_w", layers_[l].shared_w);
    }
    layer_agg_.collect(out, "layeragg.lstm");
    out.emplace_back("layeragg.proj_concat", proj_concat_);
    out.emplace_back("layeragg.proj_max", proj_max_);
    out.emplace_back("layeragg.proj_lstm", proj_lstm_);
    out.emplace_back("classifier.w", cls_w_);
    out.emplace_back("classifier.b", cls_b_);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> ts;
    for (auto& [name, t] : named_params()) ts.push_back(t);
    return ts;
  }

  const NodeAggParams& node_agg_params(int layer, NodeAggKind kind) const {
    return layers_[static_cast<std::size_t>(layer)]
        .aggs[static_cast<std::size_t>(kind)];
  }
  const Tensor& shared_w(int layer) const {
    return layers_[static_cast<std::size_t>(layer)].shared_w;
  }
  const LayerAggParams& layer_agg_params() const { return layer_agg_; }
  const Tensor& input_w() const { return input_w_; }
  const Tensor& input_b() const { return input_b_; }
  const Tensor& classifier_w() const { return cls_w_; }
  const Tensor& classifier_b() const { return cls_b_; }
  const Tensor& branch_projection(LayerAggKind kind) const {
    switch (kind) {
      case LayerAggKind::kConcat: return proj_concat_;
      case LayerAggKind::kMax: return proj_max_;
      case LayerAggKind::kLstm: return proj_lstm_;
    }
    detail::fail("branch_projection: unknown kind");
  }

 private:
  struct Layer {
    std::vector<NodeAggParams> aggs;
    Tensor shared_w;
  };

  Tensor branch(LayerAggKind kind, const std::vector<Tensor>& skipped) const {
    const Tensor agg = layer_aggregate(kind, layer_agg_, skipped);
    return matmul(agg, branch_projection(kind));
  }

  SuperNetConfig cfg_;
  std::size_t in_dim_, num_classes_;
  Tensor input_w_, input_b_;
  std::vector<Layer> layers_;
  LayerAggParams layer_agg_;
  Tensor proj_concat_, proj_max_, proj_lstm_;
  Tensor cls_w_, cls_b_;
};

}  // namespace sane
