#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "sane/aggregators.hpp"
#include "sane/common.hpp"
#include "sane/genotype.hpp"
#include "sane/graph.hpp"
#include "sane/ops.hpp"
#include "sane/tensor.hpp"

namespace sane {

enum class Activation { kRelu, kElu, kTanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kElu: return "elu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "elu") return Activation::kElu;
  if (name == "tanh") return Activation::kTanh;
  detail::fail("unknown activation '", name, "'; legal names: relu, elu, tanh");
}

inline Tensor apply_activation(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kElu: return elu(x);
    case Activation::kTanh: return tanh_act(x);
  }
  detail::fail("apply_activation: unknown activation");
}

struct HyperParams {
  int heads = 2;
  int hidden = 32;
  double lr = 0.005;
  double l2 = 5e-4;
  Activation activation = Activation::kRelu;
  double dropout = 0.5;
  int epochs = 600;
  int patience = 30;

  // Tuning-domain check; build_model itself accepts any positive sizes.
  void validate() const {
    auto one_of = [](int x, std::initializer_list<int> xs) {
      for (int v : xs)
        if (v == x) return true;
      return false;
    };
    SANE_REQUIRE(one_of(heads, {1, 2, 4, 8}), "hyperparams: heads=", heads,
                 " outside {1,2,4,8}");
    SANE_REQUIRE(one_of(hidden, {16, 32, 64, 128, 256, 512}),
                 "hyperparams: hidden=", hidden,
                 " outside {16,32,64,128,256,512}");
    SANE_REQUIRE(lr > 0.0, "hyperparams: lr must be positive");
    SANE_REQUIRE(l2 >= 0.0, "hyperparams: l2 must be nonnegative");
    SANE_REQUIRE(dropout >= 0.0 && dropout < 1.0,
                 "hyperparams: dropout outside [0,1)");
    SANE_REQUIRE(epochs >= 1 && patience >= 1,
                 "hyperparams: epochs/patience must be >= 1");
  }
};

/// A discrete architecture instantiated as a trainable model: K fixed
/// aggregator layers, fixed skips, one layer aggregator, linear classifier.
/// Layers whose skip is ZERO are excluded from the layer aggregator input;
/// an all-ZERO genotype falls back to the last layer's output alone.
class GnnModel {
 public:
  GnnModel(Genotype genotype, const HyperParams& hp, std::size_t in_dim,
           std::size_t num_classes, Rng& rng)
      : genotype_(std::move(genotype)),
        hp_(hp),
        in_dim_(in_dim),
        num_classes_(num_classes) {
    SANE_REQUIRE(!genotype_.node_ops.empty(), "build_model: empty genotype");
    SANE_REQUIRE(genotype_.node_ops.size() == genotype_.skip_ops.size(),
                 "build_model: node/skip length mismatch");
    const auto d = static_cast<std::size_t>(hp_.hidden);
    input_w_ = Tensor::glorot(in_dim, d, rng);
    input_b_ = Tensor::zeros({d}, true);
    for (auto kind : genotype_.node_ops) {
      agg_params_.push_back(NodeAggParams::make(kind, d, hp_.heads, rng));
      shared_w_.push_back(Tensor::glorot(d, d, rng));
    }
    for (std::size_t l = 0; l < genotype_.skip_ops.size(); ++l)
      if (genotype_.skip_ops[l] == SkipKind::kIdentity)
        active_layers_.push_back(l);
    if (active_layers_.empty()) {
      // legitimately derivable corner: use only the last layer
      all_zero_fallback_ = true;
      active_layers_.push_back(genotype_.skip_ops.size() - 1);
      std::cerr << "warning: genotype has all-ZERO skips; "
                   "falling back to the last layer's output\n";
    }
    if (genotype_.layer_op == LayerAggKind::kLstm)
      layer_agg_ = LayerAggParams::make(d, rng);
    const std::size_t width = genotype_.layer_op == LayerAggKind::kConcat
                                  ? active_layers_.size() * d
                                  : d;
    cls_w_ = Tensor::glorot(width, num_classes, rng);
    cls_b_ = Tensor::zeros({num_classes}, true);
  }

  // MLP-aggregator variant: every node aggregator is the same-width MLP,
  // all skips IDENTITY, CONCAT layer aggregation.
  GnnModel(int k_layers, int mlp_width, int mlp_depth, const HyperParams& hp,
           std::size_t in_dim, std::size_t num_classes, Rng& rng)
      : hp_(hp), in_dim_(in_dim), num_classes_(num_classes) {
    const auto d = static_cast<std::size_t>(hp_.hidden);
    mlp_mode_ = true;
    input_w_ = Tensor::glorot(in_dim, d, rng);
    input_b_ = Tensor::zeros({d}, true);
    for (int l = 0; l < k_layers; ++l) {
      mlp_params_.push_back(MlpAggParams::make(mlp_width, mlp_depth, d, rng));
      shared_w_.push_back(Tensor::glorot(d, d, rng));
      genotype_.node_ops.push_back(NodeAggKind::kSageSum);  // placeholder
      genotype_.skip_ops.push_back(SkipKind::kIdentity);
      active_layers_.push_back(static_cast<std::size_t>(l));
    }
    genotype_.layer_op = LayerAggKind::kConcat;
    cls_w_ = Tensor::glorot(static_cast<std::size_t>(k_layers) * d,
                            num_classes, rng);
    cls_b_ = Tensor::zeros({num_classes}, true);
  }

  Tensor forward(const Graph& g, bool training, Rng& rng) const {
    SANE_REQUIRE(g.feat_dim == in_dim_, "GnnModel::forward: feature dim ",
                 g.feat_dim, " != model input dim ", in_dim_);
    AggOptions opt;
    Tensor h = add(matmul(g.features, input_w_), input_b_);
    std::vector<Tensor> outputs;
    for (std::size_t l = 0; l < shared_w_.size(); ++l) {
      Tensor agg = mlp_mode_
                       ? mlp_node_aggregate(mlp_params_[l], h, g)
                       : node_aggregate(agg_params_[l], h, g, opt);
      h = apply_activation(hp_.activation, matmul(agg, shared_w_[l]));
      if (training && hp_.dropout > 0.0) h = dropout(h, hp_.dropout, rng, true);
      outputs.push_back(h);
    }
    std::vector<Tensor> active;
    for (std::size_t l : active_layers_) active.push_back(outputs[l]);
    const Tensor z = layer_aggregate(genotype_.layer_op, layer_agg_, active);
    return add(matmul(z, cls_w_), cls_b_);
  }

  NamedTensors named_params() const {
    NamedTensors out;
    out.emplace_back("input.w", input_w_);
    out.emplace_back("input.b", input_b_);
    for (std::size_t l = 0; l < shared_w_.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l);
      if (mlp_mode_) mlp_params_[l].collect(out, prefix + ".mlp");
      else agg_params_[l].collect(out, prefix + "." + to_string(genotype_.node_ops[l]));
      out.emplace_back(prefix + ".shared_w", shared_w_[l]);
    }
    if (genotype_.layer_op == LayerAggKind::kLstm)
      layer_agg_.collect(out, "layeragg.lstm");
    out.emplace_back("classifier.w", cls_w_);
    out.emplace_back("classifier.b", cls_b_);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> ts;
    for (auto& [name, t] : named_params()) ts.push_back(t);
    return ts;
  }

  const Genotype& genotype() const { return genotype_; }
  const HyperParams& hyperparams() const { return hp_; }
  bool all_zero_fallback() const { return all_zero_fallback_; }
  const std::vector<std::size_t>& active_layers() const {
    return active_layers_;
  }
  std::size_t num_classes() const { return num_classes_; }

  // mutable access for the parameter-copy harnesses
  Tensor& input_w() { return input_w_; }
  Tensor& input_b() { return input_b_; }
  NodeAggParams& agg_params(std::size_t l) { return agg_params_[l]; }
  Tensor& shared_w(std::size_t l) { return shared_w_[l]; }
  LayerAggParams& layer_agg_params() { return layer_agg_; }
  Tensor& classifier_w() { return cls_w_; }
  Tensor& classifier_b() { return cls_b_; }

 private:
  Genotype genotype_;
  HyperParams hp_;
  std::size_t in_dim_ = 0, num_classes_ = 0;
  bool mlp_mode_ = false;
  bool all_zero_fallback_ = false;
  Tensor input_w_, input_b_;
  std::vector<NodeAggParams> agg_params_;
  std::vector<MlpAggParams> mlp_params_;
  std::vector<Tensor> shared_w_;
  std::vector<std::size_t> active_layers_;
  LayerAggParams layer_agg_;
  Tensor cls_w_, cls_b_;
};

}  // namespace sane
