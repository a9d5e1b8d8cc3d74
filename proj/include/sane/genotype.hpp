#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sane/aggregators.hpp"
#include "sane/common.hpp"

namespace sane {

/// One discrete architecture: a node aggregator and a skip choice per
/// layer, plus a single layer aggregator.
struct Genotype {
  std::vector<NodeAggKind> node_ops;
  std::vector<SkipKind> skip_ops;
  LayerAggKind layer_op = LayerAggKind::kConcat;

  int k() const { return static_cast<int>(node_ops.size()); }

  bool operator==(const Genotype& other) const = default;

  std::string brief() const {
    std::string s = "[";
    for (std::size_t i = 0; i < node_ops.size(); ++i) {
      if (i) s += ",";
      s += to_string(node_ops[i]);
      s += skip_ops[i] == SkipKind::kZero ? "(zero)" : "";
    }
    s += "]+";
    s += to_string(layer_op);
    return s;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["node_ops"] = nlohmann::json::array();
    for (auto op : node_ops) j["node_ops"].push_back(to_string(op));
    j["skip_ops"] = nlohmann::json::array();
    for (auto op : skip_ops) j["skip_ops"].push_back(to_string(op));
    j["layer_op"] = to_string(layer_op);
    j["K"] = k();
    return j;
  }

  static Genotype from_json(const nlohmann::json& j) {
    SANE_REQUIRE(j.contains("node_ops") && j.contains("skip_ops") &&
                     j.contains("layer_op"),
                 "genotype: missing node_ops/skip_ops/layer_op");
    Genotype g;
    for (const auto& name : j["node_ops"])
      g.node_ops.push_back(parse_node_agg(name.get<std::string>()));
    for (const auto& name : j["skip_ops"])
      g.skip_ops.push_back(parse_skip(name.get<std::string>()));
    g.layer_op = parse_layer_agg(j["layer_op"].get<std::string>());
    SANE_REQUIRE(g.node_ops.size() == g.skip_ops.size(),
                 "genotype: ", g.node_ops.size(), " node ops vs ",
                 g.skip_ops.size(), " skip ops");
    SANE_REQUIRE(!g.node_ops.empty(), "genotype: empty op lists");
    if (j.contains("K"))
      SANE_REQUIRE(j["K"].get<int>() == g.k(), "genotype: K=",
                   j["K"].get<int>(), " does not match ", g.k(), " ops");
    return g;
  }
};

inline Genotype sample_genotype(int k_layers, Rng& rng) {
  Genotype g;
  for (int l = 0; l < k_layers; ++l) {
    g.node_ops.push_back(static_cast<NodeAggKind>(rng.below(kNumNodeAggs)));
    g.skip_ops.push_back(static_cast<SkipKind>(rng.below(kNumSkips)));
  }
  g.layer_op = static_cast<LayerAggKind>(rng.below(kNumLayerAggs));
  return g;
}

/// |O_n|^K * |O_s|^K * |O_l| discrete architectures.
inline std::uint64_t enumerate_space_size(int k_layers) {
  SANE_REQUIRE(k_layers >= 1, "enumerate_space_size: K=", k_layers,
               " must be >= 1");
  SANE_REQUIRE(k_layers <= 13, "enumerate_space_size: K=", k_layers,
               " overflows 64 bits");
  std::uint64_t n = 3;
  for (int l = 0; l < k_layers; ++l) n *= 22;  // 11 node ops x 2 skips
  return n;
}

}  // namespace sane
