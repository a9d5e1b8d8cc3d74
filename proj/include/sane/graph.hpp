#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sane/common.hpp"
#include "sane/rng.hpp"
#include "sane/tensor.hpp"

namespace sane {

/// Immutable graph over the self-loop-augmented edge set. CSR rows are
/// sorted ascending and deduplicated; every node carries a self-loop.
class Graph {
 public:
  std::size_t num_nodes = 0;
  std::size_t feat_dim = 0;
  std::size_t num_classes = 0;
  bool multi_label = false;

  std::vector<std::size_t> csr_offsets;  // length N+1
  std::vector<std::size_t> csr_targets;  // neighbors incl. self, sorted

  // Flattened edge view for aggregation: edge e carries h[edge_src[e]]
  // into segment edge_seg[e]; edge_seg is ascending by construction.
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_seg;
  // Same view with self-loops removed (GIN's neighbor sum).
  std::vector<std::size_t> edge_src_noself;
  std::vector<std::size_t> edge_seg_noself;

  Tensor features;                      // [N x F], constant
  std::vector<std::int64_t> labels;     // single-label mode
  std::vector<double> label_matrix;     // [N x C], multi-label mode
  std::vector<std::size_t> degrees;     // CSR row lengths, >= 1
  Tensor gcn_coeff;                     // (deg(v) deg(u))^{-1/2} per edge

  // Undirected edge count after dedup, before self-loops; raw line count
  // as read from the bundle (the loader reports both).
  std::size_t undirected_edges = 0;
  std::size_t raw_edge_lines = 0;

  const std::vector<std::uint8_t>& train_mask() const { return train_mask_; }
  const std::vector<std::uint8_t>& val_mask() const { return val_mask_; }

  // Reading the test mask trips the hygiene audit; training and tuning
  // code must leave it untouched until final evaluation.
  const std::vector<std::uint8_t>& test_mask() const {
    test_accessed_->store(true);
    return test_mask_;
  }
  bool test_mask_accessed() const { return test_accessed_->load(); }
  void reset_test_audit() const { test_accessed_->store(false); }

  void set_masks(std::vector<std::uint8_t> train, std::vector<std::uint8_t> val,
                 std::vector<std::uint8_t> test) {
    SANE_REQUIRE(train.size() == num_nodes && val.size() == num_nodes &&
                     test.size() == num_nodes,
                 "set_masks: mask length mismatch");
    for (std::size_t i = 0; i < num_nodes; ++i) {
      const int hits = (train[i] ? 1 : 0) + (val[i] ? 1 : 0) + (test[i] ? 1 : 0);
      SANE_REQUIRE(hits <= 1, "set_masks: node ", i,
                   " assigned to multiple splits");
    }
    train_mask_ = std::move(train);
    val_mask_ = std::move(val);
    test_mask_ = std::move(test);
  }

  bool has_masks() const {
    auto any = [](const std::vector<std::uint8_t>& m) {
      for (auto b : m)
        if (b) return true;
      return false;
    };
    return any(train_mask_) && any(val_mask_);
  }

  // Builds CSR, self-loops, degrees and the GCN coefficients from a
  // deduplicated undirected edge list.
  static Graph build(std::size_t num_nodes, std::size_t feat_dim,
                     std::size_t num_classes, bool multi_label,
                     const std::set<std::pair<std::size_t, std::size_t>>& edges,
                     std::vector<double> feature_values) {
    Graph g;
    g.num_nodes = num_nodes;
    g.feat_dim = feat_dim;
    g.num_classes = num_classes;
    g.multi_label = multi_label;
    g.undirected_edges = edges.size();
    SANE_REQUIRE(feature_values.size() == num_nodes * feat_dim,
                 "Graph::build: feature buffer size mismatch");
    g.features = Tensor::from({num_nodes, feat_dim}, std::move(feature_values));

    std::vector<std::set<std::size_t>> adj(num_nodes);
    for (const auto& [u, v] : edges) {
      SANE_REQUIRE(u < num_nodes && v < num_nodes,
                   "Graph::build: edge endpoint out of range");
      adj[u].insert(v);
      adj[v].insert(u);
    }
    for (std::size_t v = 0; v < num_nodes; ++v) adj[v].insert(v);

    g.csr_offsets.assign(num_nodes + 1, 0);
    for (std::size_t v = 0; v < num_nodes; ++v)
      g.csr_offsets[v + 1] = g.csr_offsets[v] + adj[v].size();
    g.csr_targets.reserve(g.csr_offsets.back());
    g.degrees.resize(num_nodes);
    for (std::size_t v = 0; v < num_nodes; ++v) {
      g.degrees[v] = adj[v].size();
      for (std::size_t u : adj[v]) {
        g.csr_targets.push_back(u);
        g.edge_src.push_back(u);
        g.edge_seg.push_back(v);
        if (u != v) {
          g.edge_src_noself.push_back(u);
          g.edge_seg_noself.push_back(v);
        }
      }
    }

    const std::size_t num_edges = g.edge_src.size();
    std::vector<double> coeff(num_edges);
    for (std::size_t e = 0; e < num_edges; ++e) {
      const double dv = static_cast<double>(g.degrees[g.edge_seg[e]]);
      const double du = static_cast<double>(g.degrees[g.edge_src[e]]);
      coeff[e] = 1.0 / std::sqrt(dv * du);
    }
    g.gcn_coeff = Tensor::from({num_edges}, std::move(coeff));

    g.train_mask_.assign(num_nodes, 0);
    g.val_mask_.assign(num_nodes, 0);
    g.test_mask_.assign(num_nodes, 0);
    return g;
  }

  std::uint64_t content_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t x) {
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xff;
        h *= 1099511628211ULL;
      }
    };
    mix(num_nodes);
    mix(num_classes);
    for (auto v : csr_targets) mix(v);
    for (auto v : csr_offsets) mix(v);
    for (double x : features.values()) mix(std::bit_cast<std::uint64_t>(x));
    for (auto l : labels) mix(static_cast<std::uint64_t>(l));
    for (double x : label_matrix) mix(std::bit_cast<std::uint64_t>(x));
    auto mix_mask = [&](const std::vector<std::uint8_t>& m) {
      for (auto b : m) mix(b);
    };
    mix_mask(train_mask_);
    mix_mask(val_mask_);
    mix_mask(test_mask_);
    return h;
  }

 private:
  std::vector<std::uint8_t> train_mask_, val_mask_, test_mask_;
  std::shared_ptr<std::atomic<bool>> test_accessed_ =
      std::make_shared<std::atomic<bool>>(false);

  friend Graph load_bundle(const std::filesystem::path&);
  friend void save_bundle(const Graph&, const std::filesystem::path&);
};

// The per-edge GCN normalization (deg(v) deg(u))^{-1/2}, cached at build.
inline const Tensor& degree_invsqrt_pairs(const Graph& g) {
  return g.gcn_coeff;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t' || ch == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::size_t parse_index(const std::string& s, const char* file) {
  try {
    return static_cast<std::size_t>(std::stoull(s));
  } catch (...) {
    fail(file, ": cannot parse index '", s, "'");
  }
}

}  // namespace detail

/// Loads a GraphBundle directory: meta.json, edges.tsv, features.bin,
/// labels.tsv, masks.tsv. Undirected edges are symmetrized, deduplicated
/// and self-loop-augmented.
inline Graph load_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const char* name :
       {"meta.json", "edges.tsv", "features.bin", "labels.tsv", "masks.tsv"}) {
    SANE_REQUIRE(fs::exists(dir / name), "load_bundle: missing file ",
                 (dir / name).string());
  }

  nlohmann::json meta;
  {
    std::ifstream in(dir / "meta.json");
    try {
      in >> meta;
    } catch (const std::exception& e) {
      detail::fail("meta.json: parse error: ", e.what());
    }
  }
  for (const char* key : {"num_nodes", "feat_dim", "num_classes", "multi_label"})
    SANE_REQUIRE(meta.contains(key), "meta.json: missing key '", key, "'");
  const auto num_nodes = meta["num_nodes"].get<std::size_t>();
  const auto feat_dim = meta["feat_dim"].get<std::size_t>();
  const auto num_classes = meta["num_classes"].get<std::size_t>();
  const bool multi_label = meta["multi_label"].get<bool>();

  std::set<std::pair<std::size_t, std::size_t>> edges;
  std::size_t raw_lines = 0;
  {
    std::ifstream in(dir / "edges.tsv");
    std::string line;
    while (std::getline(in, line)) {
      const auto fields = detail::split_fields(line);
      if (fields.empty()) continue;
      SANE_REQUIRE(fields.size() == 2, "edges.tsv: expected 'src\\tdst', got '",
                   line, "'");
      const std::size_t u = detail::parse_index(fields[0], "edges.tsv");
      const std::size_t v = detail::parse_index(fields[1], "edges.tsv");
      SANE_REQUIRE(u < num_nodes && v < num_nodes, "edges.tsv: node index ",
                   std::max(u, v), " out of range [0,", num_nodes, ")");
      ++raw_lines;
      if (u == v) continue;  // self-loops are implicit, never stored
      edges.insert({std::min(u, v), std::max(u, v)});
    }
  }

  std::vector<double> features(num_nodes * feat_dim);
  {
    std::ifstream in(dir / "features.bin", std::ios::binary);
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    SANE_REQUIRE(bytes == 4 * num_nodes * feat_dim,
                 "features.bin: byte length ", bytes, " != expected ",
                 4 * num_nodes * feat_dim);
    in.seekg(0);
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(bytes));
    for (std::size_t i = 0; i < num_nodes * feat_dim; ++i) {
      std::uint32_t u = static_cast<std::uint32_t>(buf[4 * i]) |
                        (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                        (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                        (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
      features[i] = static_cast<double>(std::bit_cast<float>(u));
    }
  }

  Graph g = Graph::build(num_nodes, feat_dim, num_classes, multi_label, edges,
                         std::move(features));
  g.raw_edge_lines = raw_lines;

  {
    std::ifstream in(dir / "labels.tsv");
    std::string line;
    std::size_t row = 0;
    if (multi_label) g.label_matrix.assign(num_nodes * num_classes, 0.0);
    while (std::getline(in, line)) {
      const auto fields = detail::split_fields(line);
      if (fields.empty()) continue;
      SANE_REQUIRE(row < num_nodes, "labels.tsv: more than ", num_nodes,
                   " label rows");
      if (multi_label) {
        SANE_REQUIRE(fields.size() == num_classes, "labels.tsv: row ", row,
                     " has ", fields.size(), " fields, expected ", num_classes);
        for (std::size_t c = 0; c < num_classes; ++c)
          g.label_matrix[row * num_classes + c] =
              detail::parse_index(fields[c], "labels.tsv") ? 1.0 : 0.0;
      } else {
        SANE_REQUIRE(fields.size() == 1, "labels.tsv: row ", row,
                     " expects one label");
        const auto lab = detail::parse_index(fields[0], "labels.tsv");
        SANE_REQUIRE(lab < num_classes, "labels.tsv: label ", lab,
                     " out of range [0,", num_classes, ") at row ", row);
        g.labels.push_back(static_cast<std::int64_t>(lab));
      }
      ++row;
    }
    SANE_REQUIRE(row == num_nodes, "labels.tsv: ", row, " rows for ",
                 num_nodes, " nodes");
  }

  {
    std::ifstream in(dir / "masks.tsv");
    std::string line;
    while (std::getline(in, line)) {
      const auto fields = detail::split_fields(line);
      if (fields.empty()) continue;
      SANE_REQUIRE(fields.size() == 2,
                   "masks.tsv: expected 'node_id\\t{train|val|test}', got '",
                   line, "'");
      const std::size_t id = detail::parse_index(fields[0], "masks.tsv");
      SANE_REQUIRE(id < num_nodes, "masks.tsv: node index ", id,
                   " out of range [0,", num_nodes, ")");
      if (fields[1] == "train")
        g.train_mask_[id] = 1;
      else if (fields[1] == "val")
        g.val_mask_[id] = 1;
      else if (fields[1] == "test")
        g.test_mask_[id] = 1;
      else
        detail::fail("masks.tsv: unknown split '", fields[1], "' for node ", id);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) {
      const int hits = (g.train_mask_[i] ? 1 : 0) + (g.val_mask_[i] ? 1 : 0) +
                       (g.test_mask_[i] ? 1 : 0);
      SANE_REQUIRE(hits <= 1, "masks.tsv: node ", i,
                   " assigned to multiple splits");
    }
  }
  return g;
}

/// Writes a Graph back out as a bundle. Self-loops are stripped and each
/// undirected edge is listed once; features are stored as 32-bit floats.
inline void save_bundle(const Graph& g, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    nlohmann::ordered_json meta;
    meta["num_nodes"] = g.num_nodes;
    meta["feat_dim"] = g.feat_dim;
    meta["num_classes"] = g.num_classes;
    meta["multi_label"] = g.multi_label;
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      for (std::size_t e = g.csr_offsets[v]; e < g.csr_offsets[v + 1]; ++e) {
        const std::size_t u = g.csr_targets[e];
        if (v < u) out << v << '\t' << u << '\n';
      }
    }
  }
  {
    std::ofstream out(dir / "features.bin", std::ios::binary);
    for (double x : g.features.values()) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(x));
      const unsigned char bytes[4] = {
          static_cast<unsigned char>(u & 0xff),
          static_cast<unsigned char>((u >> 8) & 0xff),
          static_cast<unsigned char>((u >> 16) & 0xff),
          static_cast<unsigned char>((u >> 24) & 0xff)};
      out.write(reinterpret_cast<const char*>(bytes), 4);
    }
  }
  {
    std::ofstream out(dir / "labels.tsv");
    if (g.multi_label) {
      for (std::size_t i = 0; i < g.num_nodes; ++i) {
        for (std::size_t c = 0; c < g.num_classes; ++c) {
          if (c) out << '\t';
          out << (g.label_matrix[i * g.num_classes + c] != 0.0 ? 1 : 0);
        }
        out << '\n';
      }
    } else {
      for (auto l : g.labels) out << l << '\n';
    }
  }
  {
    std::ofstream out(dir / "masks.tsv");
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      if (g.train_mask_[i]) out << i << "\ttrain\n";
      else if (g.val_mask_[i]) out << i << "\tval\n";
      else if (g.test_mask_[i]) out << i << "\ttest\n";
    }
  }
}

/// Seeded shuffle then contiguous assignment into train/val/test.
inline Graph make_splits(const Graph& g, std::array<double, 3> fractions,
                         std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  SANE_REQUIRE(std::abs(sum - 1.0) <= 1e-9,
               "make_splits: fractions sum to ", sum, ", expected 1");
  std::vector<std::size_t> order(g.num_nodes);
  for (std::size_t i = 0; i < g.num_nodes; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n = static_cast<double>(g.num_nodes);
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * n));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * n));
  SANE_REQUIRE(n_train + n_val <= g.num_nodes,
               "make_splits: rounded split sizes exceed node count");
  Graph out = g;
  std::vector<std::uint8_t> train(g.num_nodes, 0), val(g.num_nodes, 0),
      test(g.num_nodes, 0);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    if (i < n_train) train[order[i]] = 1;
    else if (i < n_train + n_val) val[order[i]] = 1;
    else test[order[i]] = 1;
  }
  out.set_masks(std::move(train), std::move(val), std::move(test));
  return out;
}

/// Planted-community graph: round-robin classes, intra-class edge
/// probability p_in, inter-class p_out, features = class mean + noise.
inline Graph synth_planted(std::size_t num_nodes, std::size_t num_classes,
                           std::size_t feat_dim, double p_in, double p_out,
                           std::uint64_t seed) {
  SANE_REQUIRE(p_in > 0.0 && p_in < 1.0, "synth_planted: p_in=", p_in,
               " outside (0,1)");
  SANE_REQUIRE(p_out >= 0.0 && p_out < 1.0, "synth_planted: p_out=", p_out,
               " outside [0,1)");
  SANE_REQUIRE(p_in > p_out, "synth_planted: p_in=", p_in,
               " must exceed p_out=", p_out);
  SANE_REQUIRE(num_classes >= 1 && num_nodes >= 1 && feat_dim >= 1,
               "synth_planted: empty dimensions");
  Rng rng(seed);

  std::vector<std::vector<double>> means(num_classes,
                                         std::vector<double>(feat_dim));
  for (auto& mean : means) {
    double norm = 0.0;
    for (auto& x : mean) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : mean) x /= norm > 0 ? norm : 1.0;
  }

  std::vector<double> features(num_nodes * feat_dim);
  std::vector<std::int64_t> labels(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const std::size_t c = i % num_classes;
    labels[i] = static_cast<std::int64_t>(c);
    for (std::size_t j = 0; j < feat_dim; ++j) {
      // rounded through float so bundle round-trips are exact
      features[i * feat_dim + j] = static_cast<double>(
          static_cast<float>(means[c][j] + rng.normal(0.0, 0.5)));
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t u = 0; u < num_nodes; ++u) {
    for (std::size_t v = u + 1; v < num_nodes; ++v) {
      const double p = labels[u] == labels[v] ? p_in : p_out;
      if (rng.bernoulli(p)) edges.insert({u, v});
    }
  }

  Graph g = Graph::build(num_nodes, feat_dim, num_classes, false, edges,
                         std::move(features));
  g.labels = std::move(labels);
  return g;
}

}  // namespace sane
