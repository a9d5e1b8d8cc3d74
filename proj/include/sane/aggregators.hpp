#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sane/common.hpp"
#include "sane/graph.hpp"
#include "sane/ops.hpp"
#include "sane/tensor.hpp"

namespace sane {

// Index positions are fixed: they define the coordinates of the
// architecture vectors, and genotype files serialize the names below.
enum class NodeAggKind {
  kSageSum,
  kSageMean,
  kSageMax,
  kGcn,
  kGat,
  kGatSym,
  kGatCos,
  kGatLinear,
  kGatGenLinear,
  kGin,
  kGeniePath,
};
inline constexpr int kNumNodeAggs = 11;

enum class LayerAggKind { kConcat, kMax, kLstm };
inline constexpr int kNumLayerAggs = 3;

enum class SkipKind { kIdentity, kZero };
inline constexpr int kNumSkips = 2;

inline const char* to_string(NodeAggKind k) {
  switch (k) {
    case NodeAggKind::kSageSum: return "SAGE-SUM";
    case NodeAggKind::kSageMean: return "SAGE-MEAN";
    case NodeAggKind::kSageMax: return "SAGE-MAX";
    case NodeAggKind::kGcn: return "GCN";
    case NodeAggKind::kGat: return "GAT";
    case NodeAggKind::kGatSym: return "GAT-SYM";
    case NodeAggKind::kGatCos: return "GAT-COS";
    case NodeAggKind::kGatLinear: return "GAT-LINEAR";
    case NodeAggKind::kGatGenLinear: return "GAT-GEN-LINEAR";
    case NodeAggKind::kGin: return "GIN";
    case NodeAggKind::kGeniePath: return "GeniePath";
  }
  return "?";
}

inline const char* to_string(LayerAggKind k) {
  switch (k) {
    case LayerAggKind::kConcat: return "CONCAT";
    case LayerAggKind::kMax: return "MAX";
    case LayerAggKind::kLstm: return "LSTM";
  }
  return "?";
}

inline const char* to_string(SkipKind k) {
  return k == SkipKind::kIdentity ? "IDENTITY" : "ZERO";
}

inline std::string legal_node_agg_names() {
  std::string s;
  for (int i = 0; i < kNumNodeAggs; ++i) {
    if (i) s += ", ";
    s += to_string(static_cast<NodeAggKind>(i));
  }
  return s;
}

inline NodeAggKind parse_node_agg(const std::string& name) {
  for (int i = 0; i < kNumNodeAggs; ++i) {
    const auto k = static_cast<NodeAggKind>(i);
    if (name == to_string(k)) return k;
  }
  detail::fail("unknown node aggregator '", name, "'; legal names: ",
               legal_node_agg_names());
}

inline LayerAggKind parse_layer_agg(const std::string& name) {
  for (int i = 0; i < kNumLayerAggs; ++i) {
    const auto k = static_cast<LayerAggKind>(i);
    if (name == to_string(k)) return k;
  }
  detail::fail("unknown layer aggregator '", name,
               "'; legal names: CONCAT, MAX, LSTM");
}

inline SkipKind parse_skip(const std::string& name) {
  if (name == "IDENTITY") return SkipKind::kIdentity;
  if (name == "ZERO") return SkipKind::kZero;
  detail::fail("unknown skip op '", name, "'; legal names: IDENTITY, ZERO");
}

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct AggOptions {
  double leaky_slope = kDefaultLeakySlope;
  // Leaky-ReLU on GAT-COS / GAT-LINEAR scores before normalization.
  bool score_activation = true;
};

/// Learnable state for one node aggregator at one layer. Only the fields
/// the kind uses are populated; SAGE and GCN carry none.
struct NodeAggParams {
  NodeAggKind kind = NodeAggKind::kSageSum;
  int heads = 1;

  // GAT family, one entry per head.
  std::vector<Tensor> w;      // [d x d/heads] projection
  std::vector<Tensor> att_l;  // [d/heads x 1], score term for the source
  std::vector<Tensor> att_r;  // [d/heads x 1], score term for the target
  std::vector<Tensor> gen;    // [d/heads x 1], GAT-GEN-LINEAR only

  // GIN: two-layer MLP plus learnable epsilon.
  Tensor gin_w1, gin_b1, gin_w2, gin_b2, gin_eps;

  // GeniePath: full-width attention plus LSTM-style gates on [h, breadth].
  Tensor gp_w, gp_att_l, gp_att_r;
  Tensor gp_wi, gp_bi, gp_wf, gp_bf, gp_wo, gp_bo, gp_wc, gp_bc;

  static NodeAggParams make(NodeAggKind kind, std::size_t dim, int heads,
                            Rng& rng) {
    NodeAggParams p;
    p.kind = kind;
    p.heads = heads;
    switch (kind) {
      case NodeAggKind::kSageSum:
      case NodeAggKind::kSageMean:
      case NodeAggKind::kSageMax:
      case NodeAggKind::kGcn:
        break;
      case NodeAggKind::kGat:
      case NodeAggKind::kGatSym:
      case NodeAggKind::kGatCos:
      case NodeAggKind::kGatLinear:
      case NodeAggKind::kGatGenLinear: {
        SANE_REQUIRE(dim % static_cast<std::size_t>(heads) == 0,
                     "GAT aggregator: width ", dim, " not divisible by ",
                     heads, " heads");
        const std::size_t dh = dim / static_cast<std::size_t>(heads);
        for (int h = 0; h < heads; ++h) {
          p.w.push_back(Tensor::glorot(dim, dh, rng));
          if (kind == NodeAggKind::kGat || kind == NodeAggKind::kGatSym) {
            p.att_l.push_back(Tensor::glorot(dh, 1, rng));
            p.att_r.push_back(Tensor::glorot(dh, 1, rng));
          }
          if (kind == NodeAggKind::kGatGenLinear)
            p.gen.push_back(Tensor::glorot(dh, 1, rng));
        }
        break;
      }
      case NodeAggKind::kGin:
        p.gin_w1 = Tensor::glorot(dim, dim, rng);
        p.gin_b1 = Tensor::zeros({dim}, true);
        p.gin_w2 = Tensor::glorot(dim, dim, rng);
        p.gin_b2 = Tensor::zeros({dim}, true);
        p.gin_eps = Tensor::zeros({1}, true);
        break;
      case NodeAggKind::kGeniePath:
        p.gp_w = Tensor::glorot(dim, dim, rng);
        p.gp_att_l = Tensor::glorot(dim, 1, rng);
        p.gp_att_r = Tensor::glorot(dim, 1, rng);
        p.gp_wi = Tensor::glorot(2 * dim, dim, rng);
        p.gp_bi = Tensor::zeros({dim}, true);
        p.gp_wf = Tensor::glorot(2 * dim, dim, rng);
        p.gp_bf = Tensor::zeros({dim}, true);
        p.gp_wo = Tensor::glorot(2 * dim, dim, rng);
        p.gp_bo = Tensor::zeros({dim}, true);
        p.gp_wc = Tensor::glorot(2 * dim, dim, rng);
        p.gp_bc = Tensor::zeros({dim}, true);
        break;
    }
    return p;
  }

  void collect(NamedTensors& out, const std::string& prefix) const {
    auto put = [&](const std::string& name, const Tensor& t) {
      if (t.defined()) out.emplace_back(prefix + name, t);
    };
    for (std::size_t h = 0; h < w.size(); ++h) {
      const std::string hs = ".h" + std::to_string(h);
      put(hs + ".w", w[h]);
      if (h < att_l.size()) put(hs + ".att_l", att_l[h]);
      if (h < att_r.size()) put(hs + ".att_r", att_r[h]);
      if (h < gen.size()) put(hs + ".gen", gen[h]);
    }
    put(".gin_w1", gin_w1);
    put(".gin_b1", gin_b1);
    put(".gin_w2", gin_w2);
    put(".gin_b2", gin_b2);
    put(".gin_eps", gin_eps);
    put(".gp_w", gp_w);
    put(".gp_att_l", gp_att_l);
    put(".gp_att_r", gp_att_r);
    put(".gp_wi", gp_wi);
    put(".gp_bi", gp_bi);
    put(".gp_wf", gp_wf);
    put(".gp_bf", gp_bf);
    put(".gp_wo", gp_wo);
    put(".gp_bo", gp_bo);
    put(".gp_wc", gp_wc);
    put(".gp_bc", gp_bc);
  }
};

namespace detail {

// Attention weights for one head given per-edge unnormalized scores.
inline Tensor gat_head_output(const Tensor& projected, const Tensor& scores,
                              const Graph& g) {
  Tensor flat = scores.rank() == 2 ? reshape(scores, {scores.rows()}) : scores;
  Tensor att = segment_softmax(flat, g.edge_seg, g.num_nodes);
  Tensor gathered = gather_rows(projected, g.edge_src);
  return segment_reduce(SegmentKind::kSum, scale_rows(gathered, att),
                        g.edge_seg, g.num_nodes);
}

inline Tensor gat_family_scores(NodeAggKind kind, const NodeAggParams& p,
                                std::size_t head, const Tensor& projected,
                                const Graph& g, const AggOptions& opt) {
  switch (kind) {
    case NodeAggKind::kGat:
    case NodeAggKind::kGatSym: {
      const Tensor sl = matmul(projected, p.att_l[head]);  // [N x 1]
      const Tensor sr = matmul(projected, p.att_r[head]);
      const Tensor e_fwd = leaky_relu(
          add(gather_rows(sl, g.edge_src), gather_rows(sr, g.edge_seg)),
          opt.leaky_slope);
      if (kind == NodeAggKind::kGat) return e_fwd;
      const Tensor e_rev = leaky_relu(
          add(gather_rows(sl, g.edge_seg), gather_rows(sr, g.edge_src)),
          opt.leaky_slope);
      return add(e_fwd, e_rev);
    }
    case NodeAggKind::kGatCos: {
      Tensor e = sum_axis(mul(gather_rows(projected, g.edge_src),
                              gather_rows(projected, g.edge_seg)),
                          1);
      return opt.score_activation ? leaky_relu(e, opt.leaky_slope) : e;
    }
    case NodeAggKind::kGatLinear: {
      Tensor e = sum_axis(tanh_act(add(gather_rows(projected, g.edge_src),
                                       gather_rows(projected, g.edge_seg))),
                          1);
      return opt.score_activation ? leaky_relu(e, opt.leaky_slope) : e;
    }
    case NodeAggKind::kGatGenLinear:
      return matmul(tanh_act(add(gather_rows(projected, g.edge_src),
                                 gather_rows(projected, g.edge_seg))),
                    p.gen[head]);
    default:
      fail("gat_family_scores: not a GAT-family kind");
  }
}

}  // namespace detail

/// One node-aggregation step over the self-loop neighborhood; output has
/// the same width as the input.
inline Tensor node_aggregate(const NodeAggParams& p, const Tensor& h,
                             const Graph& g, const AggOptions& opt = {}) {
  SANE_REQUIRE(h.rows() == g.num_nodes, "node_aggregate: ", h.rows(),
               " feature rows for ", g.num_nodes, " nodes");
  switch (p.kind) {
    case NodeAggKind::kSageSum:
      return segment_reduce(SegmentKind::kSum, gather_rows(h, g.edge_src),
                            g.edge_seg, g.num_nodes);
    case NodeAggKind::kSageMean:
      return segment_reduce(SegmentKind::kMean, gather_rows(h, g.edge_src),
                            g.edge_seg, g.num_nodes);
    case NodeAggKind::kSageMax:
      return segment_reduce(SegmentKind::kMax, gather_rows(h, g.edge_src),
                            g.edge_seg, g.num_nodes);
    case NodeAggKind::kGcn:
      return segment_reduce(
          SegmentKind::kSum,
          scale_rows(gather_rows(h, g.edge_src), degree_invsqrt_pairs(g)),
          g.edge_seg, g.num_nodes);
    case NodeAggKind::kGat:
    case NodeAggKind::kGatSym:
    case NodeAggKind::kGatCos:
    case NodeAggKind::kGatLinear:
    case NodeAggKind::kGatGenLinear: {
      std::vector<Tensor> heads;
      heads.reserve(p.w.size());
      for (std::size_t head = 0; head < p.w.size(); ++head) {
        const Tensor projected = matmul(h, p.w[head]);
        const Tensor scores =
            detail::gat_family_scores(p.kind, p, head, projected, g, opt);
        heads.push_back(detail::gat_head_output(projected, scores, g));
      }
      return heads.size() == 1 ? heads[0] : concat_cols(heads);
    }
    case NodeAggKind::kGin: {
      // self term enters through (1 + eps), so the sum skips self-loops
      const Tensor nbr =
          segment_reduce(SegmentKind::kSum, gather_rows(h, g.edge_src_noself),
                         g.edge_seg_noself, g.num_nodes);
      const Tensor self = mul(h, add(Tensor::scalar(1.0), p.gin_eps));
      const Tensor x = add(nbr, self);
      const Tensor hidden = relu(add(matmul(x, p.gin_w1), p.gin_b1));
      return add(matmul(hidden, p.gin_w2), p.gin_b2);
    }
    case NodeAggKind::kGeniePath: {
      const Tensor projected = matmul(h, p.gp_w);
      const Tensor sl = matmul(projected, p.gp_att_l);
      const Tensor sr = matmul(projected, p.gp_att_r);
      const Tensor scores = leaky_relu(
          add(gather_rows(sl, g.edge_src), gather_rows(sr, g.edge_seg)),
          opt.leaky_slope);
      const Tensor breadth = detail::gat_head_output(projected, scores, g);
      const Tensor hx = concat_cols({h, breadth});
      const Tensor gate_i = sigmoid(add(matmul(hx, p.gp_wi), p.gp_bi));
      const Tensor gate_f = sigmoid(add(matmul(hx, p.gp_wf), p.gp_bf));
      const Tensor gate_o = sigmoid(add(matmul(hx, p.gp_wo), p.gp_bo));
      const Tensor cand = tanh_act(add(matmul(hx, p.gp_wc), p.gp_bc));
      const Tensor cell = add(mul(gate_f, h), mul(gate_i, cand));
      return mul(gate_o, tanh_act(cell));
    }
  }
  detail::fail("node_aggregate: unknown kind");
}

/// Shared LSTM cell plus additive attention for the LSTM layer aggregator.
struct LayerAggParams {
  Tensor wxi, whi, bi;
  Tensor wxf, whf, bf;
  Tensor wxo, who, bo;
  Tensor wxc, whc, bc;
  Tensor att;  // [d x 1] score vector over hidden states

  static LayerAggParams make(std::size_t dim, Rng& rng) {
    LayerAggParams p;
    auto mat = [&] { return Tensor::glorot(dim, dim, rng); };
    auto vec = [&] { return Tensor::zeros({dim}, true); };
    p.wxi = mat(); p.whi = mat(); p.bi = vec();
    p.wxf = mat(); p.whf = mat(); p.bf = vec();
    p.wxo = mat(); p.who = mat(); p.bo = vec();
    p.wxc = mat(); p.whc = mat(); p.bc = vec();
    p.att = Tensor::glorot(dim, 1, rng);
    return p;
  }

  void collect(NamedTensors& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".wxi", wxi);
    out.emplace_back(prefix + ".whi", whi);
    out.emplace_back(prefix + ".bi", bi);
    out.emplace_back(prefix + ".wxf", wxf);
    out.emplace_back(prefix + ".whf", whf);
    out.emplace_back(prefix + ".bf", bf);
    out.emplace_back(prefix + ".wxo", wxo);
    out.emplace_back(prefix + ".who", who);
    out.emplace_back(prefix + ".bo", bo);
    out.emplace_back(prefix + ".wxc", wxc);
    out.emplace_back(prefix + ".whc", whc);
    out.emplace_back(prefix + ".bc", bc);
    out.emplace_back(prefix + ".att", att);
  }
};

/// Combines the active per-layer outputs into one representation.
/// CONCAT widens to (#active d); MAX and LSTM keep width d.
inline Tensor layer_aggregate(LayerAggKind kind, const LayerAggParams& p,
                              const std::vector<Tensor>& outputs) {
  SANE_REQUIRE(!outputs.empty(), "layer_aggregate: empty active set");
  switch (kind) {
    case LayerAggKind::kConcat:
      return outputs.size() == 1 ? outputs[0] : concat_cols(outputs);
    case LayerAggKind::kMax: {
      Tensor acc = outputs[0];
      for (std::size_t i = 1; i < outputs.size(); ++i)
        acc = maximum(acc, outputs[i]);
      return acc;
    }
    case LayerAggKind::kLstm: {
      const std::size_t n = outputs[0].rows();
      const std::size_t d = outputs[0].cols();
      Tensor hidden = Tensor::zeros({n, d});
      Tensor cell = Tensor::zeros({n, d});
      std::vector<Tensor> hiddens;
      hiddens.reserve(outputs.size());
      for (const Tensor& x : outputs) {
        const Tensor gi =
            sigmoid(add(add(matmul(x, p.wxi), matmul(hidden, p.whi)), p.bi));
        const Tensor gf =
            sigmoid(add(add(matmul(x, p.wxf), matmul(hidden, p.whf)), p.bf));
        const Tensor go =
            sigmoid(add(add(matmul(x, p.wxo), matmul(hidden, p.who)), p.bo));
        const Tensor gc =
            tanh_act(add(add(matmul(x, p.wxc), matmul(hidden, p.whc)), p.bc));
        cell = add(mul(gf, cell), mul(gi, gc));
        hidden = mul(go, tanh_act(cell));
        hiddens.push_back(hidden);
      }
      // attention over hidden states weights a convex combination of the
      // layer outputs
      std::vector<Tensor> scores;
      scores.reserve(hiddens.size());
      for (const Tensor& hs : hiddens) scores.push_back(matmul(hs, p.att));
      const Tensor weights = softmax(concat_cols(scores), 1);  // [N x T]
      Tensor acc;
      for (std::size_t t = 0; t < outputs.size(); ++t) {
        Tensor term = scale_rows(outputs[t], col(weights, t));
        acc = acc.defined() ? add(acc, term) : term;
      }
      return acc;
    }
  }
  detail::fail("layer_aggregate: unknown kind");
}

/// IDENTITY passes H through; ZERO yields a constant zero tensor with no
/// gradient path back to H.
inline Tensor skip_apply(SkipKind kind, const Tensor& h) {
  if (kind == SkipKind::kIdentity) return h;
  return Tensor::zeros(h.shape());
}

inline const std::vector<int> kMlpWidths = {8, 16, 32, 64};
inline const std::vector<int> kMlpDepths = {1, 2, 3};

/// MLP over the summed self-loop neighborhood; the searched universal
/// aggregator. depth counts linear layers; depth 1 ignores the width.
struct MlpAggParams {
  int width = 8;
  int depth = 1;
  std::vector<Tensor> w, b;

  static MlpAggParams make(int width, int depth, std::size_t dim, Rng& rng) {
    bool w_ok = false, d_ok = false;
    for (int x : kMlpWidths) w_ok = w_ok || x == width;
    for (int x : kMlpDepths) d_ok = d_ok || x == depth;
    SANE_REQUIRE(w_ok && d_ok, "mlp aggregator: (w=", width, ", d=", depth,
                 ") outside the {8,16,32,64} x {1,2,3} grid");
    MlpAggParams p;
    p.width = width;
    p.depth = depth;
    const auto wd = static_cast<std::size_t>(width);
    for (int layer = 0; layer < depth; ++layer) {
      const std::size_t in = layer == 0 ? dim : wd;
      const std::size_t out = layer == depth - 1 ? dim : wd;
      p.w.push_back(Tensor::glorot(in, out, rng));
      p.b.push_back(Tensor::zeros({out}, true));
    }
    return p;
  }

  void collect(NamedTensors& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < w.size(); ++i) {
      out.emplace_back(prefix + ".w" + std::to_string(i), w[i]);
      out.emplace_back(prefix + ".b" + std::to_string(i), b[i]);
    }
  }
};

inline Tensor mlp_node_aggregate(const MlpAggParams& p, const Tensor& h,
                                 const Graph& g) {
  Tensor x = segment_reduce(SegmentKind::kSum, gather_rows(h, g.edge_src),
                            g.edge_seg, g.num_nodes);
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    x = add(matmul(x, p.w[i]), p.b[i]);
    if (i + 1 < p.w.size()) x = relu(x);
  }
  return x;
}

}  // namespace sane
