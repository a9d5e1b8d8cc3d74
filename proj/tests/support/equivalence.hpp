#pragma once

// Cross-module harness: rebuilds a saturated supernet as the equivalent
// discrete model with copied parameters.

#include "sane/model.hpp"
#include "sane/supernet.hpp"
#include "support/oracles.hpp"

namespace equivalence {

inline void saturate(sane::Tensor& alpha, std::size_t index) {
  for (auto& v : alpha.values()) v = 0.0;
  alpha.data()[index] = 40.0;
}

inline void saturate_arch(sane::ArchParams& arch, const sane::Genotype& geno) {
  for (std::size_t l = 0; l < geno.node_ops.size(); ++l) {
    saturate(arch.alpha_node[l], static_cast<std::size_t>(geno.node_ops[l]));
    saturate(arch.alpha_skip[l], static_cast<std::size_t>(geno.skip_ops[l]));
  }
  saturate(arch.alpha_layer, static_cast<std::size_t>(geno.layer_op));
}

// The discrete model excludes ZERO-skip layers structurally; that matches
// the saturated zero-contribution mixture only under CONCAT, and the
// all-ZERO corner uses the spec'd last-layer fallback instead. Equivalence
// is defined on the remaining genotypes.
inline bool equivalence_defined(const sane::Genotype& geno) {
  bool any_zero = false, all_zero = true;
  for (auto s : geno.skip_ops) {
    any_zero = any_zero || s == sane::SkipKind::kZero;
    all_zero = all_zero && s == sane::SkipKind::kZero;
  }
  if (all_zero) return false;
  if (any_zero && geno.layer_op != sane::LayerAggKind::kConcat) return false;
  return true;
}

inline void copy_values(sane::Tensor& dst, const sane::Tensor& src) {
  dst.values() = src.values();
}

inline void copy_agg_params(sane::NodeAggParams& dst,
                            const sane::NodeAggParams& src) {
  for (std::size_t h = 0; h < dst.w.size(); ++h) copy_values(dst.w[h], src.w[h]);
  for (std::size_t h = 0; h < dst.att_l.size(); ++h)
    copy_values(dst.att_l[h], src.att_l[h]);
  for (std::size_t h = 0; h < dst.att_r.size(); ++h)
    copy_values(dst.att_r[h], src.att_r[h]);
  for (std::size_t h = 0; h < dst.gen.size(); ++h)
    copy_values(dst.gen[h], src.gen[h]);
  if (dst.gin_w1.defined()) {
    copy_values(dst.gin_w1, src.gin_w1);
    copy_values(dst.gin_b1, src.gin_b1);
    copy_values(dst.gin_w2, src.gin_w2);
    copy_values(dst.gin_b2, src.gin_b2);
    copy_values(dst.gin_eps, src.gin_eps);
  }
  if (dst.gp_w.defined()) {
    copy_values(dst.gp_w, src.gp_w);
    copy_values(dst.gp_att_l, src.gp_att_l);
    copy_values(dst.gp_att_r, src.gp_att_r);
    copy_values(dst.gp_wi, src.gp_wi);
    copy_values(dst.gp_bi, src.gp_bi);
    copy_values(dst.gp_wf, src.gp_wf);
    copy_values(dst.gp_bf, src.gp_bf);
    copy_values(dst.gp_wo, src.gp_wo);
    copy_values(dst.gp_bo, src.gp_bo);
    copy_values(dst.gp_wc, src.gp_wc);
    copy_values(dst.gp_bc, src.gp_bc);
  }
}

inline void copy_layer_agg(sane::LayerAggParams& dst,
                           const sane::LayerAggParams& src) {
  copy_values(dst.wxi, src.wxi);
  copy_values(dst.whi, src.whi);
  copy_values(dst.bi, src.bi);
  copy_values(dst.wxf, src.wxf);
  copy_values(dst.whf, src.whf);
  copy_values(dst.bf, src.bf);
  copy_values(dst.wxo, src.wxo);
  copy_values(dst.who, src.who);
  copy_values(dst.bo, src.bo);
  copy_values(dst.wxc, src.wxc);
  copy_values(dst.whc, src.whc);
  copy_values(dst.bc, src.bc);
  copy_values(dst.att, src.att);
}

// Builds the genotype's discrete model from the supernet's own weights.
// The supernet composes each layer-aggregator branch with a linear
// projection before the classifier, so the discrete classifier becomes
// projection x classifier, restricted to the active CONCAT blocks.
inline sane::GnnModel model_from_supernet(const sane::SuperNet& net,
                                          const sane::Genotype& geno,
                                          std::size_t in_dim,
                                          std::size_t num_classes) {
  using namespace sane;
  HyperParams hp;
  hp.hidden = net.config().hidden;
  hp.heads = net.config().heads;
  hp.activation = Activation::kElu;
  hp.dropout = 0.0;
  Rng rng(999);
  GnnModel model(geno, hp, in_dim, num_classes, rng);

  copy_values(model.input_w(), net.input_w());
  copy_values(model.input_b(), net.input_b());
  for (std::size_t l = 0; l < geno.node_ops.size(); ++l) {
    copy_agg_params(model.agg_params(l),
                    net.node_agg_params(static_cast<int>(l), geno.node_ops[l]));
    copy_values(model.shared_w(l), net.shared_w(static_cast<int>(l)));
  }
  if (geno.layer_op == LayerAggKind::kLstm)
    copy_layer_agg(model.layer_agg_params(), net.layer_agg_params());

  const std::size_t d = static_cast<std::size_t>(net.config().hidden);
  const std::size_t c = num_classes;
  const Tensor& proj = net.branch_projection(geno.layer_op);
  const std::vector<double> composed = oracles::matmul_triple_loop(
      proj.values(), net.classifier_w().values(), proj.shape()[0], d, c);
  if (geno.layer_op == LayerAggKind::kConcat) {
    std::vector<double> rows;
    for (std::size_t l = 0; l < geno.skip_ops.size(); ++l) {
      if (geno.skip_ops[l] != SkipKind::kIdentity) continue;
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t j = 0; j < c; ++j)
          rows.push_back(composed[(l * d + r) * c + j]);
    }
    model.classifier_w().values() = rows;
  } else {
    model.classifier_w().values() = composed;
  }
  copy_values(model.classifier_b(), net.classifier_b());
  return model;
}

}  // namespace equivalence
