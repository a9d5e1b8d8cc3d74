#include <catch2/catch_amalgamated.hpp>

#include "sane/model.hpp"
#include "sane/supernet.hpp"
#include "support/equivalence.hpp"
#include "support/oracles.hpp"

using namespace sane;
using Catch::Approx;

namespace {

Genotype make_genotype(std::vector<NodeAggKind> nodes,
                       std::vector<SkipKind> skips, LayerAggKind layer) {
  Genotype g;
  g.node_ops = std::move(nodes);
  g.skip_ops = std::move(skips);
  g.layer_op = layer;
  return g;
}

}  // namespace

TEST_CASE("build_model shapes") {
  Rng rng(1);
  HyperParams hp;
  hp.hidden = 4;

  SECTION("CONCAT over 3 layers of width 4 feeds a 12-wide classifier") {
    const Genotype g = make_genotype(
        {NodeAggKind::kGcn, NodeAggKind::kGcn, NodeAggKind::kGcn},
        {SkipKind::kIdentity, SkipKind::kIdentity, SkipKind::kIdentity},
        LayerAggKind::kConcat);
    GnnModel m(g, hp, 6, 2, rng);
    CHECK(m.classifier_w().shape() == Shape{12, 2});
    CHECK(m.active_layers().size() == 3);
    CHECK_FALSE(m.all_zero_fallback());
  }
  SECTION("a ZERO skip drops that layer from the aggregator input") {
    const Genotype g = make_genotype(
        {NodeAggKind::kGcn, NodeAggKind::kGat, NodeAggKind::kGin},
        {SkipKind::kZero, SkipKind::kIdentity, SkipKind::kIdentity},
        LayerAggKind::kConcat);
    GnnModel m(g, hp, 6, 2, rng);
    CHECK(m.active_layers() == std::vector<std::size_t>{1, 2});
    CHECK(m.classifier_w().shape() == Shape{8, 2});
  }
  SECTION("all-ZERO genotypes fall back to the last layer") {
    const Genotype g = make_genotype(
        {NodeAggKind::kGcn, NodeAggKind::kGcn},
        {SkipKind::kZero, SkipKind::kZero}, LayerAggKind::kMax);
    GnnModel m(g, hp, 6, 2, rng);
    CHECK(m.all_zero_fallback());
    CHECK(m.active_layers() == std::vector<std::size_t>{1});
    CHECK(m.classifier_w().shape() == Shape{4, 2});
  }
}

TEST_CASE("one-hot supernet equivalence across sampled genotypes") {
  Graph g = oracles::rand_graph(24, 5, 51);
  Rng net_rng(7);
  SuperNetConfig cfg;
  cfg.k_layers = 3;
  cfg.hidden = 8;
  cfg.heads = 2;
  SuperNet net(5, 3, cfg, net_rng);

  Rng geno_rng(70);
  int tested = 0;
  while (tested < 8) {
    Genotype geno = sample_genotype(3, geno_rng);
    if (!equivalence::equivalence_defined(geno)) continue;
    ++tested;

    ArchParams arch = ArchParams::init(3, net_rng);
    equivalence::saturate_arch(arch, geno);

    Rng fwd(1);
    const Tensor super_logits = net.forward(g, arch, false, fwd);
    GnnModel model = equivalence::model_from_supernet(net, geno, 5, 3);
    Rng fwd2(1);
    const Tensor model_logits = model.forward(g, false, fwd2);

    INFO("genotype " << geno.brief());
    REQUIRE(super_logits.shape() == model_logits.shape());
    for (std::size_t i = 0; i < super_logits.size(); ++i)
      CHECK(super_logits.data()[i] ==
            Approx(model_logits.data()[i]).margin(1e-8));
  }
}

TEST_CASE("model forward is deterministic") {
  Graph g = oracles::rand_graph(12, 4, 53);
  Rng rng(3);
  HyperParams hp;
  hp.hidden = 8;
  hp.heads = 2;
  hp.activation = Activation::kTanh;
  const Genotype geno = make_genotype(
      {NodeAggKind::kGatCos, NodeAggKind::kSageMax},
      {SkipKind::kIdentity, SkipKind::kIdentity}, LayerAggKind::kMax);
  GnnModel m(geno, hp, 4, 2, rng);
  Rng f1(9), f2(9);
  CHECK(m.forward(g, false, f1).values() == m.forward(g, false, f2).values());
}

TEST_CASE("MLP-mode model builds the grid shapes") {
  Rng rng(5);
  HyperParams hp;
  hp.hidden = 8;
  GnnModel m(3, 16, 2, hp, 4, 2, rng);
  CHECK(m.classifier_w().shape() == Shape{24, 2});
  Graph g = oracles::rand_graph(10, 4, 55);
  Rng fwd(1);
  CHECK(m.forward(g, false, fwd).shape() == Shape{10, 2});
}
