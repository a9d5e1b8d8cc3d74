#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "sane/ops.hpp"
#include "support/oracles.hpp"

using namespace sane;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("matmul basics") {
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor v = Tensor::from({2, 1}, {3, 4});
  Tensor r = matmul(id, v);
  CHECK(r.values() == std::vector<double>{3, 4});

  Tensor a = Tensor::from({1, 2}, {1, 2});
  CHECK(matmul(a, v).item() == Approx(11.0));

  CHECK_THROWS_WITH(matmul(v, v), ContainsSubstring("[2x1]"));
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(3);
  Tensor a = oracles::rand_input({3, 4}, rng);
  Tensor b = oracles::rand_input({4, 2}, rng);
  const auto expected =
      oracles::matmul_triple_loop(a.values(), b.values(), 3, 4, 2);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(c.data()[i] == Approx(expected[i]).margin(1e-12));
}

TEST_CASE("elementwise activations") {
  Tensor x = Tensor::from({3}, {-1, 0, 2});
  CHECK(relu(x).values() == std::vector<double>{0, 0, 2});
  CHECK(leaky_relu(Tensor::from({1}, {-1}), 0.2).item() == Approx(-0.2));
  CHECK(elu(Tensor::from({1}, {-1})).item() == Approx(std::expm1(-1.0)));
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == Approx(0.5));
  CHECK(tanh_act(Tensor::scalar(0.0)).item() == 0.0);
}

TEST_CASE("tanh gradient at zero is 1 by finite difference") {
  Tensor x = Tensor::scalar(0.0, true);
  const double err = oracles::max_grad_rel_error(
      [&] { return sum_all(tanh_act(x)); }, {x}, 1e-5);
  CHECK(err < 1e-6);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum_all(tanh_act(x));
  x.zero_grad();
  backward(loss);
  CHECK(x.grad()[0] == Approx(1.0).margin(1e-9));
}

TEST_CASE("broadcast add/mul support scalar and row forms") {
  Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::from({3}, {10, 20, 30});
  Tensor s = Tensor::scalar(100);

  CHECK(add(m, row).values() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(add(row, m).values() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(add(m, s).values() == std::vector<double>{101, 102, 103, 104, 105, 106});
  CHECK(mul(m, s).values() == std::vector<double>{100, 200, 300, 400, 500, 600});
  CHECK(sub(m, row).values() == std::vector<double>{-9, -18, -27, -6, -15, -24});

  Tensor bad = Tensor::from({4}, {1, 2, 3, 4});
  CHECK_THROWS_WITH(add(m, bad), ContainsSubstring("incompatible broadcast"));
}

TEST_CASE("broadcast gradients reduce over the broadcast dimensions") {
  Rng rng(5);
  Tensor m = oracles::rand_input({3, 4}, rng, true);
  Tensor row = oracles::rand_input({4}, rng, true);
  Tensor s = Tensor::scalar(rng.uniform(-1, 1), true);
  const double err = oracles::max_grad_rel_error(
      [&] { return sum_all(mul(add(m, row), s)); }, {m, row, s});
  CHECK(err < 1e-4);
}

TEST_CASE("softmax values") {
  Tensor u = softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (double x : u.values()) CHECK(x == Approx(1.0 / 3.0));

  // large logits stay stable
  Tensor st = softmax(Tensor::from({2}, {1000, 0}), 0);
  CHECK(std::isfinite(st.data()[0]));
  CHECK(st.data()[0] == Approx(1.0));
  CHECK(st.data()[1] == Approx(0.0).margin(1e-300));

  Rng rng(7);
  Tensor x = oracles::rand_input({4, 5}, rng);
  for (std::size_t axis : {0u, 1u}) {
    Tensor y = softmax(x, axis);
    const std::size_t slices = axis == 1 ? 4 : 5;
    for (std::size_t s = 0; s < slices; ++s) {
      double sum = 0.0;
      const std::size_t len = axis == 1 ? 5 : 4;
      for (std::size_t j = 0; j < len; ++j)
        sum += axis == 1 ? y.data()[s * 5 + j] : y.data()[j * 5 + s];
      CHECK(sum == Approx(1.0).margin(1e-9));
    }
    for (double v : y.values()) CHECK(v >= 0.0);
  }
}

TEST_CASE("softmax gradient matches finite difference") {
  Rng rng(9);
  Tensor x = oracles::rand_input({3, 4}, rng, true);
  Tensor probe = oracles::rand_input({3, 4}, rng);
  const double err = oracles::max_grad_rel_error(
      [&] { return sum_all(mul(softmax(x, 1), probe)); }, {x});
  CHECK(err < 1e-5);
}

TEST_CASE("segment_reduce sum/max/mean") {
  Tensor v = Tensor::from({3, 1}, {1, 2, 3});
  const std::vector<std::size_t> ids = {0, 0, 1};
  CHECK(segment_reduce(SegmentKind::kSum, v, ids, 2).values() ==
        std::vector<double>{3, 3});
  CHECK(segment_reduce(SegmentKind::kMax, v, ids, 2).values() ==
        std::vector<double>{2, 3});

  // empty segment 2 yields a zero row
  Tensor mean = segment_reduce(SegmentKind::kMean, v, ids, 3);
  CHECK(mean.values() == std::vector<double>{1.5, 3, 0});

  CHECK_THROWS_WITH(segment_reduce(SegmentKind::kSum, v, {1, 0, 1}, 2),
                    ContainsSubstring("not sorted"));
  CHECK_THROWS_WITH(segment_reduce(SegmentKind::kSum, v, {0, 0, 5}, 2),
                    ContainsSubstring("out of range"));
}

TEST_CASE("segment sum equals incidence-matrix matmul") {
  Rng rng(13);
  const std::size_t e = 12, d = 3, s = 5;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < e; ++i) ids.push_back(rng.below(s));
  std::sort(ids.begin(), ids.end());
  Tensor v = oracles::rand_input({e, d}, rng);
  Tensor incidence = Tensor::zeros({s, e});
  for (std::size_t i = 0; i < e; ++i) incidence.data()[ids[i] * e + i] = 1.0;
  const Tensor direct = segment_reduce(SegmentKind::kSum, v, ids, s);
  const Tensor dense = matmul(incidence, v);
  for (std::size_t i = 0; i < direct.size(); ++i)
    CHECK(direct.data()[i] == Approx(dense.data()[i]).margin(1e-10));
}

TEST_CASE("segment max routes gradient to the first maximal element") {
  Tape tape;
  TapeScope scope(tape);
  Tensor v = Tensor::from({3, 1}, {2, 2, 1}, true);  // tie between rows 0,1
  Tensor out = segment_reduce(SegmentKind::kMax, v, {0, 0, 0}, 1);
  v.zero_grad();
  backward(sum_all(out));
  CHECK(v.grad() == std::vector<double>{1, 0, 0});
}

TEST_CASE("segment gradients match finite difference") {
  Rng rng(17);
  const std::vector<std::size_t> ids = {0, 0, 1, 2, 2, 2};
  Tensor v = oracles::rand_input({6, 2}, rng, true);
  Tensor probe = oracles::rand_input({4, 2}, rng);
  for (auto kind : {SegmentKind::kSum, SegmentKind::kMean, SegmentKind::kMax}) {
    const double err = oracles::max_grad_rel_error(
        [&] { return sum_all(mul(segment_reduce(kind, v, ids, 4), probe)); },
        {v});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("segment_softmax") {
  Tensor two = segment_softmax(Tensor::from({2}, {0, 0}), {0, 0}, 1);
  CHECK(two.values() == std::vector<double>{0.5, 0.5});
  CHECK(segment_softmax(Tensor::from({1}, {1}), {0}, 1).item() == 1.0);

  Rng rng(19);
  std::vector<std::size_t> ids = {0, 0, 0, 1, 2, 2, 3, 3, 3, 3};
  Tensor scores = oracles::rand_input({10}, rng, true);
  const Tensor y = segment_softmax(scores, ids, 4);
  const auto expected =
      oracles::segment_softmax_direct(scores.values(), ids, 4);
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(y.data()[i] == Approx(expected[i]).margin(1e-10));

  Tensor probe = oracles::rand_input({10}, rng);
  const double err = oracles::max_grad_rel_error(
      [&] { return sum_all(mul(segment_softmax(scores, ids, 4), probe)); },
      {scores});
  CHECK(err < 1e-4);
}

TEST_CASE("softmax cross entropy") {
  const std::vector<std::int64_t> labels = {0, 1};
  const std::vector<std::uint8_t> mask = {1, 1};

  // confident and correct
  Tensor sharp = Tensor::from({2, 2}, {40, 0, 0, 40});
  CHECK(softmax_cross_entropy(sharp, labels, mask).item() < 1e-3);

  // uniform logits, C=4: loss is ln 4
  Tensor flat = Tensor::zeros({2, 4});
  CHECK(softmax_cross_entropy(flat, labels, mask).item() ==
        Approx(std::log(4.0)).margin(1e-6));

  CHECK_THROWS_WITH(softmax_cross_entropy(flat, labels, {0, 0}),
                    ContainsSubstring("no nodes"));

  Rng rng(23);
  Tensor logits = oracles::rand_input({5, 3}, rng, true);
  const std::vector<std::int64_t> labs = {0, 2, 1, 1, 0};
  const std::vector<std::uint8_t> msk = {1, 0, 1, 1, 0};
  const double err = oracles::max_grad_rel_error(
      [&] { return softmax_cross_entropy(logits, labs, msk); }, {logits});
  CHECK(err < 1e-5);
}

TEST_CASE("sigmoid bce") {
  // zero logits, any targets: loss = ln 2
  Tensor z = Tensor::zeros({2, 3});
  const std::vector<double> targets = {1, 0, 1, 0, 0, 1};
  const std::vector<std::uint8_t> mask = {1, 1};
  CHECK(sigmoid_bce(z, targets, mask).item() ==
        Approx(std::log(2.0)).margin(1e-9));

  Rng rng(29);
  Tensor logits = oracles::rand_input({4, 3}, rng, true);
  std::vector<double> t(12);
  for (auto& x : t) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
  const std::vector<std::uint8_t> msk = {1, 0, 1, 1};
  const double err = oracles::max_grad_rel_error(
      [&] { return sigmoid_bce(logits, t, msk); }, {logits});
  CHECK(err < 1e-5);
}

TEST_CASE("gather, scale, concat, col, element, maximum, sums") {
  Tensor x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(gather_rows(x, {2, 0}).values() == std::vector<double>{5, 6, 1, 2});
  CHECK_THROWS_WITH(gather_rows(x, {7}), ContainsSubstring("out of range"));

  Tensor s = Tensor::from({3}, {1, 0, 2});
  CHECK(scale_rows(x, s).values() == std::vector<double>{1, 2, 0, 0, 10, 12});

  Tensor y = Tensor::from({3, 1}, {7, 8, 9});
  CHECK(concat_cols({x, y}).values() ==
        std::vector<double>{1, 2, 7, 3, 4, 8, 5, 6, 9});

  CHECK(col(x, 1).values() == std::vector<double>{2, 4, 6});
  CHECK(element(x, 3).item() == 4.0);

  Tensor a = Tensor::from({2}, {1, 5});
  Tensor b = Tensor::from({2}, {3, 2});
  CHECK(maximum(a, b).values() == std::vector<double>{3, 5});

  CHECK(sum_axis(x, 1).values() == std::vector<double>{3, 7, 11});
  CHECK(sum_axis(x, 0).values() == std::vector<double>{9, 12});
  CHECK(sum_all(x).item() == 21.0);

  Rng rng(31);
  Tensor gx = oracles::rand_input({4, 3}, rng, true);
  Tensor gs = oracles::rand_input({5}, rng, true);
  Tensor probe = oracles::rand_input({5, 3}, rng);
  const double err = oracles::max_grad_rel_error(
      [&] {
        Tensor gathered = gather_rows(gx, {0, 2, 2, 3, 1});
        return sum_all(mul(scale_rows(gathered, gs), probe));
      },
      {gx, gs});
  CHECK(err < 1e-4);
}

TEST_CASE("maximum ties send gradient to the first operand") {
  Tape tape;
  TapeScope scope(tape);
  Tensor a = Tensor::from({2}, {1, 1}, true);
  Tensor b = Tensor::from({2}, {1, 0}, true);
  a.zero_grad();
  b.zero_grad();
  backward(sum_all(maximum(a, b)));
  CHECK(a.grad() == std::vector<double>{1, 1});
  CHECK(b.grad() == std::vector<double>{0, 0});
}

TEST_CASE("dropout") {
  Rng rng(37);
  Tensor x = Tensor::full({100}, 2.0);
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), Error);

  Tensor same = dropout(x, 0.5, rng, false);
  CHECK(same.values() == x.values());
  CHECK(dropout(x, 0.0, rng, true).values() == x.values());

  const double p = 0.4;
  Tensor masked = dropout(x, p, rng, true);
  std::size_t kept = 0;
  for (double v : masked.values()) {
    const bool zero = v == 0.0;
    const bool scaled = std::abs(v - 2.0 / (1.0 - p)) < 1e-12;
    CHECK((zero || scaled));
    kept += scaled ? 1 : 0;
  }
  CHECK(kept > 35);
  CHECK(kept < 85);

  // same seed, same mask
  Rng r1(5), r2(5);
  CHECK(dropout(x, p, r1, true).values() == dropout(x, p, r2, true).values());
}

TEST_CASE("reshape round-trips values and gradients") {
  Rng rng(41);
  Tensor x = oracles::rand_input({2, 3}, rng, true);
  Tensor flat = reshape(x, {6});
  CHECK(flat.values() == x.values());
  const double err = oracles::max_grad_rel_error(
      [&] { return sum_all(mul(reshape(x, {6}), Tensor::full({6}, 2.0))); },
      {x});
  CHECK(err < 1e-6);
}
