#include <catch2/catch_amalgamated.hpp>

#include "sane/optim.hpp"
#include "sane/tensor.hpp"

using namespace sane;
using Catch::Approx;

TEST_CASE("sgd single step") {
  Tensor w = Tensor::scalar(1.0, true);
  w.grad()[0] = 0.5;
  Sgd opt({w}, 0.1);
  opt.step();
  CHECK(w.item() == Approx(0.95).margin(1e-15));
}

TEST_CASE("sgd weight decay is an additive gradient term") {
  Tensor w = Tensor::scalar(1.0, true);
  w.zero_grad();
  Sgd opt({w}, 0.1, 0.1);
  opt.step();
  CHECK(w.item() == Approx(1.0 - 0.1 * 0.1).margin(1e-15));
}

TEST_CASE("adam first step matches the closed form") {
  const double lr = 0.01;
  Tensor w = Tensor::scalar(1.0, true);
  w.grad()[0] = 1.0;
  Adam opt({w}, lr);
  opt.step();
  // m_hat = v_hat = 1 after one step, so the update is lr / (1 + eps)
  const double expected = 1.0 - lr / (1.0 + 1e-8);
  CHECK(w.item() == Approx(expected).margin(1e-6 * lr));
  CHECK(w.item() == Approx(1.0 - lr).margin(1e-6));
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  Tensor w = Tensor::from({3}, {1, -2, 3}, true);
  w.zero_grad();
  Adam adam({w}, 0.05);
  adam.step();
  adam.step();
  CHECK(w.values() == std::vector<double>{1, -2, 3});

  Sgd sgd({w}, 0.05);
  sgd.step();
  CHECK(w.values() == std::vector<double>{1, -2, 3});
}

TEST_CASE("non-positive learning rates are rejected") {
  Tensor w = Tensor::scalar(1.0, true);
  CHECK_THROWS_AS(Sgd({w}, 0.0), Error);
  CHECK_THROWS_AS(Adam({w}, -0.1), Error);
}

TEST_CASE("adam converges on a quadratic") {
  Tensor w = Tensor::scalar(5.0, true);
  Adam opt({w}, 0.1);
  for (int i = 0; i < 500; ++i) {
    w.zero_grad();
    w.grad()[0] = 2.0 * w.item();  // d/dw w^2
    opt.step();
  }
  CHECK(std::abs(w.item()) < 1e-3);
}
