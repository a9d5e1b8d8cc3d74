#pragma once

#include <cmath>
#include <vector>

#include "sane/common.hpp"
#include "sane/tensor.hpp"

namespace sane {

// Weight decay is applied as an additive L2 gradient term in both optimizers.

class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double weight_decay = 0.0)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
    SANE_REQUIRE(lr_ > 0.0, "Sgd: learning rate must be positive, got ", lr_);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    for (auto& p : params_) {
      const auto& g = p.grad();
      double* w = p.data();
      for (std::size_t i = 0; i < p.size(); ++i)
        w[i] -= lr_ * (g[i] + weight_decay_ * w[i]);
    }
  }

 private:
  std::vector<Tensor> params_;
  double lr_, weight_decay_;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double weight_decay = 0.0,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)),
        lr_(lr),
        weight_decay_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    SANE_REQUIRE(lr_ > 0.0, "Adam: learning rate must be positive, got ", lr_);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0);
      v_[i].assign(params_[i].size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      const auto& grad = p.grad();
      double* w = p.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = grad[j] + weight_decay_ * w[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace sane
