#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "sane/common.hpp"
#include "sane/rng.hpp"

namespace sane {

class Tape;

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches it
  bool requires_grad = false;
  Tape* tape = nullptr;
  std::int64_t node = -1;  // handle into the tape, see Tape::generation
  std::uint64_t generation = 0;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

/// Dense 64-bit tensor participating in reverse-mode differentiation.
/// Value-semantic handle; copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), {}, requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    Tensor t = make(std::move(shape), {}, requires_grad);
    for (auto& x : t.d_->values) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> vals,
                     bool requires_grad = false) {
    SANE_REQUIRE(numel(shape) == vals.size(), "Tensor::from: ", vals.size(),
                 " values do not fill shape ", shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(vals);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    Tensor t = make(std::move(shape), {}, requires_grad);
    for (auto& x : t.d_->values) x = rng.normal(0.0, stddev);
    return t;
  }

  // Glorot-uniform [fan_in x fan_out] matrix.
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng,
                       bool requires_grad = true) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = make({fan_in, fan_out}, {}, requires_grad);
    for (auto& x : t.d_->values) x = rng.uniform(-limit, limit);
    return t;
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t rows() const { return d_->shape.empty() ? 1 : d_->shape[0]; }
  std::size_t cols() const { return d_->shape.size() < 2 ? 1 : d_->shape[1]; }

  double* data() { return d_->values.data(); }
  const double* data() const { return d_->values.data(); }
  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  double item() const {
    SANE_REQUIRE(size() == 1, "Tensor::item: tensor has ", size(),
                 " elements, expected 1");
    return d_->values[0];
  }

  bool requires_grad() const { return d_->requires_grad; }

  // Gradient accumulated by the last backward(); zeros if never touched.
  std::vector<double>& grad() {
    d_->ensure_grad();
    return d_->grad;
  }
  const std::vector<double>& grad() const {
    const_cast<detail::TensorData*>(d_.get())->ensure_grad();
    return d_->grad;
  }

  void zero_grad() { d_->grad.assign(d_->values.size(), 0.0); }

  const std::shared_ptr<detail::TensorData>& ptr() const { return d_; }
  detail::TensorData* impl() const { return d_.get(); }

 private:
  static Tensor make(Shape shape, std::vector<double> vals, bool rg) {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->values.assign(numel(shape), 0.0);
    t.d_->shape = std::move(shape);
    t.d_->requires_grad = rg;
    return t;
  }

  std::shared_ptr<detail::TensorData> d_;
};

/// Ordered record of differentiable operations. Creation order is already
/// topological, so backward is a single reverse scan that visits each node
/// exactly once. clear() bumps the generation, invalidating node handles.
class Tape {
 public:
  struct Node {
    std::shared_ptr<detail::TensorData> out;
    std::function<void()> backward;
  };

  static Tape*& current() {
    thread_local Tape* active = nullptr;
    return active;
  }

  std::uint64_t generation() const { return generation_; }
  std::size_t size() const { return nodes_.size(); }

  void record(const std::shared_ptr<detail::TensorData>& out,
              std::function<void()> backward) {
    out->tape = this;
    out->node = static_cast<std::int64_t>(nodes_.size());
    out->generation = generation_;
    out->requires_grad = true;
    nodes_.push_back(Node{out, std::move(backward)});
  }

  bool owns(const detail::TensorData& t) const {
    return t.tape == this && t.generation == generation_ && t.node >= 0;
  }

  void clear() {
    nodes_.clear();
    ++generation_;
  }

  // Runs the reverse pass from `loss` and consumes the tape.
  void backward(const Tensor& loss) {
    SANE_REQUIRE(loss.size() == 1,
                 "backward: loss must be a scalar, got shape ",
                 shape_str(loss.shape()));
    SANE_REQUIRE(owns(*loss.impl()),
                 "backward: loss is not on the active tape");
    loss.impl()->grad.assign(1, 1.0);
    for (std::int64_t i = loss.impl()->node; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.out->grad.empty()) n.backward();
    }
    clear();
  }

 private:
  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

/// Binds a tape as the active one for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(Tape::current()) {
    Tape::current() = &t;
  }
  ~TapeScope() { Tape::current() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

inline void backward(const Tensor& loss) {
  Tape* t = Tape::current();
  SANE_REQUIRE(t != nullptr, "backward: no active tape");
  t->backward(loss);
}

namespace detail {

// True when the op should be recorded: a tape is active and some input
// requires gradient.
template <class... Ts>
inline bool grad_needed(const Ts&... inputs) {
  if (Tape::current() == nullptr) return false;
  return (... || inputs.requires_grad());
}

inline void record_op(const Tensor& out, std::function<void()> backward) {
  Tape::current()->record(out.ptr(), std::move(backward));
}

}  // namespace detail

}  // namespace sane
