#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sane/common.hpp"
#include "sane/rng.hpp"
#include "sane/tensor.hpp"

namespace sane {

inline constexpr double kDefaultLeakySlope = 0.2;

namespace kernel {

// C += A * B, all row-major.
inline void mm_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA += G * B^T  where G is [m x n], B is [k x n], dA is [m x k].
inline void mm_nt_acc(const double* g, const double* b, double* da,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB += A^T * G  where A is [m x k], G is [m x n], dB is [k x n].
inline void mm_tn_acc(const double* a, const double* g, double* db,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* brow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
    }
  }
}

}  // namespace kernel

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  SANE_REQUIRE(a.rank() == 2 && b.rank() == 2,
               "matmul: expects rank-2 operands, got ", shape_str(a.shape()),
               " and ", shape_str(b.shape()));
  SANE_REQUIRE(a.shape()[1] == b.shape()[0], "matmul: shape mismatch ",
               shape_str(a.shape()), " x ", shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  kernel::mm_acc(a.data(), b.data(), out.data(), m, k, n);
  if (detail::grad_needed(a, b)) {
    auto pa = a.ptr(), pb = b.ptr(), po = out.ptr();
    detail::record_op(out, [pa, pb, po, m, k, n] {
      const double* g = po->grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        kernel::mm_nt_acc(g, pb->values.data(), pa->grad.data(), m, k, n);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        kernel::mm_tn_acc(pa->values.data(), g, pb->grad.data(), m, k, n);
      }
    });
  }
  return out;
}

namespace detail {

enum class Broadcast { kSame, kScalarA, kScalarB, kRowA, kRowB };

// Supported broadcasts: identical shapes, one side scalar, or a row vector
// [n] / [1 x n] against an [m x n] matrix.
inline Broadcast broadcast_plan(const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::kSame;
  if (numel(b) == 1) return Broadcast::kScalarB;
  if (numel(a) == 1) return Broadcast::kScalarA;
  auto is_row_of = [](const Shape& row, const Shape& mat) {
    if (mat.size() != 2) return false;
    const std::size_t n = mat[1];
    if (row.size() == 1 && row[0] == n) return true;
    if (row.size() == 2 && row[0] == 1 && row[1] == n) return true;
    return false;
  };
  if (is_row_of(b, a)) return Broadcast::kRowB;
  if (is_row_of(a, b)) return Broadcast::kRowA;
  fail("incompatible broadcast: ", shape_str(a), " vs ", shape_str(b));
}

// Maps a flat output index to an index into the broadcast operand.
struct BroadcastIndex {
  Broadcast plan;
  std::size_t ncols;
  std::size_t a(std::size_t i) const {
    if (plan == Broadcast::kScalarA) return 0;
    if (plan == Broadcast::kRowA) return i % ncols;
    return i;
  }
  std::size_t b(std::size_t i) const {
    if (plan == Broadcast::kScalarB) return 0;
    if (plan == Broadcast::kRowB) return i % ncols;
    return i;
  }
};

inline Shape broadcast_shape(const Tensor& a, const Tensor& b, Broadcast p) {
  if (p == Broadcast::kScalarA || p == Broadcast::kRowA) return b.shape();
  return a.shape();
}

}  // namespace detail

namespace detail {

template <class Fwd, class Bwd>
inline Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  const Broadcast plan = broadcast_plan(a.shape(), b.shape());
  const Shape out_shape = broadcast_shape(a, b, plan);
  const std::size_t ncols = out_shape.size() == 2 ? out_shape[1] : out_shape[0];
  const BroadcastIndex ix{plan, ncols};
  Tensor out = Tensor::zeros(out_shape);
  const std::size_t n = out.size();
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[ix.a(i)], bv[ix.b(i)]);
  if (grad_needed(a, b)) {
    auto pa = a.ptr(), pb = b.ptr(), po = out.ptr();
    record_op(out, [pa, pb, po, ix, n, bwd] {
      const double* g = po->grad.data();
      double* ga = nullptr;
      double* gb = nullptr;
      if (pa->requires_grad) {
        pa->ensure_grad();
        ga = pa->grad.data();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        gb = pb->grad.data();
      }
      const double* av = pa->values.data();
      const double* bv = pb->values.data();
      for (std::size_t i = 0; i < n; ++i) {
        double da, db;
        bwd(av[ix.a(i)], bv[ix.b(i)], g[i], da, db);
        if (ga) ga[ix.a(i)] += da;
        if (gb) gb[ix.b(i)] += db;
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

// Elementwise maximum; ties route gradient to `a`.
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  SANE_REQUIRE(a.shape() == b.shape(), "maximum: shape mismatch ",
               shape_str(a.shape()), " vs ", shape_str(b.shape()));
  return detail::binary_op(
      a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double g, double& da, double& db) {
        da = x >= y ? g : 0.0;
        db = x >= y ? 0.0 : g;
      });
}

namespace detail {

template <class Fwd, class Dfn>
inline Tensor unary_op(const Tensor& x, Fwd fwd, Dfn dfn) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.size();
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  if (grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    record_op(out, [px, po, n, dfn] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      const double* g = po->grad.data();
      const double* xv = px->values.data();
      const double* yv = po->values.data();
      double* gx = px->grad.data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * dfn(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace detail

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& x, double slope = kDefaultLeakySlope) {
  return detail::unary_op(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Tensor elu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

inline Tensor tanh_act(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return std::tanh(v); },
                          [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

namespace detail {

struct SliceIter {
  std::size_t count, len, start_stride, stride;
};

// Slices of a rank-1/rank-2 tensor along `axis`.
inline SliceIter slices_along(const Shape& shape, std::size_t axis) {
  SANE_REQUIRE(shape.size() >= 1 && shape.size() <= 2,
               "softmax: expects rank-1 or rank-2, got ", shape_str(shape));
  if (shape.size() == 1) {
    SANE_REQUIRE(axis == 0, "softmax: axis ", axis, " invalid for rank-1");
    return {1, shape[0], 0, 1};
  }
  SANE_REQUIRE(axis < 2, "softmax: axis ", axis, " invalid for rank-2");
  if (axis == 1) return {shape[0], shape[1], shape[1], 1};
  return {shape[1], shape[0], 1, shape[1]};
}

}  // namespace detail

// Numerically stable softmax along `axis`; each slice sums to 1.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const detail::SliceIter it = detail::slices_along(x.shape(), axis);
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t s = 0; s < it.count; ++s) {
    const std::size_t base = s * it.start_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < it.len; ++j)
      mx = std::max(mx, xv[base + j * it.stride]);
    double sum = 0.0;
    for (std::size_t j = 0; j < it.len; ++j) {
      const std::size_t idx = base + j * it.stride;
      ov[idx] = std::exp(xv[idx] - mx);
      sum += ov[idx];
    }
    for (std::size_t j = 0; j < it.len; ++j) ov[base + j * it.stride] /= sum;
  }
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po, it] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      const double* g = po->grad.data();
      const double* y = po->values.data();
      double* gx = px->grad.data();
      for (std::size_t s = 0; s < it.count; ++s) {
        const std::size_t base = s * it.start_stride;
        double dot = 0.0;
        for (std::size_t j = 0; j < it.len; ++j) {
          const std::size_t idx = base + j * it.stride;
          dot += g[idx] * y[idx];
        }
        for (std::size_t j = 0; j < it.len; ++j) {
          const std::size_t idx = base + j * it.stride;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    });
  }
  return out;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  SANE_REQUIRE(numel(shape) == x.size(), "reshape: cannot view ",
               shape_str(x.shape()), " as ", shape_str(shape));
  Tensor out = Tensor::from(std::move(shape), x.values());
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t i = 0; i < po->grad.size(); ++i)
        px->grad[i] += po->grad[i];
    });
  }
  return out;
}

// Rows of x indexed by `idx` (rank-1 x gives rank-1 output).
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  for (std::size_t i : idx)
    SANE_REQUIRE(i < n, "gather_rows: index ", i, " out of range [0,", n, ")");
  Shape shape = x.rank() == 1 ? Shape{idx.size()} : Shape{idx.size(), d};
  Tensor out = Tensor::zeros(std::move(shape));
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t e = 0; e < idx.size(); ++e)
    for (std::size_t j = 0; j < d; ++j) ov[e * d + j] = xv[idx[e] * d + j];
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    const auto ids = idx;  // keep alive in the closure
    detail::record_op(out, [px, po, ids, d] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      const double* g = po->grad.data();
      double* gx = px->grad.data();
      for (std::size_t e = 0; e < ids.size(); ++e)
        for (std::size_t j = 0; j < d; ++j) gx[ids[e] * d + j] += g[e * d + j];
    });
  }
  return out;
}

// out[i,j] = x[i,j] * s[i]; s is [m] or [m x 1].
inline Tensor scale_rows(const Tensor& x, const Tensor& s) {
  const std::size_t m = x.rows(), d = x.cols();
  SANE_REQUIRE(s.size() == m && s.cols() <= 1, "scale_rows: scale shape ",
               shape_str(s.shape()), " does not match rows of ",
               shape_str(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  const double* sv = s.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) ov[i * d + j] = xv[i * d + j] * sv[i];
  if (detail::grad_needed(x, s)) {
    auto px = x.ptr(), ps = s.ptr(), po = out.ptr();
    detail::record_op(out, [px, ps, po, m, d] {
      const double* g = po->grad.data();
      if (px->requires_grad) {
        px->ensure_grad();
        double* gx = px->grad.data();
        const double* sv = ps->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * sv[i];
      }
      if (ps->requires_grad) {
        ps->ensure_grad();
        double* gs = ps->grad.data();
        const double* xv = px->values.data();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += g[i * d + j] * xv[i * d + j];
          gs[i] += acc;
        }
      }
    });
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  SANE_REQUIRE(!parts.empty(), "concat_cols: empty input list");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    SANE_REQUIRE(p.rank() == 2, "concat_cols: expects rank-2 parts, got ",
                 shape_str(p.shape()));
    SANE_REQUIRE(p.rows() == m, "concat_cols: row mismatch ", p.rows(),
                 " vs ", m);
    total += p.cols();
  }
  Tensor out = Tensor::zeros({m, total});
  double* ov = out.data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.cols();
    const double* pv = p.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) ov[i * total + off + j] = pv[i * d + j];
    off += d;
  }
  bool needs = false;
  for (const Tensor& p : parts) needs = needs || detail::grad_needed(p);
  if (needs) {
    std::vector<std::shared_ptr<detail::TensorData>> ps;
    ps.reserve(parts.size());
    for (const Tensor& p : parts) ps.push_back(p.ptr());
    auto po = out.ptr();
    detail::record_op(out, [ps, po, m, total] {
      const double* g = po->grad.data();
      std::size_t off = 0;
      for (const auto& p : ps) {
        const std::size_t d = p->shape[1];
        if (p->requires_grad) {
          p->ensure_grad();
          double* gp = p->grad.data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j)
              gp[i * d + j] += g[i * total + off + j];
        }
        off += d;
      }
    });
  }
  return out;
}

// Column j of a rank-2 tensor, as a rank-1 tensor.
inline Tensor col(const Tensor& x, std::size_t j) {
  SANE_REQUIRE(x.rank() == 2 && j < x.cols(), "col: column ", j,
               " out of range for ", shape_str(x.shape()));
  const std::size_t m = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) out.data()[i] = x.data()[i * d + j];
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po, m, d, j] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        px->grad[i * d + j] += po->grad[i];
    });
  }
  return out;
}

// Single element as a scalar tensor.
inline Tensor element(const Tensor& x, std::size_t i) {
  SANE_REQUIRE(i < x.size(), "element: index ", i, " out of range for ",
               shape_str(x.shape()));
  Tensor out = Tensor::scalar(x.data()[i]);
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po, i] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      px->grad[i] += po->grad[0];
    });
  }
  return out;
}

// Sum along an axis of a rank-2 tensor (axis=1: row sums -> [m]).
inline Tensor sum_axis(const Tensor& x, std::size_t axis) {
  SANE_REQUIRE(x.rank() == 2 && axis < 2, "sum_axis: needs rank-2 and axis 0/1");
  const std::size_t m = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros({axis == 1 ? m : d});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) ov[axis == 1 ? i : j] += xv[i * d + j];
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po, m, d, axis] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      const double* g = po->grad.data();
      double* gx = px->grad.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[axis == 1 ? i : j];
    });
  }
  return out;
}

inline Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  out.data()[0] = acc;
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (auto& g : px->grad) g += po->grad[0];
    });
  }
  return out;
}

// Inverted dropout; identity when not training or p == 0.
inline Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  SANE_REQUIRE(p >= 0.0 && p < 1.0, "dropout: p=", p, " outside [0,1)");
  if (!training || p == 0.0) return x;
  const double keep = 1.0 - p;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  for (auto& m : *mask) m = rng.uniform() < p ? 0.0 : 1.0 / keep;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = x.data()[i] * (*mask)[i];
  if (detail::grad_needed(x)) {
    auto px = x.ptr(), po = out.ptr();
    detail::record_op(out, [px, po, mask] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t i = 0; i < po->grad.size(); ++i)
        px->grad[i] += po->grad[i] * (*mask)[i];
    });
  }
  return out;
}

enum class SegmentKind { kSum, kMean, kMax };

namespace detail {

inline void check_segments(const std::vector<std::size_t>& seg,
                           std::size_t num_segments, std::size_t rows) {
  SANE_REQUIRE(seg.size() == rows, "segment op: ", seg.size(),
               " segment ids for ", rows, " rows");
  for (std::size_t e = 0; e < seg.size(); ++e) {
    SANE_REQUIRE(seg[e] < num_segments, "segment op: id ", seg[e],
                 " out of range [0,", num_segments, ")");
    if (e > 0)
      SANE_REQUIRE(seg[e - 1] <= seg[e],
                   "segment op: segment_ids not sorted ascending at position ",
                   e);
  }
}

}  // namespace detail

// Per-segment reduction of the rows of `values`. Empty segments yield zero
// rows; max routes gradient to the first maximal element of each segment.
inline Tensor segment_reduce(SegmentKind kind, const Tensor& values,
                             const std::vector<std::size_t>& seg,
                             std::size_t num_segments) {
  const std::size_t e_count = values.rows();
  const std::size_t d = values.cols();
  detail::check_segments(seg, num_segments, e_count);
  Shape shape = values.rank() == 1 ? Shape{num_segments}
                                   : Shape{num_segments, d};
  Tensor out = Tensor::zeros(std::move(shape));
  std::vector<std::size_t> count(num_segments, 0);
  for (std::size_t s : seg) ++count[s];
  const double* v = values.data();
  double* o = out.data();
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  if (kind == SegmentKind::kMax) {
    argmax->assign(num_segments * d, -1);
    for (std::size_t e = 0; e < e_count; ++e) {
      const std::size_t s = seg[e];
      for (std::size_t j = 0; j < d; ++j) {
        auto& am = (*argmax)[s * d + j];
        if (am < 0 || v[e * d + j] > v[static_cast<std::size_t>(am) * d + j]) {
          am = static_cast<std::int64_t>(e);
        }
      }
    }
    for (std::size_t s = 0; s < num_segments; ++s)
      for (std::size_t j = 0; j < d; ++j) {
        const auto am = (*argmax)[s * d + j];
        o[s * d + j] = am < 0 ? 0.0 : v[static_cast<std::size_t>(am) * d + j];
      }
  } else {
    for (std::size_t e = 0; e < e_count; ++e)
      for (std::size_t j = 0; j < d; ++j) o[seg[e] * d + j] += v[e * d + j];
    if (kind == SegmentKind::kMean) {
      for (std::size_t s = 0; s < num_segments; ++s) {
        if (count[s] == 0) continue;
        for (std::size_t j = 0; j < d; ++j)
          o[s * d + j] /= static_cast<double>(count[s]);
      }
    }
  }
  if (detail::grad_needed(values)) {
    auto pv = values.ptr(), po = out.ptr();
    const auto ids = seg;
    detail::record_op(out, [pv, po, ids, d, kind, count, argmax,
                            num_segments] {
      if (!pv->requires_grad) return;
      pv->ensure_grad();
      const double* g = po->grad.data();
      double* gv = pv->grad.data();
      if (kind == SegmentKind::kMax) {
        for (std::size_t s = 0; s < num_segments; ++s)
          for (std::size_t j = 0; j < d; ++j) {
            const auto am = (*argmax)[s * d + j];
            if (am >= 0) gv[static_cast<std::size_t>(am) * d + j] += g[s * d + j];
          }
      } else {
        for (std::size_t e = 0; e < ids.size(); ++e) {
          const std::size_t s = ids[e];
          const double scale =
              kind == SegmentKind::kMean ? 1.0 / static_cast<double>(count[s])
                                         : 1.0;
          for (std::size_t j = 0; j < d; ++j)
            gv[e * d + j] += g[s * d + j] * scale;
        }
      }
    });
  }
  return out;
}

// Softmax of `scores` within each segment, column-wise for rank-2 input.
inline Tensor segment_softmax(const Tensor& scores,
                              const std::vector<std::size_t>& seg,
                              std::size_t num_segments) {
  const std::size_t e_count = scores.rows();
  const std::size_t d = scores.cols();
  detail::check_segments(seg, num_segments, e_count);
  Tensor out = Tensor::zeros(scores.shape());
  // segment e-ranges; ids are sorted so segments are contiguous
  std::vector<std::size_t> begin(num_segments + 1, 0);
  for (std::size_t s : seg) ++begin[s + 1];
  for (std::size_t s = 0; s < num_segments; ++s) begin[s + 1] += begin[s];
  const double* v = scores.data();
  double* o = out.data();
  for (std::size_t s = 0; s < num_segments; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = begin[s]; e < begin[s + 1]; ++e)
        mx = std::max(mx, v[e * d + j]);
      double sum = 0.0;
      for (std::size_t e = begin[s]; e < begin[s + 1]; ++e) {
        o[e * d + j] = std::exp(v[e * d + j] - mx);
        sum += o[e * d + j];
      }
      for (std::size_t e = begin[s]; e < begin[s + 1]; ++e) o[e * d + j] /= sum;
    }
  }
  if (detail::grad_needed(scores)) {
    auto pv = scores.ptr(), po = out.ptr();
    detail::record_op(out, [pv, po, begin, d, num_segments] {
      if (!pv->requires_grad) return;
      pv->ensure_grad();
      const double* g = po->grad.data();
      const double* y = po->values.data();
      double* gv = pv->grad.data();
      for (std::size_t s = 0; s < num_segments; ++s) {
        for (std::size_t j = 0; j < d; ++j) {
          double dot = 0.0;
          for (std::size_t e = begin[s]; e < begin[s + 1]; ++e)
            dot += g[e * d + j] * y[e * d + j];
          for (std::size_t e = begin[s]; e < begin[s + 1]; ++e)
            gv[e * d + j] += y[e * d + j] * (g[e * d + j] - dot);
        }
      }
    });
  }
  return out;
}

// Mean softmax cross-entropy over masked rows.
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    const std::vector<std::int64_t>& labels,
                                    const std::vector<std::uint8_t>& mask) {
  const std::size_t n = logits.rows(), c = logits.cols();
  SANE_REQUIRE(logits.rank() == 2, "softmax_cross_entropy: logits must be N x C");
  SANE_REQUIRE(labels.size() == n && mask.size() == n,
               "softmax_cross_entropy: labels/mask length mismatch (", n,
               " rows, ", labels.size(), " labels, ", mask.size(), " mask)");
  std::size_t nm = 0;
  for (auto m : mask) nm += m ? 1 : 0;
  SANE_REQUIRE(nm >= 1, "softmax_cross_entropy: mask selects no nodes");
  const double* z = logits.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    SANE_REQUIRE(labels[i] >= 0 && labels[i] < static_cast<std::int64_t>(c),
                 "softmax_cross_entropy: label ", labels[i],
                 " out of range at node ", i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, z[i * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[i * c + j] - mx);
    loss += mx + std::log(sum) - z[i * c + static_cast<std::size_t>(labels[i])];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(nm));
  if (detail::grad_needed(logits)) {
    auto pz = logits.ptr(), po = out.ptr();
    const auto lab = labels;
    const auto msk = mask;
    detail::record_op(out, [pz, po, lab, msk, n, c, nm] {
      if (!pz->requires_grad) return;
      pz->ensure_grad();
      const double scale = po->grad[0] / static_cast<double>(nm);
      const double* z = pz->values.data();
      double* gz = pz->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (!msk[i]) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, z[i * c + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[i * c + j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(z[i * c + j] - mx) / sum;
          const double y = j == static_cast<std::size_t>(lab[i]) ? 1.0 : 0.0;
          gz[i * c + j] += scale * (p - y);
        }
      }
    });
  }
  return out;
}

// Mean sigmoid binary cross-entropy over masked rows (multi-label mode).
inline Tensor sigmoid_bce(const Tensor& logits,
                          const std::vector<double>& targets,
                          const std::vector<std::uint8_t>& mask) {
  const std::size_t n = logits.rows(), c = logits.cols();
  SANE_REQUIRE(targets.size() == n * c,
               "sigmoid_bce: target matrix size mismatch");
  SANE_REQUIRE(mask.size() == n, "sigmoid_bce: mask length mismatch");
  std::size_t nm = 0;
  for (auto m : mask) nm += m ? 1 : 0;
  SANE_REQUIRE(nm >= 1, "sigmoid_bce: mask selects no nodes");
  const double* z = logits.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < c; ++j) {
      const double zi = z[i * c + j];
      const double y = targets[i * c + j];
      loss += std::max(zi, 0.0) - zi * y + std::log1p(std::exp(-std::abs(zi)));
    }
  }
  const double denom = static_cast<double>(nm * c);
  Tensor out = Tensor::scalar(loss / denom);
  if (detail::grad_needed(logits)) {
    auto pz = logits.ptr(), po = out.ptr();
    const auto tg = targets;
    const auto msk = mask;
    detail::record_op(out, [pz, po, tg, msk, n, c, denom] {
      if (!pz->requires_grad) return;
      pz->ensure_grad();
      const double scale = po->grad[0] / denom;
      const double* z = pz->values.data();
      double* gz = pz->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (!msk[i]) continue;
        for (std::size_t j = 0; j < c; ++j) {
          const double zi = z[i * c + j];
          const double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                     : std::exp(zi) / (1.0 + std::exp(zi));
          gz[i * c + j] += scale * (s - tg[i * c + j]);
        }
      }
    });
  }
  return out;
}

}  // namespace sane
