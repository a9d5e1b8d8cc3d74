#pragma once

#include <cstdint>
#include <vector>

#include "sane/common.hpp"
#include "sane/graph.hpp"
#include "sane/ops.hpp"
#include "sane/tensor.hpp"

namespace sane {

// Task loss for a masked node set: softmax cross-entropy for single-label
// graphs, sigmoid BCE for multi-label ones.
inline Tensor graph_loss(const Tensor& logits, const Graph& g,
                         const std::vector<std::uint8_t>& mask) {
  if (g.multi_label) return sigmoid_bce(logits, g.label_matrix, mask);
  return softmax_cross_entropy(logits, g.labels, mask);
}

inline double accuracy_of_logits(const Tensor& logits, const Graph& g,
                                 const std::vector<std::uint8_t>& mask) {
  const std::size_t n = logits.rows(), c = logits.cols();
  std::size_t hit = 0, total = 0;
  const double* z = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (z[i * c + j] > z[i * c + best]) best = j;
    hit += static_cast<std::int64_t>(best) == g.labels[i] ? 1 : 0;
    ++total;
  }
  SANE_REQUIRE(total > 0, "accuracy: empty split");
  return static_cast<double>(hit) / static_cast<double>(total);
}

// Micro-F1 with threshold 0.5 on sigmoid outputs (logit > 0). When there
// are no positives anywhere, predicted or true, the score is defined as 1.
inline double micro_f1_of_logits(const Tensor& logits, const Graph& g,
                                 const std::vector<std::uint8_t>& mask) {
  const std::size_t n = logits.rows(), c = logits.cols();
  std::size_t tp = 0, fp = 0, fn = 0, total = 0;
  const double* z = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    ++total;
    for (std::size_t j = 0; j < c; ++j) {
      const bool pred = z[i * c + j] > 0.0;
      const bool truth = g.label_matrix[i * c + j] != 0.0;
      if (pred && truth) ++tp;
      else if (pred) ++fp;
      else if (truth) ++fn;
    }
  }
  SANE_REQUIRE(total > 0, "micro_f1: empty split");
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) /
         static_cast<double>(2 * tp + fp + fn);
}

inline double metric_of_logits(const Tensor& logits, const Graph& g,
                               const std::vector<std::uint8_t>& mask) {
  return g.multi_label ? micro_f1_of_logits(logits, g, mask)
                       : accuracy_of_logits(logits, g, mask);
}

inline const char* metric_name(const Graph& g) {
  return g.multi_label ? "micro-F1" : "accuracy";
}

}  // namespace sane
