#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

// Evaluation metrics: confusion-matrix assembly, accuracy, and quadratically
// weighted Cohen's kappa. Kappa is reported as "undefined" (empty optional)
// when the marginals are degenerate rather than silently zero.

namespace evifuse {

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;  // row-major; (truth, prediction)

  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * num_classes + pred];
  }
  std::uint64_t& at(std::size_t truth, std::size_t pred) {
    return counts[truth * num_classes + pred];
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const std::uint64_t c : counts) t += c;
    return t;
  }
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                                 const std::vector<std::size_t>& truths,
                                 std::size_t num_classes) {
  if (preds.size() != truths.size() || preds.empty()) {
    throw std::invalid_argument("confusion: need equal non-zero prediction/truth lengths");
  }
  if (num_classes < 2) throw std::invalid_argument("confusion: need at least two classes");
  ConfusionMatrix cm{num_classes, std::vector<std::uint64_t>(num_classes * num_classes, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= num_classes || truths[i] >= num_classes) {
      throw std::invalid_argument("confusion: class index out of range at sample " +
                                  std::to_string(i));
    }
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t j = 0; j < cm.num_classes; ++j) trace += cm.at(j, j);
  return static_cast<double>(trace) / static_cast<double>(total);
}

/// kappa = 1 - sum(w o) / sum(w e) with w_tp = (t-p)^2 / (K-1)^2, o the
/// observed proportions, and e the outer product of the marginals. Undefined
/// (empty) when the expected disagreement is zero.
inline std::optional<double> quadratic_weighted_kappa(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("kappa: empty confusion matrix");
  const std::size_t k = cm.num_classes;
  std::vector<double> row(k, 0.0);
  std::vector<double> col(k, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t p = 0; p < k; ++p) {
      const double o = static_cast<double>(cm.at(t, p)) / static_cast<double>(total);
      row[t] += o;
      col[p] += o;
    }
  }
  const double denom_scale = static_cast<double>((k - 1) * (k - 1));
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t p = 0; p < k; ++p) {
      const double diff = static_cast<double>(t) - static_cast<double>(p);
      const double w = diff * diff / denom_scale;
      observed += w * static_cast<double>(cm.at(t, p)) / static_cast<double>(total);
      expected += w * row[t] * col[p];
    }
  }
  if (expected == 0.0) return std::nullopt;
  return 1.0 - observed / expected;
}

}  // namespace evifuse
