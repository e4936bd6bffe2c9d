#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qclass/error.hpp"

namespace qclass {

/// counts[gold][predicted].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t class_count = 0)
      : n_(class_count), counts_(class_count * class_count, 0) {}

  void add(std::size_t gold, std::size_t predicted) {
    if (gold >= n_ || predicted >= n_) throw DataError("confusion matrix: label out of range");
    ++counts_[gold * n_ + predicted];
  }

  [[nodiscard]] std::size_t at(std::size_t gold, std::size_t predicted) const { return counts_.at(gold * n_ + predicted); }
  [[nodiscard]] std::size_t class_count() const { return n_; }

  [[nodiscard]] std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  [[nodiscard]] std::size_t true_positives(std::size_t c) const { return at(c, c); }

  [[nodiscard]] std::size_t false_positives(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t g = 0; g < n_; ++g) s += g == c ? 0 : at(g, c);
    return s;
  }

  [[nodiscard]] std::size_t false_negatives(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += p == c ? 0 : at(c, p);
    return s;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                                        std::size_t class_count) {
  if (gold.size() != predicted.size()) throw DataError("confusion matrix: gold and predicted lengths differ");
  ConfusionMatrix m(class_count);
  for (std::size_t i = 0; i < gold.size(); ++i) m.add(gold[i], predicted[i]);
  return m;
}

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
};

struct Averages {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  Averages macro;
  Averages micro;
  Averages weighted;
  double accuracy = 0;
  std::size_t averaged_classes = 0;  // classes that entered the macro mean
  bool zero_division = false;        // some 0/0 was resolved to 0
};

inline double safe_ratio(std::size_t num, std::size_t den, bool& zero_division) {
  if (den == 0) {
    zero_division = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_score(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Per-class precision = TP / (TP + FP), recall = TP / (TP + FN),
/// F1 = 2PR / (P + R), with every 0/0 taken as 0.
///
/// Only the first `scored_classes` rows/columns are scored (default: all);
/// extra columns can hold outcomes such as "routed elsewhere" that count as
/// misses without being a class of their own. Macro and weighted averages
/// run over the scored classes that occur in gold or predictions, so a fold
/// that happens not to contain a rare class is not charged a zero for it.
inline MetricsReport precision_recall_f1(const ConfusionMatrix& m, std::optional<std::size_t> scored_classes = {}) {
  const std::size_t n = scored_classes.value_or(m.class_count());
  if (n > m.class_count()) throw std::invalid_argument("precision_recall_f1: scored_classes exceeds class count");
  MetricsReport r;
  r.per_class.resize(n);
  std::size_t tp_sum = 0;
  std::size_t fp_sum = 0;
  std::size_t fn_sum = 0;
  std::size_t support_sum = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const auto tp = m.true_positives(c);
    const auto fp = m.false_positives(c);
    const auto fn = m.false_negatives(c);
    auto& cm = r.per_class[c];
    cm.support = tp + fn;
    cm.predicted = tp + fp;
    cm.precision = safe_ratio(tp, tp + fp, r.zero_division);
    cm.recall = safe_ratio(tp, tp + fn, r.zero_division);
    cm.f1 = f1_score(cm.precision, cm.recall);
    tp_sum += tp;
    fp_sum += fp;
    fn_sum += fn;
    support_sum += cm.support;
    if (cm.support + cm.predicted == 0) continue;
    ++r.averaged_classes;
    r.macro.precision += cm.precision;
    r.macro.recall += cm.recall;
    r.macro.f1 += cm.f1;
    const double w = static_cast<double>(cm.support);
    r.weighted.precision += w * cm.precision;
    r.weighted.recall += w * cm.recall;
    r.weighted.f1 += w * cm.f1;
  }
  if (r.averaged_classes > 0) {
    const double k = static_cast<double>(r.averaged_classes);
    r.macro.precision /= k;
    r.macro.recall /= k;
    r.macro.f1 /= k;
  }
  if (support_sum > 0) {
    const double s = static_cast<double>(support_sum);
    r.weighted.precision /= s;
    r.weighted.recall /= s;
    r.weighted.f1 /= s;
  }
  bool ignored = false;
  r.micro.precision = safe_ratio(tp_sum, tp_sum + fp_sum, ignored);
  r.micro.recall = safe_ratio(tp_sum, tp_sum + fn_sum, ignored);
  r.micro.f1 = f1_score(r.micro.precision, r.micro.recall);
  r.accuracy = safe_ratio(tp_sum, m.total(), ignored);
  return r;
}

}  // namespace qclass
