#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace emte::eval {

/// counts[predicted][actual]: rows are the output class, columns the target
/// class.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t n = 0) : classes(n), counts(n * n, 0) {}
  std::uint64_t& at(std::size_t predicted, std::size_t actual) {
    return counts[predicted * classes + actual];
  }
  std::uint64_t at(std::size_t predicted, std::size_t actual) const {
    return counts[predicted * classes + actual];
  }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels, std::size_t classes);

// Flags for ratios whose denominator is zero; such values are reported as 0.
inline constexpr unsigned kPrecisionUndefined = 1;
inline constexpr unsigned kRecallUndefined = 2;

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  unsigned undefined = 0;
};

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  unsigned undefined = 0;  // union of the per-class flags (macro only)

  bool f1_undefined() const { return undefined != 0; }
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  Averages macro;  // unweighted mean of the per-class values
  Averages micro;  // ratios of the pooled TP/FP/FN/TN counts
  double accuracy = 0.0;
  std::uint64_t total = 0;
};

/// One-vs-rest metrics per class. Throws std::invalid_argument on an empty
/// matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

/// "99.7%", "100.0%", or "NaN%" when undefined.
std::string percent(double fraction, bool undefined = false);

struct RenderedReport {
  std::string text;  // confusion plot layout with precision column and recall row
  std::string csv;   // class,TP,FP,FN,TN,PRE,REC,F1,FPR,undefined_flag + summary rows
};

RenderedReport render_report(const ConfusionMatrix& cm, const MetricsReport& report);

}  // namespace emte::eval
