#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "transnet/tensor.hpp"

namespace transnet {

/// Fraction of rows whose argmax equals the label; ties go to the smaller
/// class index.
double accuracy(const Tensor& probabilities, std::span<const int> labels);

/// Argmax per row, ties to the smaller index.
std::vector<int> predicted_classes(const Tensor& probabilities);

/// Column `cls` of (N, K) probabilities.
std::vector<double> class_scores(const Tensor& probabilities, std::size_t cls = 1);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold +inf first, lowest score last
  double auc = 0.0;
};

/// Binary ROC: a sample is predicted positive when score >= threshold. Equal
/// scores share one step, so the trapezoid area equals the Mann-Whitney
/// statistic. Labels are 0/1 (anything nonzero counts as positive). Throws
/// UsageError("ROC undefined ...") when only one class is present and
/// DataError for NaN scores.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half. O(P * N); the oracle for roc_curve.
double auc_from_pairs(std::span<const double> scores, std::span<const int> labels);

/// CSV with header `threshold,fpr,tpr`, shortest round-trip formatting.
void write_roc_csv(std::ostream& out, const RocCurve& curve);

}  // namespace transnet
