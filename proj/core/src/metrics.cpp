#include "transnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "transnet/error.hpp"

namespace transnet {

std::vector<int> predicted_classes(const Tensor& probabilities) {
  const auto view = probabilities.as_matrix();
  std::vector<int> out(view.rows);
  for (std::size_t i = 0; i < view.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < view.cols; ++j) {
      if (view(i, j) > view(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Tensor& probabilities, std::span<const int> labels) {
  const auto pred = predicted_classes(probabilities);
  if (pred.empty()) throw UsageError("accuracy: no rows");
  if (pred.size() != labels.size()) {
    throw DataError(fmt::format("accuracy: {} rows but {} labels", pred.size(), labels.size()));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<double> class_scores(const Tensor& probabilities, std::size_t cls) {
  const auto view = probabilities.as_matrix();
  if (cls >= view.cols) throw ShapeError(fmt::format("class {} out of range", cls));
  std::vector<double> out(view.rows);
  for (std::size_t i = 0; i < view.rows; ++i) out[i] = view(i, cls);
  return out;
}

namespace {

std::pair<std::size_t, std::size_t> count_classes(std::span<const double> scores,
                                                  std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DataError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError("ROC: NaN score");
    pos += labels[i] != 0 ? 1 : 0;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw UsageError("ROC undefined: both positive and negative samples are required");
  }
  return {pos, neg};
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = count_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    // Whole tie block moves at once.
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    const auto& prev = curve.points.back();
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    area += (fpr - prev.fpr) * (tpr + prev.tpr) * 0.5;
    curve.points.push_back({threshold, fpr, tpr});
  }
  curve.auc = area;
  return curve;
}

double auc_from_pairs(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = count_classes(scores, labels);
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) fmt::print(out, "{},{},{}\n", p.threshold, p.fpr, p.tpr);
}

}  // namespace transnet
