#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/tensor.hpp"

namespace sfkt {

/// One scored test instance, with enough context to bucket it by how long
/// the student's full sequence is.
struct Prediction {
  std::uint32_t student = 0;
  std::uint32_t step = 0;       // 1-based global step within the sequence
  std::uint32_t total_len = 0;  // full sequence length of the student
  double score = 0.0;
  std::uint8_t label = 0;
};

/// Area under the ROC curve via the rank statistic: average ranks over tied
/// scores, sum the positive ranks. Absent when only one class is present.
inline std::optional<double> auc(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (const auto y : labels) n_pos += y != 0 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share the average rank
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double pos = static_cast<double>(n_pos);
  const double neg = static_cast<double>(n_neg);
  return (rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// Accuracy at threshold 0.5; a score of exactly 0.5 counts as positive.
inline std::optional<double> accuracy(std::span<const double> scores,
                                      std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(),
          "accuracy: scores/labels length mismatch");
  if (scores.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::uint8_t predicted = scores[i] >= 0.5 ? 1 : 0;
    hits += predicted == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

struct BucketMetrics {
  std::string range;  // e.g. "(10,50]"
  std::size_t count = 0;
  std::optional<double> acc;
  std::optional<double> auc;
};

struct EvalReport {
  std::size_t count = 0;
  std::optional<double> acc;
  std::optional<double> auc;
  std::vector<BucketMetrics> buckets;
};

/// Overall metrics plus a breakdown by the student's total sequence length.
/// The default edges carve (0,10], (10,50], (50,100], (100,200], (200,inf).
/// AUC is absent for any stratum with a single label class.
inline EvalReport bucketed_report(
    std::span<const Prediction> predictions,
    std::span<const std::uint32_t> edges = std::span<const std::uint32_t>()) {
  static constexpr std::uint32_t kDefaultEdges[] = {10, 50, 100, 200};
  if (edges.empty()) edges = kDefaultEdges;
  for (std::size_t i = 1; i < edges.size(); ++i) {
    require(edges[i - 1] < edges[i], "bucket edges must be increasing");
  }

  const auto metrics_of = [](std::span<const Prediction> subset,
                             std::optional<double>& out_acc,
                             std::optional<double>& out_auc) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    scores.reserve(subset.size());
    labels.reserve(subset.size());
    for (const auto& p : subset) {
      scores.push_back(p.score);
      labels.push_back(p.label);
    }
    out_acc = accuracy(scores, labels);
    out_auc = auc(scores, labels);
  };

  EvalReport report;
  report.count = predictions.size();
  metrics_of(predictions, report.acc, report.auc);

  const std::size_t n_buckets = edges.size() + 1;
  std::vector<std::vector<Prediction>> strata(n_buckets);
  for (const auto& p : predictions) {
    std::size_t b = 0;
    while (b < edges.size() && p.total_len > edges[b]) ++b;
    strata[b].push_back(p);
  }
  for (std::size_t b = 0; b < n_buckets; ++b) {
    BucketMetrics bm;
    const std::string lo = b == 0 ? "0" : std::to_string(edges[b - 1]);
    bm.range = b < edges.size()
                   ? "(" + lo + "," + std::to_string(edges[b]) + "]"
                   : "(" + lo + ",inf)";
    bm.count = strata[b].size();
    metrics_of(strata[b], bm.acc, bm.auc);
    report.buckets.push_back(std::move(bm));
  }
  return report;
}

}  // namespace sfkt
