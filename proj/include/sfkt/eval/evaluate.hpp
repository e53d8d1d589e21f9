#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sfkt/data/pipeline.hpp"
#include "sfkt/eval/metrics.hpp"
#include "sfkt/model/network.hpp"

namespace sfkt {

/// Clean-forward scores for the given records, annotated with the context
/// the bucketed report needs.
template <typename Real>
std::vector<Prediction> collect_predictions(
    SfktModel<Real>& model, const Dataset& data,
    std::span<const std::uint32_t> record_ids) {
  std::vector<Prediction> out;
  out.reserve(record_ids.size());
  for (const auto id : record_ids) {
    const auto& rec = data.records[id];
    const auto& seq = data.sequence_of(rec);
    Graph<Real> g;
    const auto enc = model.encode(g, data, rec);
    Prediction p;
    p.student = seq.student;
    p.step = rec.pos + 1;
    p.total_len = static_cast<std::uint32_t>(seq.steps.size());
    p.score = static_cast<double>(model.predict(g, enc).scalar_value());
    p.label = data.step_of(rec).response;
    out.push_back(p);
  }
  return out;
}

template <typename Real>
std::optional<double> validation_auc(SfktModel<Real>& model, const Dataset& data,
                                     std::span<const std::uint32_t> record_ids) {
  if (record_ids.empty()) return std::nullopt;
  const auto preds = collect_predictions(model, data, record_ids);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  scores.reserve(preds.size());
  labels.reserve(preds.size());
  for (const auto& p : preds) {
    scores.push_back(p.score);
    labels.push_back(p.label);
  }
  return auc(scores, labels);
}

}  // namespace sfkt
