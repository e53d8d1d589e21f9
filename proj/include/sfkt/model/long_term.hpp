#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/graph.hpp"
#include "sfkt/core/tensor.hpp"

namespace sfkt {

/// Sinusoidal encoding of the distance between the target step and a history
/// step. Row delta holds sin(delta / 10000^(2j/d)) in even slots and
/// cos of the same angle in odd slots. Distances are at least 1; row 0 is
/// kept zero so the table can be indexed directly by delta up to max_interval.
template <typename Real>
Tensor<Real> positional_table(std::size_t max_interval, std::size_t dim) {
  require(dim >= 1, "positional_table: dim must be at least 1");
  Tensor<Real> pe = Tensor<Real>::mat(max_interval + 1, dim);
  for (std::size_t delta = 1; delta <= max_interval; ++delta) {
    for (std::size_t j = 0; j < dim; j += 2) {
      const double angle =
          static_cast<double>(delta) /
          std::pow(10000.0, static_cast<double>(j) / static_cast<double>(dim));
      pe.at(delta, j) = static_cast<Real>(std::sin(angle));
      if (j + 1 < dim) pe.at(delta, j + 1) = static_cast<Real>(std::cos(angle));
    }
  }
  return pe;
}

inline std::vector<double> positional_encoding(std::size_t interval,
                                               std::size_t dim) {
  require(interval >= 1, "positional_encoding: interval must be at least 1");
  const auto table = positional_table<double>(interval, dim);
  return {table.data.begin() + static_cast<std::ptrdiff_t>(interval * dim),
          table.data.begin() + static_cast<std::ptrdiff_t>((interval + 1) * dim)};
}

/// Attention over the in-window history. Queries come from the target's
/// question and concept embeddings, keys from each history item's question
/// and concept embeddings, values from the practice embedding plus the
/// positional encoding of the distance to the target. A step with no
/// history gets a dedicated trainable vector instead.
template <typename Real>
struct LongTermEncoder {
  Parameter<Real> query_weight;  // [d, 2d]
  Parameter<Real> key_weight;    // [d, 2d]
  Parameter<Real> value_weight;  // [d, d]
  Parameter<Real> empty_history; // [d]
  Tensor<Real> pe;               // [max_len + 1, d]
  bool scale_logits = false;

  LongTermEncoder(std::size_t dim, std::size_t max_len, bool scale = false)
      : query_weight("long_term.query_weight", Tensor<Real>::mat(dim, 2 * dim)),
        key_weight("long_term.key_weight", Tensor<Real>::mat(dim, 2 * dim)),
        value_weight("long_term.value_weight", Tensor<Real>::mat(dim, dim)),
        empty_history("long_term.empty_history", Tensor<Real>::vec(dim)),
        pe(positional_table<Real>(max_len, dim)),
        scale_logits(scale) {}

  std::size_t dim() const { return value_weight.value.rows(); }
  std::size_t max_interval() const { return pe.rows() - 1; }

  /// One history step before projection. key_input is the step's q and
  /// concept-mean embeddings concatenated; practice is its full practice
  /// embedding; interval is the distance to the target step, at least 1.
  struct HistoryItem {
    Value<Real> practice;
    Value<Real> key_input;
    std::uint32_t interval = 1;
  };

  /// Keys and values projected once, reusable across the clean and the
  /// perturbed query for the same record.
  struct PreparedHistory {
    std::vector<Value<Real>> keys;
    std::vector<Value<Real>> values;
  };

  PreparedHistory prepare(Graph<Real>& g, std::span<const HistoryItem> items) {
    PreparedHistory prep;
    prep.keys.reserve(items.size());
    prep.values.reserve(items.size());
    for (const auto& item : items) {
      require(item.interval >= 1 && item.interval <= max_interval(),
              "history interval out of range");
      prep.keys.push_back(g.matvec(g.param(key_weight), item.key_input));
      const auto pe_row = g.constant(std::span<const Real>(
          pe.data.data() + std::size_t(item.interval) * dim(), dim()));
      prep.values.push_back(g.matvec(g.param(value_weight),
                                     g.add(item.practice, pe_row)));
    }
    return prep;
  }

  /// Softmax attention of the target over the prepared history.
  Value<Real> attend(Graph<Real>& g, Value<Real> target_qc,
                     const PreparedHistory& prep) {
    if (prep.keys.empty()) return g.param(empty_history);
    const auto query = g.matvec(g.param(query_weight), target_qc);
    auto logits = g.dots(query, prep.keys);
    if (scale_logits) {
      logits = g.scale(logits,
                       Real(1) / static_cast<Real>(std::sqrt(double(dim()))));
    }
    return g.weighted_sum(g.softmax(logits), prep.values);
  }

  Value<Real> feature(Graph<Real>& g, Value<Real> target_qc,
                      std::span<const HistoryItem> items) {
    const auto prep = prepare(g, items);
    return attend(g, target_qc, prep);
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    fn(query_weight);
    fn(key_weight);
    fn(value_weight);
    fn(empty_history);
  }
};

}  // namespace sfkt
