#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/graph.hpp"
#include "sfkt/core/tensor.hpp"
#include "sfkt/data/interaction.hpp"
#include "sfkt/data/pipeline.hpp"

namespace sfkt {

/// Log min-max normalization of a raw prior count into [0, 1]. All inputs
/// are shifted by one before the log so a count of zero stays finite. The
/// result only depends on ratios of shifted counts, so the log base cancels.
/// Out-of-range counts (seen at test time when a student practices more
/// than anyone did during training) clamp to the boundary.
inline double normalize_count(double count, double count_min, double count_max) {
  const double lo = std::log(count_min + 1.0);
  const double hi = std::log(count_max + 1.0);
  if (!(hi > lo)) return 0.0;  // all training counts equal
  const double xhat = (std::log(count + 1.0) - lo) / (hi - lo);
  return std::clamp(xhat, 0.0, 1.0);
}

/// Maps a normalized count to one of `buckets` embedding rows. The top of
/// the range lands exactly in the last bucket.
inline std::size_t bucket_index(double xhat, std::size_t buckets) {
  require(buckets >= 2, "bucket_index needs at least 2 buckets");
  require(xhat >= 0.0 && xhat <= 1.0, "normalized count out of [0,1]");
  const auto raw = static_cast<std::size_t>(
      std::floor(xhat * static_cast<double>(buckets - 1)));
  return std::min(raw, buckets - 1);
}

/// Turns one raw practice count into a d-vector: normalize, pick a bucket
/// embedding, compute soft weights over M meta-numbers from the scaled
/// bucket vector, and blend the meta-number embeddings with those weights.
/// Each side (successes, failures) owns an independent instance.
template <typename Real>
struct AutoProjector {
  Parameter<Real> bucket_table;  // [B, d]
  Parameter<Real> weight;        // [M, d]
  Parameter<Real> bias;          // [M]
  Parameter<Real> meta_table;    // meta-number embeddings, stored [M, d]
  double count_min = 0.0;
  double count_max = 0.0;
  bool stats_valid = false;

  AutoProjector(const std::string& prefix, std::size_t buckets,
                std::size_t meta_numbers, std::size_t dim)
      : bucket_table(prefix + ".bucket_table",
                     Tensor<Real>::mat(buckets, dim)),
        weight(prefix + ".weight", Tensor<Real>::mat(meta_numbers, dim)),
        bias(prefix + ".bias", Tensor<Real>::vec(meta_numbers)),
        meta_table(prefix + ".meta_table",
                   Tensor<Real>::mat(meta_numbers, dim)) {}

  std::size_t buckets() const { return bucket_table.value.rows(); }
  std::size_t meta_numbers() const { return weight.value.rows(); }
  std::size_t dim() const { return bucket_table.value.cols(); }

  void set_stats(const CountStats& stats) {
    count_min = stats.min;
    count_max = stats.max;
    stats_valid = stats.valid;
  }

  double normalize(double count) const {
    if (!stats_valid) return 0.0;
    return normalize_count(count, count_min, count_max);
  }

  /// m_x for one count. The normalized value scales the bucket embedding,
  /// the attention weights are sigmoid(W (xhat * b) + bias), and the output
  /// mixes meta-number rows: sum_m alpha_m * meta[m].
  Value<Real> project(Graph<Real>& g, double count) {
    const double xhat = normalize(count);
    const auto bucket = g.gather_row(g.param(bucket_table),
                                     static_cast<std::uint32_t>(
                                         bucket_index(xhat, buckets())));
    const auto scaled = g.scale(bucket, static_cast<Real>(xhat));
    const auto alpha =
        g.sigmoid(g.affine(g.param(weight), scaled, g.param(bias)));
    return g.matvec_t(g.param(meta_table), alpha);
  }
};

/// Aggregates one step's prior practice into a fixed-size feature. For each
/// of the step's concepts, the success and failure counts are projected
/// through their own AutoProjector, gated against per-concept embeddings,
/// summed over concepts, and fused by one affine layer. Cost depends on the
/// concept count, never on how long the history is.
template <typename Real>
struct TotalTermEncoder {
  AutoProjector<Real> success;
  AutoProjector<Real> failure;
  Parameter<Real> concept_success;  // [N_c + 1, d]
  Parameter<Real> concept_failure;  // [N_c + 1, d]
  Parameter<Real> fuse_weight;      // [d, 2d]
  Parameter<Real> fuse_bias;        // [d]

  TotalTermEncoder(std::size_t concept_rows, std::size_t buckets,
                   std::size_t meta_numbers, std::size_t dim)
      : success("total_term.success", buckets, meta_numbers, dim),
        failure("total_term.failure", buckets, meta_numbers, dim),
        concept_success("total_term.concept_success",
                        Tensor<Real>::mat(concept_rows, dim)),
        concept_failure("total_term.concept_failure",
                        Tensor<Real>::mat(concept_rows, dim)),
        fuse_weight("total_term.fuse_weight", Tensor<Real>::mat(dim, 2 * dim)),
        fuse_bias("total_term.fuse_bias", Tensor<Real>::vec(dim)) {}

  Value<Real> feature(Graph<Real>& g, std::span<const std::uint32_t> concepts,
                      std::span<const CountPair> counts) {
    require(!concepts.empty(), "total-term feature needs at least one concept");
    require(concepts.size() == counts.size(),
            "one count pair per concept required");

    std::vector<Value<Real>> success_terms;
    std::vector<Value<Real>> failure_terms;
    success_terms.reserve(concepts.size());
    failure_terms.reserve(concepts.size());
    for (std::size_t i = 0; i < concepts.size(); ++i) {
      const auto m_s = success.project(g, static_cast<double>(counts[i].success));
      const auto m_f = failure.project(g, static_cast<double>(counts[i].failure));
      const auto e_s = g.gather_row(g.param(concept_success), concepts[i]);
      const auto e_f = g.gather_row(g.param(concept_failure), concepts[i]);
      success_terms.push_back(g.mul(m_s, e_s));
      failure_terms.push_back(g.mul(m_f, e_f));
    }
    const auto joined = g.concat(std::array<Value<Real>, 2>{
        g.add_n(success_terms), g.add_n(failure_terms)});
    return g.affine(g.param(fuse_weight), joined, g.param(fuse_bias));
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    fn(success.bucket_table);
    fn(success.weight);
    fn(success.bias);
    fn(success.meta_table);
    fn(failure.bucket_table);
    fn(failure.weight);
    fn(failure.bias);
    fn(failure.meta_table);
    fn(concept_success);
    fn(concept_failure);
    fn(fuse_weight);
    fn(fuse_bias);
  }
};

}  // namespace sfkt
