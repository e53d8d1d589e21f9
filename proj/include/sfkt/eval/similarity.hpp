#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <vector>

#include "sfkt/core/graph.hpp"
#include "sfkt/core/tensor.hpp"
#include "sfkt/model/total_term.hpp"

namespace sfkt {

/// Cosine similarities between the projected representations of practice
/// counts 0..max_count. Entry (i,j) compares the projector output for raw
/// count i with the one for raw count j.
struct SimilarityMatrix {
  std::size_t n = 0;            // matrix side, max_count + 1
  std::vector<double> values;   // row-major n*n
  bool degenerate = false;      // some vector had zero norm

  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

enum class CountSide : std::uint8_t { kSuccess = 0, kFailure = 1 };

template <typename Real>
SimilarityMatrix practice_number_similarity(AutoProjector<Real>& projector,
                                            std::size_t max_count) {
  const std::size_t n = max_count + 1;
  std::vector<std::vector<double>> vectors;
  vectors.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    Graph<Real> g;
    const auto m = projector.project(g, static_cast<double>(c));
    std::vector<double> v(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
      v[j] = static_cast<double>(m.values()[j]);
    }
    vectors.push_back(std::move(v));
  }

  SimilarityMatrix sim;
  sim.n = n;
  sim.values.assign(n * n, 0.0);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(std::inner_product(vectors[i].begin(), vectors[i].end(),
                                            vectors[i].begin(), 0.0));
    if (norms[i] == 0.0) sim.degenerate = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double value = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        const double dot = std::inner_product(
            vectors[i].begin(), vectors[i].end(), vectors[j].begin(), 0.0);
        value = dot / (norms[i] * norms[j]);
      }
      sim.at(i, j) = value;
      sim.at(j, i) = value;
    }
  }
  return sim;
}

inline void write_similarity_csv(std::ostream& out, const SimilarityMatrix& sim) {
  out << "count";
  for (std::size_t j = 0; j < sim.n; ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < sim.n; ++i) {
    out << i;
    for (std::size_t j = 0; j < sim.n; ++j) out << ',' << sim.at(i, j);
    out << '\n';
  }
}

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && xs[order[j]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace detail

/// Spearman rank correlation between two samples: Pearson correlation of
/// their average ranks. Returns 0 when either side is constant.
inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  require(a.size() == b.size(), "spearman: length mismatch");
  require(a.size() >= 2, "spearman: need at least two samples");
  const auto ra = detail::average_ranks(a);
  const auto rb = detail::average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

/// How strongly similarity falls off with the gap between two counts:
/// Spearman correlation of |i - j| against sim(i, j) over the strict upper
/// triangle. A projector that maps nearby counts to nearby vectors scores
/// close to -1. Reported as a diagnostic, not gated.
inline double similarity_distance_trend(const SimilarityMatrix& sim) {
  require(sim.n >= 3, "similarity_distance_trend: matrix too small");
  std::vector<double> gaps, sims;
  for (std::size_t i = 0; i < sim.n; ++i) {
    for (std::size_t j = i + 1; j < sim.n; ++j) {
      gaps.push_back(static_cast<double>(j - i));
      sims.push_back(sim.at(i, j));
    }
  }
  return spearman(gaps, sims);
}

}  // namespace sfkt
