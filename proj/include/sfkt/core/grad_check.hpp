#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfkt/core/graph.hpp"
#include "sfkt/core/rng.hpp"

namespace sfkt {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central finite-difference check of analytic gradients.
///
/// Contract: `params[i]->grad` already holds dL/dtheta for the loss computed
/// by `loss` (zero grads, run one forward+backward, then call this). `loss`
/// must be a pure forward evaluation, deterministic under repeated calls
/// (reseed any internal rng per call), and is invoked twice per coordinate
/// at theta +/- eps.
///
/// n_coords == 0 scans every coordinate; otherwise that many are sampled
/// uniformly over all parameter elements. Relative error uses a 1e-8
/// denominator guard. A non-finite loss is fatal.
template <typename Real, typename LossFn>
GradCheckReport finite_difference_check(std::span<Parameter<Real>* const> params,
                                        LossFn&& loss, std::size_t n_coords,
                                        Rng& rng, double eps = 1e-4) {
  const double base = static_cast<double>(loss());
  if (!std::isfinite(base)) throw std::runtime_error("finite_difference_check: non-finite loss");

  std::vector<std::size_t> offsets(params.size() + 1, 0);
  for (std::size_t i = 0; i < params.size(); ++i)
    offsets[i + 1] = offsets[i] + params[i]->size();
  const std::size_t total = offsets.back();
  require(total > 0, "finite_difference_check: no parameters");

  GradCheckReport report;
  const std::size_t count = n_coords == 0 ? total : n_coords;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t flat =
        n_coords == 0 ? c : static_cast<std::size_t>(rng.next_below(total));
    std::size_t pi = 0;
    while (offsets[pi + 1] <= flat) ++pi;
    Parameter<Real>& p = *params[pi];
    const std::size_t j = flat - offsets[pi];

    const Real saved = p.value.data[j];
    p.value.data[j] = saved + static_cast<Real>(eps);
    const double up = static_cast<double>(loss());
    p.value.data[j] = saved - static_cast<Real>(eps);
    const double down = static_cast<double>(loss());
    p.value.data[j] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("finite_difference_check: non-finite loss at perturbed point");

    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = static_cast<double>(p.grad.data[j]);
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coords_checked;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = p.name;
      report.worst_index = j;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace sfkt
