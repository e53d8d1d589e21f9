#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/errors.hpp"
#include "sfkt/core/graph.hpp"
#include "sfkt/core/tensor.hpp"

namespace sfkt {

template <typename Real>
double global_grad_norm(std::span<Parameter<Real>* const> params) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (const auto gv : p->grad.data) {
      const double g = static_cast<double>(gv);
      sq += g * g;
    }
  }
  return std::sqrt(sq);
}

/// Scales all gradients down so their global L2 norm is at most max_norm.
/// Throws GradientError on a non-finite norm so the caller can abort the
/// epoch with a diagnostic instead of poisoning the parameters.
template <typename Real>
void clip_gradients(std::span<Parameter<Real>* const> params, double max_norm) {
  require(max_norm > 0.0, "clip_gradients: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) {
    throw GradientError("non-finite gradient norm before optimizer step");
  }
  if (norm <= max_norm) return;
  const Real factor = static_cast<Real>(max_norm / norm);
  for (auto* p : params) {
    for (auto& g : p->grad.data) g *= factor;
  }
}

/// Adam moments, one slot per parameter in registration order.
template <typename Real>
struct AdamState {
  struct Slot {
    Tensor<Real> m;
    Tensor<Real> v;
  };
  std::vector<Slot> slots;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::span<Parameter<Real>* const> params) {
    slots.reserve(params.size());
    for (const auto* p : params) {
      slots.push_back({Tensor<Real>(p->value.shape), Tensor<Real>(p->value.shape)});
    }
  }
};

/// One bias-corrected Adam update in place, from the gradients currently
/// accumulated on the parameters.
template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, AdamState<Real>& state,
               double lr) {
  require(params.size() == state.slots.size(),
          "adam_step: parameter list does not match optimizer state");
  require(lr > 0.0, "adam_step: lr must be positive");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<Real>& p = *params[pi];
    if (!p.trainable) continue;
    auto& slot = state.slots[pi];
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = static_cast<double>(p.grad.data[i]);
      if (!std::isfinite(g)) {
        throw GradientError("non-finite gradient in parameter " + p.name);
      }
      const double m = state.beta1 * static_cast<double>(slot.m.data[i]) +
                       (1.0 - state.beta1) * g;
      const double v = state.beta2 * static_cast<double>(slot.v.data[i]) +
                       (1.0 - state.beta2) * g * g;
      slot.m.data[i] = static_cast<Real>(m);
      slot.v.data[i] = static_cast<Real>(v);
      const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
      p.value.data[i] = static_cast<Real>(static_cast<double>(p.value.data[i]) - update);
    }
  }
}

}  // namespace sfkt
