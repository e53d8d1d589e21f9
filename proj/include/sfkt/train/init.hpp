#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sfkt/core/rng.hpp"
#include "sfkt/core/tensor.hpp"
#include "sfkt/model/network.hpp"

namespace sfkt {

/// Xavier uniform fill for matrices: values drawn from [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)), fan_in = cols, fan_out = rows.
/// Vectors (biases) are set to zero.
template <typename Real>
Tensor<Real> xavier_init(const std::vector<std::size_t>& shape, Rng& rng) {
  require(shape.size() == 1 || shape.size() == 2,
          "xavier_init: shape must be 1- or 2-dimensional");
  Tensor<Real> t(shape);
  if (shape.size() == 1) {
    t.fill(Real(0));
    return t;
  }
  const double fan_out = static_cast<double>(t.rows());
  const double fan_in = static_cast<double>(t.cols());
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : t.data) x = static_cast<Real>(rng.next_range(-a, a));
  return t;
}

/// Initializes every parameter in declaration order from one RNG stream, so
/// a given seed always produces the same starting point.
template <typename Real>
void init_model(SfktModel<Real>& model, Rng& rng) {
  model.for_each_parameter([&](Parameter<Real>& p) {
    p.value = xavier_init<Real>(p.value.shape, rng);
    p.grad = Tensor<Real>(p.value.shape);
  });
}

}  // namespace sfkt
