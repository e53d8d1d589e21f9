#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sfkt {

[[noreturn]] inline void fatal(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void require(bool ok, const char* msg) {
  if (!ok) fatal(msg);
}

/// Dense row-major tensor of rank 1 or 2. Rank 2 is reserved for weight
/// matrices and embedding tables; everything flowing through the graph is
/// a vector or a scalar.
template <typename Real>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Real> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(element_count(shape), Real(0)) {}

  static Tensor vec(std::size_t n) { return Tensor({n}); }
  static Tensor mat(std::size_t r, std::size_t c) { return Tensor({r, c}); }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  Real& operator[](std::size_t i) { return data[i]; }
  Real operator[](std::size_t i) const { return data[i]; }

  Real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (Real v : data) out.data.push_back(static_cast<Other>(v));
    return out;
  }
};

}  // namespace sfkt
