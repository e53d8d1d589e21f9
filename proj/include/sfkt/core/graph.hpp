#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sfkt/core/rng.hpp"
#include "sfkt/core/tensor.hpp"

namespace sfkt {

/// Named trainable tensor. Gradients accumulate across graphs until zeroed.
template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<Real> v, bool is_trainable = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape),
        trainable(is_trainable) {}

  void zero_grad() { grad.fill(Real(0)); }
  std::size_t size() const { return value.size(); }
};

enum class Op : std::uint8_t {
  kConst,
  kParam,
  kAffine,       // W x + b
  kMatvec,       // W x
  kMatvecT,      // W^T x
  kGatherRow,    // table[i]
  kGatherMean,   // mean of table rows
  kSigmoid,
  kRelu,
  kMul,          // elementwise
  kAdd,
  kAddN,
  kConcat,
  kSoftmax,      // over a rank-1 value
  kDot,
  kDots,         // query against a list of keys
  kScale,        // constant factor
  kWeightedSum,  // sum_i w_i v_i
  kDropout,
  kBce,          // binary cross entropy against a fixed label
  kLogSumExp,
  kRsqrt,        // 1/sqrt(x + eps)
};

template <typename Real>
struct Node {
  Op op;
  std::uint32_t rows = 0;
  std::uint32_t cols = 1;  // > 1 only for matrix leaves
  Real* data = nullptr;
  Real* grad = nullptr;
  std::vector<Real> data_store;
  std::vector<Real> grad_store;
  std::vector<Node*> inputs;
  std::vector<std::uint32_t> idx;  // gather indices or dropout mask
  Real scalar = 0;                 // scale factor, keep-prob, or label

  std::size_t size() const { return std::size_t(rows) * cols; }
};

/// Handle to a node owned by a Graph.
template <typename Real>
struct Value {
  Node<Real>* node = nullptr;

  bool valid() const { return node != nullptr; }
  std::size_t size() const { return node->size(); }
  std::span<const Real> values() const { return {node->data, node->size()}; }
  std::span<const Real> grads() const { return {node->grad, node->size()}; }
  Real scalar_value() const {
    require(node->size() == 1, "scalar_value: node is not a scalar");
    return node->data[0];
  }
};

/// Append-only computation tape. Forward values are computed eagerly as nodes
/// are created; backward() runs the reverse sweep once, in reverse creation
/// order, which is a valid reverse topological order because every input
/// precedes its consumers on the tape.
///
/// A graph is confined to one thread. Parameters referenced by a graph must
/// outlive it.
template <typename Real>
class Graph {
 public:
  using V = Value<Real>;

  std::size_t node_count() const { return nodes_.size(); }

  // ---- leaves ----

  V constant(std::span<const Real> data) {
    Node<Real>& n = fresh(Op::kConst, data.size());
    std::copy(data.begin(), data.end(), n.data);
    return {&n};
  }

  V constant_scalar(Real v) { return constant(std::span<const Real>(&v, 1)); }

  V constant_tensor(const Tensor<Real>& t) {
    Node<Real>& n = fresh(Op::kConst, t.rows() == 0 ? 0 : t.rows(),
                          static_cast<std::uint32_t>(t.cols()));
    std::copy(t.data.begin(), t.data.end(), n.data);
    return {&n};
  }

  /// Parameter leaf. Data and grad alias the parameter's storage, so backward
  /// accumulates straight into Parameter::grad. Repeated use of the same
  /// parameter returns the same node.
  V param(Parameter<Real>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {it->second};
    nodes_.emplace_back();
    Node<Real>& n = nodes_.back();
    n.op = Op::kParam;
    n.rows = static_cast<std::uint32_t>(p.value.rows());
    n.cols = static_cast<std::uint32_t>(p.value.cols());
    n.data = p.value.data.data();
    n.grad = p.grad.data.data();
    param_nodes_.emplace(&p, &n);
    return {&n};
  }

  // ---- ops ----

  /// y = W x + b. W is [m x n], x and b are vectors.
  V affine(V w, V x, V b) {
    require(w.node->cols == x.node->rows && x.node->cols == 1,
            "affine: W/x shape mismatch");
    require(b.node->rows == w.node->rows && b.node->cols == 1,
            "affine: W/b shape mismatch");
    Node<Real>& n = fresh(Op::kAffine, w.node->rows, 1, {w.node, x.node, b.node});
    matvec_into(n.data, *w.node, *x.node);
    for (std::uint32_t r = 0; r < n.rows; ++r) n.data[r] += b.node->data[r];
    return {&n};
  }

  V matvec(V w, V x) {
    require(w.node->cols == x.node->rows && x.node->cols == 1,
            "matvec: W/x shape mismatch");
    Node<Real>& n = fresh(Op::kMatvec, w.node->rows, 1, {w.node, x.node});
    matvec_into(n.data, *w.node, *x.node);
    return {&n};
  }

  /// y = W^T x for W stored [m x k] row-major and x of length m; y has
  /// length k. Equivalent to mixing the rows of W with weights x.
  V matvec_t(V w, V x) {
    require(w.node->rows == x.node->rows && x.node->cols == 1,
            "matvec_t: W/x shape mismatch");
    Node<Real>& n = fresh(Op::kMatvecT, w.node->cols, 1, {w.node, x.node});
    const std::uint32_t m = w.node->rows, k = w.node->cols;
    for (std::uint32_t r = 0; r < m; ++r) {
      const Real xr = x.node->data[r];
      const Real* wr = w.node->data + std::size_t(r) * k;
      for (std::uint32_t c = 0; c < k; ++c) n.data[c] += xr * wr[c];
    }
    return {&n};
  }

  V gather_row(V table, std::size_t row) {
    require(row < table.node->rows, "gather_row: index out of range");
    Node<Real>& n = fresh(Op::kGatherRow, table.node->cols, 1, {table.node});
    n.idx.push_back(static_cast<std::uint32_t>(row));
    const Real* src = table.node->data + row * table.node->cols;
    std::copy(src, src + table.node->cols, n.data);
    return {&n};
  }

  /// Arithmetic mean of the given table rows. Backward deposits grad / |rows|
  /// into every gathered row.
  V gather_mean(V table, std::span<const std::uint32_t> rows) {
    require(!rows.empty(), "gather_mean: empty index set");
    const std::uint32_t d = table.node->cols;
    for (std::uint32_t r : rows)
      require(r < table.node->rows, "gather_mean: index out of range");
    Node<Real>& n = fresh(Op::kGatherMean, d, 1, {table.node});
    n.idx.assign(rows.begin(), rows.end());
    const Real inv = Real(1) / Real(rows.size());
    for (std::uint32_t r : rows) {
      const Real* src = table.node->data + std::size_t(r) * d;
      for (std::uint32_t j = 0; j < d; ++j) n.data[j] += src[j];
    }
    for (std::uint32_t j = 0; j < d; ++j) n.data[j] *= inv;
    return {&n};
  }

  V sigmoid(V x) {
    Node<Real>& n = unary(Op::kSigmoid, x);
    for (std::size_t i = 0; i < n.size(); ++i)
      n.data[i] = Real(1) / (Real(1) + std::exp(-x.node->data[i]));
    return {&n};
  }

  V relu(V x) {
    Node<Real>& n = unary(Op::kRelu, x);
    for (std::size_t i = 0; i < n.size(); ++i)
      n.data[i] = x.node->data[i] > Real(0) ? x.node->data[i] : Real(0);
    return {&n};
  }

  V mul(V a, V b) {
    require(a.size() == b.size(), "mul: shape mismatch");
    Node<Real>& n = fresh(Op::kMul, a.node->rows, 1, {a.node, b.node});
    for (std::size_t i = 0; i < n.size(); ++i)
      n.data[i] = a.node->data[i] * b.node->data[i];
    return {&n};
  }

  V add(V a, V b) {
    require(a.size() == b.size(), "add: shape mismatch");
    Node<Real>& n = fresh(Op::kAdd, a.node->rows, 1, {a.node, b.node});
    for (std::size_t i = 0; i < n.size(); ++i)
      n.data[i] = a.node->data[i] + b.node->data[i];
    return {&n};
  }

  V add_n(std::span<const V> xs) {
    require(!xs.empty(), "add_n: empty input list");
    Node<Real>& n = fresh(Op::kAddN, xs.front().node->rows, 1, {});
    n.inputs.reserve(xs.size());
    for (V x : xs) {
      require(x.size() == n.size(), "add_n: shape mismatch");
      n.inputs.push_back(x.node);
      for (std::size_t i = 0; i < n.size(); ++i) n.data[i] += x.node->data[i];
    }
    return {&n};
  }

  V sub(V a, V b) { return add(a, scale(b, Real(-1))); }

  V scale(V x, Real c) {
    Node<Real>& n = unary(Op::kScale, x);
    n.scalar = c;
    for (std::size_t i = 0; i < n.size(); ++i) n.data[i] = c * x.node->data[i];
    return {&n};
  }

  V concat(std::span<const V> xs) {
    require(!xs.empty(), "concat: empty input list");
    std::size_t total = 0;
    for (V x : xs) total += x.size();
    Node<Real>& n = fresh(Op::kConcat, total);
    n.inputs.reserve(xs.size());
    std::size_t off = 0;
    for (V x : xs) {
      n.inputs.push_back(x.node);
      std::copy(x.node->data, x.node->data + x.size(), n.data + off);
      off += x.size();
    }
    return {&n};
  }

  /// Softmax over a rank-1 value, stabilized by the max logit.
  V softmax(V x) {
    Node<Real>& n = unary(Op::kSoftmax, x);
    const std::size_t m = n.size();
    Real mx = x.node->data[0];
    for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, x.node->data[i]);
    Real sum = Real(0);
    for (std::size_t i = 0; i < m; ++i) {
      n.data[i] = std::exp(x.node->data[i] - mx);
      sum += n.data[i];
    }
    const Real inv = Real(1) / sum;
    for (std::size_t i = 0; i < m; ++i) n.data[i] *= inv;
    return {&n};
  }

  V dot(V a, V b) {
    require(a.size() == b.size(), "dot: shape mismatch");
    Node<Real>& n = fresh(Op::kDot, 1, 1, {a.node, b.node});
    Real s = Real(0);
    for (std::size_t i = 0; i < a.size(); ++i)
      s += a.node->data[i] * b.node->data[i];
    n.data[0] = s;
    return {&n};
  }

  /// logits[i] = q . keys[i]
  V dots(V q, std::span<const V> keys) {
    require(!keys.empty(), "dots: empty key list");
    Node<Real>& n = fresh(Op::kDots, keys.size());
    n.inputs.reserve(keys.size() + 1);
    n.inputs.push_back(q.node);
    const std::size_t d = q.size();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      require(keys[i].size() == d, "dots: key shape mismatch");
      n.inputs.push_back(keys[i].node);
      Real s = Real(0);
      for (std::size_t j = 0; j < d; ++j)
        s += q.node->data[j] * keys[i].node->data[j];
      n.data[i] = s;
    }
    return {&n};
  }

  /// sum_i w[i] * vs[i], with w a rank-1 value of length |vs|.
  V weighted_sum(V w, std::span<const V> vs) {
    require(w.size() == vs.size(), "weighted_sum: weight/value count mismatch");
    const std::size_t d = vs.front().size();
    Node<Real>& n = fresh(Op::kWeightedSum, d);
    n.inputs.reserve(vs.size() + 1);
    n.inputs.push_back(w.node);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      require(vs[i].size() == d, "weighted_sum: value shape mismatch");
      n.inputs.push_back(vs[i].node);
      const Real wi = w.node->data[i];
      for (std::size_t j = 0; j < d; ++j) n.data[j] += wi * vs[i].node->data[j];
    }
    return {&n};
  }

  /// Inverted dropout. In train mode each element is zeroed with probability
  /// `rate` and survivors are scaled by 1/(1-rate); otherwise the input is
  /// returned untouched. rate must lie in [0, 1).
  V dropout(V x, Real rate, bool train_mode, Rng& rng) {
    require(rate >= Real(0) && rate < Real(1), "dropout: rate must be in [0,1)");
    if (!train_mode || rate == Real(0)) return x;
    Node<Real>& n = unary(Op::kDropout, x);
    n.scalar = Real(1) / (Real(1) - rate);
    n.idx.resize(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
      const bool keep = rng.next_double() >= double(rate);
      n.idx[i] = keep ? 1u : 0u;
      n.data[i] = keep ? x.node->data[i] * n.scalar : Real(0);
    }
    return {&n};
  }

  /// -[y log p + (1-y) log(1-p)] with p = yhat clamped to [eps, 1-eps].
  V binary_cross_entropy(V yhat, Real label) {
    require(yhat.size() == 1, "binary_cross_entropy: prediction must be scalar");
    Node<Real>& n = fresh(Op::kBce, 1, 1, {yhat.node});
    n.scalar = label;
    const Real p = clamp_prob(yhat.node->data[0]);
    n.data[0] = -(label * std::log(p) + (Real(1) - label) * std::log(Real(1) - p));
    return {&n};
  }

  /// Elementwise 1/sqrt(x + eps). eps keeps the value and its gradient
  /// finite when x can reach zero (norms of ReLU outputs, say).
  V rsqrt(V x, Real eps) {
    require(eps > Real(0), "rsqrt: eps must be positive");
    Node<Real>& n = unary(Op::kRsqrt, x);
    n.scalar = eps;
    for (std::size_t i = 0; i < n.size(); ++i)
      n.data[i] = Real(1) / std::sqrt(x.node->data[i] + eps);
    return {&n};
  }

  /// log sum_i exp(x_i), stabilized by the max entry.
  V log_sum_exp(V x) {
    Node<Real>& n = fresh(Op::kLogSumExp, 1, 1, {x.node});
    const std::size_t m = x.size();
    Real mx = x.node->data[0];
    for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, x.node->data[i]);
    Real sum = Real(0);
    for (std::size_t i = 0; i < m; ++i) sum += std::exp(x.node->data[i] - mx);
    n.data[0] = mx + std::log(sum);
    return {&n};
  }

  V mean(std::span<const V> scalars) {
    return scale(add_n(scalars), Real(1) / Real(scalars.size()));
  }

  // ---- backward ----

  /// Reverse sweep from a scalar loss. Each node is visited exactly once.
  /// Call at most once per graph; a second sweep would double-count.
  void backward(V loss) {
    require(loss.size() == 1, "backward: loss must be scalar");
    loss.node->grad[0] += Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) backward_node(*it);
  }

  static Real clamp_prob(Real p) {
    const Real eps = Real(1e-7);
    return std::min(Real(1) - eps, std::max(eps, p));
  }

 private:
  Node<Real>& fresh(Op op, std::size_t rows, std::uint32_t cols = 1,
                    std::initializer_list<Node<Real>*> inputs = {}) {
    nodes_.emplace_back();
    Node<Real>& n = nodes_.back();
    n.op = op;
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = cols;
    n.data_store.assign(n.size(), Real(0));
    n.grad_store.assign(n.size(), Real(0));
    n.data = n.data_store.data();
    n.grad = n.grad_store.data();
    n.inputs.assign(inputs);
    return n;
  }

  Node<Real>& unary(Op op, V x) {
    require(x.node->cols == 1, "unary op: rank-1 input required");
    return fresh(op, x.node->rows, 1, {x.node});
  }

  static void matvec_into(Real* out, const Node<Real>& w, const Node<Real>& x) {
    const std::uint32_t m = w.rows, k = w.cols;
    for (std::uint32_t r = 0; r < m; ++r) {
      const Real* wr = w.data + std::size_t(r) * k;
      Real s = Real(0);
      for (std::uint32_t c = 0; c < k; ++c) s += wr[c] * x.data[c];
      out[r] = s;
    }
  }

  void backward_node(Node<Real>& n) {
    const Real* g = n.grad;
    switch (n.op) {
      case Op::kConst:
      case Op::kParam:
        break;
      case Op::kAffine:
      case Op::kMatvec: {
        Node<Real>& w = *n.inputs[0];
        Node<Real>& x = *n.inputs[1];
        const std::uint32_t m = w.rows, k = w.cols;
        for (std::uint32_t r = 0; r < m; ++r) {
          const Real gr = g[r];
          if (gr == Real(0)) continue;
          Real* wgr = w.grad + std::size_t(r) * k;
          const Real* wr = w.data + std::size_t(r) * k;
          for (std::uint32_t c = 0; c < k; ++c) {
            wgr[c] += gr * x.data[c];
            x.grad[c] += wr[c] * gr;
          }
        }
        if (n.op == Op::kAffine) {
          Node<Real>& b = *n.inputs[2];
          for (std::uint32_t r = 0; r < m; ++r) b.grad[r] += g[r];
        }
        break;
      }
      case Op::kMatvecT: {
        Node<Real>& w = *n.inputs[0];
        Node<Real>& x = *n.inputs[1];
        const std::uint32_t m = w.rows, k = w.cols;
        for (std::uint32_t r = 0; r < m; ++r) {
          const Real* wr = w.data + std::size_t(r) * k;
          Real* wgr = w.grad + std::size_t(r) * k;
          const Real xr = x.data[r];
          Real gx = Real(0);
          for (std::uint32_t c = 0; c < k; ++c) {
            wgr[c] += xr * g[c];
            gx += wr[c] * g[c];
          }
          x.grad[r] += gx;
        }
        break;
      }
      case Op::kGatherRow: {
        Node<Real>& t = *n.inputs[0];
        Real* row = t.grad + std::size_t(n.idx[0]) * t.cols;
        for (std::uint32_t j = 0; j < t.cols; ++j) row[j] += g[j];
        break;
      }
      case Op::kGatherMean: {
        Node<Real>& t = *n.inputs[0];
        const Real inv = Real(1) / Real(n.idx.size());
        for (std::uint32_t r : n.idx) {
          Real* row = t.grad + std::size_t(r) * t.cols;
          for (std::uint32_t j = 0; j < t.cols; ++j) row[j] += g[j] * inv;
        }
        break;
      }
      case Op::kSigmoid: {
        Node<Real>& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.size(); ++i)
          x.grad[i] += g[i] * n.data[i] * (Real(1) - n.data[i]);
        break;
      }
      case Op::kRelu: {
        Node<Real>& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.size(); ++i)
          if (x.data[i] > Real(0)) x.grad[i] += g[i];
        break;
      }
      case Op::kMul: {
        Node<Real>& a = *n.inputs[0];
        Node<Real>& b = *n.inputs[1];
        for (std::size_t i = 0; i < n.size(); ++i) {
          a.grad[i] += g[i] * b.data[i];
          b.grad[i] += g[i] * a.data[i];
        }
        break;
      }
      case Op::kAdd: {
        for (Node<Real>* in : n.inputs)
          for (std::size_t i = 0; i < n.size(); ++i) in->grad[i] += g[i];
        break;
      }
      case Op::kAddN: {
        for (Node<Real>* in : n.inputs)
          for (std::size_t i = 0; i < n.size(); ++i) in->grad[i] += g[i];
        break;
      }
      case Op::kConcat: {
        std::size_t off = 0;
        for (Node<Real>* in : n.inputs) {
          for (std::size_t i = 0; i < in->size(); ++i) in->grad[i] += g[off + i];
          off += in->size();
        }
        break;
      }
      case Op::kSoftmax: {
        Node<Real>& x = *n.inputs[0];
        Real inner = Real(0);
        for (std::size_t i = 0; i < n.size(); ++i) inner += g[i] * n.data[i];
        for (std::size_t i = 0; i < n.size(); ++i)
          x.grad[i] += n.data[i] * (g[i] - inner);
        break;
      }
      case Op::kDot: {
        Node<Real>& a = *n.inputs[0];
        Node<Real>& b = *n.inputs[1];
        const Real g0 = g[0];
        for (std::size_t i = 0; i < a.size(); ++i) {
          a.grad[i] += g0 * b.data[i];
          b.grad[i] += g0 * a.data[i];
        }
        break;
      }
      case Op::kDots: {
        Node<Real>& q = *n.inputs[0];
        const std::size_t d = q.size();
        for (std::size_t i = 0; i + 1 < n.inputs.size(); ++i) {
          Node<Real>& k = *n.inputs[i + 1];
          const Real gi = g[i];
          if (gi == Real(0)) continue;
          for (std::size_t j = 0; j < d; ++j) {
            q.grad[j] += gi * k.data[j];
            k.grad[j] += gi * q.data[j];
          }
        }
        break;
      }
      case Op::kScale: {
        Node<Real>& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.size(); ++i) x.grad[i] += g[i] * n.scalar;
        break;
      }
      case Op::kWeightedSum: {
        Node<Real>& w = *n.inputs[0];
        const std::size_t d = n.size();
        for (std::size_t i = 0; i + 1 < n.inputs.size(); ++i) {
          Node<Real>& v = *n.inputs[i + 1];
          const Real wi = w.data[i];
          Real gw = Real(0);
          for (std::size_t j = 0; j < d; ++j) {
            v.grad[j] += wi * g[j];
            gw += g[j] * v.data[j];
          }
          w.grad[i] += gw;
        }
        break;
      }
      case Op::kDropout: {
        Node<Real>& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.size(); ++i)
          if (n.idx[i]) x.grad[i] += g[i] * n.scalar;
        break;
      }
      case Op::kBce: {
        Node<Real>& x = *n.inputs[0];
        const Real raw = x.data[0];
        const Real eps = Real(1e-7);
        if (raw > eps && raw < Real(1) - eps) {
          const Real y = n.scalar;
          x.grad[0] += g[0] * (raw - y) / (raw * (Real(1) - raw));
        }
        break;
      }
      case Op::kRsqrt: {
        Node<Real>& x = *n.inputs[0];
        for (std::size_t i = 0; i < n.size(); ++i) {
          const Real y = n.data[i];
          x.grad[i] += g[i] * Real(-0.5) * y * y * y;
        }
        break;
      }
      case Op::kLogSumExp: {
        Node<Real>& x = *n.inputs[0];
        const Real g0 = g[0];
        for (std::size_t i = 0; i < x.size(); ++i)
          x.grad[i] += g0 * std::exp(x.data[i] - n.data[0]);
        break;
      }
    }
  }

  std::deque<Node<Real>> nodes_;
  std::unordered_map<const Parameter<Real>*, Node<Real>*> param_nodes_;
};

}  // namespace sfkt
