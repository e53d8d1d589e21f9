#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfkt/core/graph.hpp"
#include "sfkt/core/grad_check.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/data/pipeline.hpp"
#include "sfkt/model/network.hpp"
#include "sfkt/model/total_term.hpp"
#include "sfkt/train/init.hpp"

namespace sfkt {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

/// Small random interaction log for self-checks and fixtures.
inline InteractionLog toy_log(std::size_t students, std::size_t steps,
                              std::size_t questions, std::size_t concepts,
                              std::uint64_t seed) {
  Rng rng(seed);
  InteractionLog log;
  for (std::size_t s = 0; s < students; ++s) {
    InteractionLog::Student student;
    student.id = "s" + std::to_string(s);
    for (std::size_t t = 0; t < steps; ++t) {
      Interaction row;
      row.student_id = student.id;
      row.question_id = "q" + std::to_string(rng.next_below(questions));
      const std::size_t nk = 1 + rng.next_below(2);
      for (std::size_t k = 0; k < nk; ++k) {
        const std::string cid = "c" + std::to_string(rng.next_below(concepts));
        if (std::find(row.concept_ids.begin(), row.concept_ids.end(), cid) ==
            row.concept_ids.end()) {
          row.concept_ids.push_back(cid);
        }
      }
      row.response = rng.next_bernoulli(0.6) ? 1 : 0;
      row.order_key = static_cast<long long>(t);
      student.interactions.push_back(std::move(row));
    }
    log.students.push_back(std::move(student));
  }
  return log;
}

namespace verify_detail {

template <typename Fn>
CheckResult run_check(const std::string& name, Fn&& fn) {
  CheckResult result;
  result.name = name;
  try {
    result.detail = fn();
    result.passed = true;
  } catch (const std::exception& e) {
    result.passed = false;
    result.detail = e.what();
  }
  return result;
}

inline void expect(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

/// Composite graph touching every differentiable op, checked coordinate by
/// coordinate against central differences.
inline std::string check_engine_gradients() {
  using Real = double;
  Rng init_rng(11);
  Parameter<Real> w("w", Tensor<Real>::mat(3, 4));
  Parameter<Real> b("b", Tensor<Real>::vec(3));
  Parameter<Real> table("table", Tensor<Real>::mat(5, 3));
  Parameter<Real> x("x", Tensor<Real>::vec(4));
  Parameter<Real> meta("meta", Tensor<Real>::mat(3, 4));
  for (Parameter<Real>* p : {&w, &b, &table, &x, &meta}) {
    for (auto& v : p->value.data) v = init_rng.next_range(-0.9, 0.9);
  }
  std::vector<Parameter<Real>*> params{&w, &b, &table, &x, &meta};

  const auto forward = [&](Graph<Real>& g) {
    const auto xv = g.param(x);                                   // [4]
    const auto sig = g.sigmoid(g.affine(g.param(w), xv, g.param(b)));  // [3]
    const Real shift[] = {0.37, 0.11, 0.52};
    const auto rl = g.relu(g.sub(sig, g.constant(shift)));        // [3]
    const auto row = g.gather_row(g.param(table), 2);             // [3]
    const std::uint32_t idx[] = {0, 3, 3};
    const auto mean_rows = g.gather_mean(g.param(table), idx);    // [3]
    const auto mixed = g.mul(g.add(rl, row), mean_rows);          // [3]
    const auto joined =
        g.concat(std::array<Value<Real>, 2>{mixed, g.scale(sig, 1.7)});  // [6]
    const auto spread = g.softmax(g.matvec_t(g.param(meta), sig));       // [4]
    const auto query = g.matvec(g.param(meta), spread);                  // [3]
    const auto logits =
        g.dots(query, std::array<Value<Real>, 2>{row, mean_rows});       // [2]
    const auto att = g.weighted_sum(
        g.softmax(logits), std::array<Value<Real>, 2>{mixed, sig});      // [3]
    const auto score = g.sigmoid(g.dot(att, rl));
    const auto bce = g.binary_cross_entropy(score, Real(1));
    const auto lse = g.log_sum_exp(joined);
    const auto rs = g.rsqrt(g.dot(att, att), Real(1e-6));
    return g.add_n(std::array<Value<Real>, 3>{bce, lse, rs});
  };

  for (auto* p : params) p->zero_grad();
  Graph<Real> g;
  g.backward(forward(g));
  Rng pick(7);
  const auto report = finite_difference_check<Real>(
      params,
      [&] {
        Graph<Real> fresh;
        return forward(fresh).scalar_value();
      },
      0, pick, 1e-5);
  expect(report.max_rel_err < 1e-5,
         "engine gradient mismatch, worst " + report.worst_param +
             " rel err " + std::to_string(report.max_rel_err));
  std::ostringstream os;
  os << report.coords_checked << " coordinates, max rel err "
     << report.max_rel_err;
  return os.str();
}

/// A value consumed twice must receive both gradient contributions; the
/// closed form here is d/dx_i of w_i(x_i^2 + 3 x_i) = w_i(2 x_i + 3).
inline std::string check_shared_subgraph() {
  using Real = double;
  Parameter<Real> x("x", Tensor<Real>::vec(4));
  Parameter<Real> w("w", Tensor<Real>::vec(4));
  x.value.data = {0.3, -1.2, 2.0, 0.0};
  w.value.data = {1.0, -0.5, 0.25, 2.0};
  x.zero_grad();
  w.zero_grad();
  Graph<Real> g;
  const auto xv = g.param(x);
  const auto z = g.add(g.mul(xv, xv), g.scale(xv, 3.0));
  g.backward(g.dot(z, g.param(w)));
  for (std::size_t i = 0; i < 4; ++i) {
    const double want = w.value.data[i] * (2.0 * x.value.data[i] + 3.0);
    expect(std::abs(x.grad.data[i] - want) < 1e-12,
           "shared subgraph gradient wrong at coordinate " + std::to_string(i));
  }
  return "both consumers accumulated";
}

/// Incremental per-step counts must agree with recounting the prefix from
/// scratch at every step.
inline std::string check_count_oracle(std::size_t n_sequences) {
  Rng rng(123);
  for (std::size_t s = 0; s < n_sequences; ++s) {
    const std::size_t len = 1 + rng.next_below(60);
    StudentSequence seq;
    for (std::size_t t = 0; t < len; ++t) {
      SeqStep step;
      const std::size_t nk = 1 + rng.next_below(3);
      for (std::size_t k = 0; k < nk; ++k) {
        const auto cid = static_cast<std::uint32_t>(rng.next_below(8));
        if (std::find(step.concepts.begin(), step.concepts.end(), cid) ==
            step.concepts.end()) {
          step.concepts.push_back(cid);
        }
      }
      step.response = rng.next_bernoulli(0.5) ? 1 : 0;
      seq.steps.push_back(std::move(step));
    }
    const auto incremental = compute_prefix_counts(seq);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::uint32_t k = 0; k < 8; ++k) {
        std::uint32_t succ = 0, fail = 0;
        for (std::size_t p = 0; p < t; ++p) {
          const auto& past = seq.steps[p];
          if (std::find(past.concepts.begin(), past.concepts.end(), k) ==
              past.concepts.end()) {
            continue;
          }
          if (past.response != 0) ++succ; else ++fail;
        }
        const auto got = incremental[t].at(k);
        expect(got.success == succ && got.failure == fail,
               "count mismatch at sequence " + std::to_string(s) + " step " +
                   std::to_string(t) + " concept " + std::to_string(k));
      }
    }
  }
  return std::to_string(n_sequences) + " sequences exact";
}

/// Three closed forms of the batch contrastive loss.
inline std::string check_contrastive_closed_forms() {
  using Real = double;
  const auto unit = [](std::size_t dim, std::size_t axis) {
    std::vector<Real> v(dim, Real(0));
    v[axis] = Real(1);
    return v;
  };

  {
    Graph<Real> g;
    const Value<Real> a[] = {g.constant(unit(3, 0))};
    const Value<Real> b[] = {g.constant(unit(3, 0))};
    const auto phi = contrastive_loss<Real>(g, a, b, 1.0);
    expect(phi.scalar_value() == 0.0, "single-record loss must be exactly 0");
  }
  {
    Graph<Real> g;
    std::vector<Value<Real>> a, b;
    for (int i = 0; i < 4; ++i) {
      a.push_back(g.constant(unit(3, 1)));
      b.push_back(g.constant(unit(3, 1)));
    }
    const auto phi = contrastive_loss<Real>(g, a, b, 1.0);
    const double want = 2.0 * std::log(4.0);
    expect(std::abs(phi.scalar_value() - want) < 1e-9,
           "identical-vectors case should be 2 ln 4");
  }
  {
    Graph<Real> g;
    std::vector<Value<Real>> a, b;
    for (int i = 0; i < 2; ++i) {
      a.push_back(g.constant(unit(2, static_cast<std::size_t>(i))));
      b.push_back(g.constant(unit(2, static_cast<std::size_t>(i))));
    }
    const auto phi = contrastive_loss<Real>(g, a, b, 1.0);
    const double want = 2.0 * std::log(1.0 + std::exp(-1.0));
    expect(std::abs(phi.scalar_value() - want) < 1e-9,
           "orthogonal-basis case should be 2 ln(1+e^-1)");
  }
  return "all three closed forms match";
}

/// Count normalization: exact boundary behavior and independence from the
/// logarithm base.
inline std::string check_count_normalization() {
  const double mn = 2.0, mx = 150.0;
  expect(normalize_count(mn, mn, mx) == 0.0, "min count must normalize to 0");
  expect(normalize_count(mx, mn, mx) == 1.0, "max count must normalize to 1");
  expect(bucket_index(1.0, 100) == 99, "top of range must land in last bucket");
  for (double x : {2.0, 3.0, 9.0, 55.0, 150.0}) {
    const double via_ln = normalize_count(x, mn, mx);
    const double via_log10 = (std::log10(x + 1.0) - std::log10(mn + 1.0)) /
                             (std::log10(mx + 1.0) - std::log10(mn + 1.0));
    expect(std::abs(via_ln - via_log10) < 1e-12,
           "normalization must not depend on log base");
  }
  double prev = -1.0;
  for (double x = 0.0; x <= 160.0; x += 1.0) {
    const double xhat = normalize_count(x, mn, mx);
    expect(xhat >= prev, "normalization must be monotone");
    prev = xhat;
  }
  return "boundaries exact, base-invariant, monotone";
}

/// Finite-difference check of the full objective on a toy model. With
/// inject_fault the analytic gradient is corrupted first, to prove this
/// check can actually fail.
inline std::string check_full_model_gradient(bool inject_fault,
                                             std::size_t n_coords) {
  using Real = double;
  ModelConfig mc;
  mc.dim = 8;
  mc.buckets = 4;
  mc.meta_numbers = 4;
  mc.max_len = 5;
  DatasetConfig dc;
  dc.max_len = mc.max_len;
  const auto data = build_dataset(toy_log(3, 8, 6, 4, 99), dc);
  auto model = make_model<Real>(mc, data);
  Rng init_rng(5);
  init_model(model, init_rng);
  // Zero-initialized biases and the zero null-history vector put ReLU
  // pre-activations exactly on the kink, where the subgradient and a
  // one-sided difference quotient legitimately disagree. Jitter every
  // parameter so the check differentiates at a generic point.
  model.for_each_parameter([&](Parameter<Real>& p) {
    for (auto& v : p.value.data) v += init_rng.next_range(-0.07, 0.07);
  });

  LossWeights weights;
  weights.dropout_rate = 0.2;
  std::vector<std::uint32_t> batch;
  for (const auto id : data.train_records) {
    if (data.records[id].pos % 3 == 0) batch.push_back(id);
    if (batch.size() == 3) break;
  }
  expect(batch.size() == 3, "toy fixture must yield 3 records");

  const auto loss_value = [&] {
    Rng dropout_rng(4242);
    Graph<Real> g;
    const auto out = batch_objective(g, model, data, batch, weights, true,
                                     dropout_rng);
    return out.total.scalar_value();
  };

  model.zero_grad();
  {
    Rng dropout_rng(4242);
    Graph<Real> g;
    const auto out =
        batch_objective(g, model, data, batch, weights, true, dropout_rng);
    g.backward(out.total);
  }
  if (inject_fault) {
    // Scale every analytic gradient so any sampled coordinate disagrees.
    model.for_each_parameter([](Parameter<Real>& p) {
      for (auto& gv : p.grad.data) gv *= 1.25;
    });
  }

  auto params = model.parameters();
  Rng pick(31);
  const auto report = finite_difference_check<Real>(
      std::span<Parameter<Real>* const>(params), loss_value, n_coords, pick);
  expect(report.max_rel_err < 1e-3,
         "full-model gradient mismatch, worst " + report.worst_param +
             " rel err " + std::to_string(report.max_rel_err));
  std::ostringstream os;
  os << report.coords_checked << " coordinates, max rel err "
     << report.max_rel_err;
  return os.str();
}

}  // namespace verify_detail

/// The self-check suite behind the `verify` CLI command. inject_fault
/// deliberately corrupts one analytic gradient so the failure path is
/// itself exercisable.
inline std::vector<CheckResult> run_verification(bool inject_fault = false) {
  using namespace verify_detail;
  std::vector<CheckResult> results;
  results.push_back(run_check("engine-op-gradients",
                              [] { return check_engine_gradients(); }));
  results.push_back(run_check("shared-subgraph-accumulation",
                              [] { return check_shared_subgraph(); }));
  results.push_back(
      run_check("prior-count-oracle", [] { return check_count_oracle(200); }));
  results.push_back(run_check("contrastive-closed-forms",
                              [] { return check_contrastive_closed_forms(); }));
  results.push_back(run_check("count-normalization",
                              [] { return check_count_normalization(); }));
  results.push_back(run_check("full-model-gradient", [inject_fault] {
    return check_full_model_gradient(inject_fault, 60);
  }));
  return results;
}

}  // namespace sfkt
