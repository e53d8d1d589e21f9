#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/grad_check.hpp"
#include "sfkt/core/graph.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/data/pipeline.hpp"
#include "sfkt/model/network.hpp"
#include "sfkt/train/init.hpp"
#include "sfkt/verify/checks.hpp"

using namespace sfkt;

namespace {

using Real = double;

std::vector<Value<Real>> unit_batch(Graph<Real>& g, std::size_t n,
                                    std::size_t dim, std::size_t axis) {
  std::vector<Real> v(dim, 0.0);
  v[axis] = 1.0;
  std::vector<Value<Real>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(g.constant(v));
  return out;
}

SfktModel<Real> toy_model(const Dataset& data, std::uint64_t seed,
                          bool jitter = true) {
  ModelConfig mc;
  mc.dim = 8;
  mc.buckets = 4;
  mc.meta_numbers = 4;
  mc.max_len = data.max_len;
  auto model = make_model<Real>(mc, data);
  Rng rng(seed);
  init_model(model, rng);
  if (jitter) {
    // Nudge the zero-initialized biases off the ReLU kinks so closed-form
    // and finite-difference comparisons differentiate at a generic point.
    model.for_each_parameter([&](Parameter<Real>& p) {
      for (auto& v : p.value.data) v += rng.next_range(-0.07, 0.07);
    });
  }
  return model;
}

Dataset toy_dataset(std::uint64_t seed, std::size_t max_len = 5) {
  DatasetConfig dc;
  dc.max_len = max_len;
  return build_dataset(toy_log(4, 12, 6, 4, seed), dc);
}

}  // namespace

TEST_CASE("contrastive loss closed forms") {
  SECTION("a single record has no negatives and zero loss") {
    Graph<Real> g;
    const auto a = unit_batch(g, 1, 3, 0);
    const auto b = unit_batch(g, 1, 3, 0);
    const auto phi = contrastive_loss<Real>(g, a, b, 1.0);
    CHECK(phi.scalar_value() == 0.0);
  }

  SECTION("four identical unit vectors") {
    Graph<Real> g;
    const auto a = unit_batch(g, 4, 3, 1);
    const auto b = unit_batch(g, 4, 3, 1);
    const auto phi = contrastive_loss<Real>(g, a, b, 1.0);
    CHECK(std::abs(phi.scalar_value() - 2.0 * std::log(4.0)) < 1e-9);
  }

  SECTION("two orthogonal basis vectors") {
    Graph<Real> g;
    std::vector<Value<Real>> a, b;
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<Real> v(2, 0.0);
      v[i] = 1.0;
      a.push_back(g.constant(v));
      b.push_back(g.constant(v));
    }
    const auto phi = contrastive_loss<Real>(g, a, b, 1.0);
    const double want = 2.0 * std::log(1.0 + std::exp(-1.0));
    CHECK(std::abs(phi.scalar_value() - want) < 1e-9);
  }
}

TEST_CASE("contrastive loss approaches 2 log n at infinite temperature") {
  Graph<Real> g;
  Rng rng(71);
  std::vector<Value<Real>> a, b;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<Real> va(5), vb(5);
    for (auto& v : va) v = rng.next_range(-1.0, 1.0);
    for (auto& v : vb) v = rng.next_range(-1.0, 1.0);
    a.push_back(g.constant(va));
    b.push_back(g.constant(vb));
  }
  const auto phi = contrastive_loss<Real>(g, a, b, 1e6);
  CHECK(std::abs(phi.scalar_value() - 2.0 * std::log(4.0)) < 1e-3);
}

TEST_CASE("contrastive loss falls as the positive pair aligns") {
  const auto loss_at = [](double pos_similarity) {
    Graph<Real> g;
    std::vector<Value<Real>> a, b;
    const Real a0[] = {pos_similarity, 0.0};
    const Real b0[] = {1.0, 0.0};
    const Real a1[] = {0.0, 1.0};
    const Real b1[] = {0.0, 1.0};
    a.push_back(g.constant(a0));
    a.push_back(g.constant(a1));
    b.push_back(g.constant(b0));
    b.push_back(g.constant(b1));
    return contrastive_loss<Real>(g, a, b, 1.0).scalar_value();
  };
  const double lo = loss_at(0.25);
  const double mid = loss_at(1.0);
  const double hi = loss_at(3.0);
  CHECK(lo > mid);
  CHECK(mid > hi);
}

TEST_CASE("cosine similarity mode is scale invariant") {
  const auto loss_with = [](double scale_factor, bool cosine) {
    Graph<Real> g;
    std::vector<Value<Real>> a, b;
    Rng rng(72);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<Real> va(4), vb(4);
      for (auto& v : va) v = scale_factor * rng.next_range(0.1, 1.0);
      for (auto& v : vb) v = scale_factor * rng.next_range(0.1, 1.0);
      a.push_back(g.constant(va));
      b.push_back(g.constant(vb));
    }
    return contrastive_loss<Real>(g, a, b, 1.0, cosine).scalar_value();
  };
  CHECK(loss_with(1.0, true) ==
        Catch::Approx(loss_with(7.0, true)).epsilon(1e-6));
  CHECK(loss_with(1.0, false) != Catch::Approx(loss_with(7.0, false)));
}

TEST_CASE("contrastive loss validates its inputs") {
  Graph<Real> g;
  const auto a = unit_batch(g, 2, 3, 0);
  const auto b = unit_batch(g, 3, 3, 0);
  CHECK_THROWS(contrastive_loss<Real>(g, a, b, 1.0));
  CHECK_THROWS(contrastive_loss<Real>(g, {}, {}, 1.0));
  const auto c = unit_batch(g, 2, 3, 0);
  CHECK_THROWS(contrastive_loss<Real>(g, a, c, 0.0));
}

TEST_CASE("model parameter names are unique and complete") {
  const auto data = toy_dataset(81);
  auto model = toy_model(data, 5);
  std::set<std::string> names;
  std::size_t total = 0;
  model.for_each_parameter([&](Parameter<Real>& p) {
    CHECK(names.insert(p.name).second);
    total += p.size();
  });
  CHECK(total == model.parameter_count());
  for (const char* expected :
       {"embed.student", "embed.question", "embed.concept", "embed.response",
        "practice.weight", "practice.bias", "total_term.success.bucket_table",
        "total_term.failure.meta_table", "total_term.concept_success",
        "total_term.fuse_weight", "long_term.query_weight",
        "long_term.empty_history", "head.weight1", "head.bias2",
        "contrast.weight1", "contrast.weight2"}) {
    CHECK(names.count(expected) == 1);
  }
}

TEST_CASE("embedding tables reserve an extra row for unseen ids") {
  const auto data = toy_dataset(82);
  auto model = toy_model(data, 6);
  CHECK(model.question_table.value.rows() == data.vocab.questions.observed() + 1);
  CHECK(model.concept_table.value.rows() == data.vocab.concepts.observed() + 1);
  CHECK(model.student_table.value.rows() == data.vocab.students.observed() + 1);
  CHECK(model.total_term.success.stats_valid == data.success_stats.valid);
  CHECK(model.total_term.success.count_max == data.success_stats.max);
}

TEST_CASE("encode exposes only in-window history") {
  const auto data = toy_dataset(83, 5);
  auto model = toy_model(data, 7);
  for (const auto& rec : data.records) {
    Graph<Real> g;
    const auto enc = model.encode(g, data, rec);
    const auto& win = data.window_of(rec);
    CHECK(enc.history.keys.size() == rec.pos - win.begin);
    CHECK(enc.history.keys.size() < data.max_len);
  }
}

TEST_CASE("a zeroed output layer predicts one half") {
  const auto data = toy_dataset(84);
  auto model = toy_model(data, 8);
  model.head_weight2.value.fill(0.0);
  model.head_bias2.value.fill(0.0);
  for (const auto id : data.train_records) {
    Graph<Real> g;
    const auto enc = model.encode(g, data, data.records[id]);
    CHECK(model.predict(g, enc).scalar_value() == 0.5);
  }
}

TEST_CASE("zero dropout makes the perturbed prediction bit-identical") {
  const auto data = toy_dataset(85, 6);
  auto model = toy_model(data, 9);
  Rng rng(10);
  std::size_t checked = 0;
  for (const auto& rec : data.records) {
    Graph<Real> g;
    const auto enc = model.encode(g, data, rec);
    const Real clean = model.predict(g, enc).scalar_value();
    const Real perturbed =
        model.perturbed_predict(g, enc, Real(0), true, rng).scalar_value();
    CHECK(clean == perturbed);
    ++checked;
  }
  CHECK(checked == data.records.size());
}

TEST_CASE("nonzero dropout changes predictions in train mode only") {
  const auto data = toy_dataset(86, 6);
  auto model = toy_model(data, 11);
  const auto& rec = data.records[data.train_records[0] + 2];
  Graph<Real> g;
  const auto enc = model.encode(g, data, rec);
  const Real clean = model.predict(g, enc).scalar_value();

  Rng eval_rng(12);
  CHECK(model.perturbed_predict(g, enc, Real(0.5), false, eval_rng)
            .scalar_value() == clean);

  // With a 0.5 rate on two 8-wide vectors, at least one of a handful of
  // draws must knock out an input and move the output.
  bool moved = false;
  Rng train_rng(13);
  for (int trial = 0; trial < 8 && !moved; ++trial) {
    Graph<Real> g2;
    const auto enc2 = model.encode(g2, data, rec);
    const Real perturbed =
        model.perturbed_predict(g2, enc2, Real(0.5), true, train_rng)
            .scalar_value();
    moved = perturbed != model.predict(g2, enc2).scalar_value();
  }
  CHECK(moved);
}

TEST_CASE("one projection head serves both contrastive views") {
  const auto data = toy_dataset(87);
  auto model = toy_model(data, 14);
  const auto& rec = data.records[data.train_records[1]];
  Graph<Real> g;
  const auto enc = model.encode(g, data, rec);

  // Both views, projected through the model, then through an explicit
  // reapplication of the same parameter tensors: identical inputs must give
  // identical outputs because there is exactly one set of weights.
  const auto h_ttl = model.contrastive_project(g, enc.v_ttl);
  const auto again = model.contrastive_project(g, enc.v_ttl);
  for (std::size_t j = 0; j < h_ttl.size(); ++j) {
    CHECK(h_ttl.values()[j] == again.values()[j]);
  }

  // Gradient flows into the single shared head from either view alone.
  model.zero_grad();
  {
    Graph<Real> g2;
    const auto e = model.encode(g2, data, rec);
    g2.backward(g2.log_sum_exp(model.contrastive_project(g2, e.v_lng)));
  }
  double norm_from_lng = 0.0;
  for (const auto v : model.proj_weight1.grad.data) norm_from_lng += v * v;
  CHECK(norm_from_lng > 0.0);

  model.zero_grad();
  {
    Graph<Real> g3;
    const auto e = model.encode(g3, data, rec);
    g3.backward(g3.log_sum_exp(model.contrastive_project(g3, e.v_ttl)));
  }
  double norm_from_ttl = 0.0;
  for (const auto v : model.proj_weight1.grad.data) norm_from_ttl += v * v;
  CHECK(norm_from_ttl > 0.0);
}

TEST_CASE("batch objective worked example at a half-probability output") {
  const auto data = toy_dataset(88);
  auto model = toy_model(data, 15);
  model.head_weight2.value.fill(0.0);
  model.head_bias2.value.fill(0.0);

  LossWeights weights;
  weights.lambda_cl = 0.0;
  weights.lambda_pert = 1.0;
  weights.dropout_rate = 0.0;  // perturbed path collapses onto the clean one
  const std::array<std::uint32_t, 2> batch{data.train_records[0],
                                           data.train_records[1]};
  Graph<Real> g;
  Rng rng(16);
  const auto out = batch_objective(g, model, data, batch, weights, true, rng);
  const double ln2 = std::log(2.0);
  CHECK(out.pred == Catch::Approx(ln2).epsilon(1e-12));
  CHECK(out.perturbation == Catch::Approx(ln2).epsilon(1e-12));
  CHECK(out.contrastive == 0.0);
  CHECK(out.total.scalar_value() == Catch::Approx(2.0 * ln2).epsilon(1e-12));
  CHECK(out.records == 2);
}

TEST_CASE("disabled objective terms are never built") {
  const auto data = toy_dataset(89);
  auto model = toy_model(data, 17);
  const std::array<std::uint32_t, 3> batch{data.train_records[0],
                                           data.train_records[1],
                                           data.train_records[2]};

  const auto nodes_with = [&](double lcl, double lpert) {
    LossWeights weights;
    weights.lambda_cl = lcl;
    weights.lambda_pert = lpert;
    Graph<Real> g;
    Rng rng(18);
    const auto out = batch_objective(g, model, data, batch, weights, true, rng);
    if (lcl == 0.0) CHECK(out.contrastive == 0.0);
    if (lpert == 0.0) CHECK(out.perturbation == 0.0);
    return g.node_count();
  };
  const auto bare = nodes_with(0.0, 0.0);
  const auto with_cl = nodes_with(0.5, 0.0);
  const auto with_pert = nodes_with(0.0, 1.0);
  const auto full = nodes_with(0.5, 1.0);
  CHECK(bare < with_cl);
  CHECK(bare < with_pert);
  CHECK(with_cl < full);
  CHECK(with_pert < full);
}

TEST_CASE("eval mode perturbation equals the clean prediction loss") {
  const auto data = toy_dataset(90);
  auto model = toy_model(data, 19);
  LossWeights weights;  // defaults: both terms on, dropout 0.2
  const std::array<std::uint32_t, 3> batch{data.train_records[0],
                                           data.train_records[2],
                                           data.train_records[4]};
  Graph<Real> g;
  Rng rng(20);
  const auto out = batch_objective(g, model, data, batch, weights, false, rng);
  CHECK(out.perturbation == out.pred);
}

TEST_CASE("batch objective gradients match finite differences") {
  const auto data = toy_dataset(91, 5);
  auto model = toy_model(data, 21);
  LossWeights weights;
  std::vector<std::uint32_t> batch{data.train_records[0], data.train_records[3],
                                   data.train_records[6]};

  const auto loss_value = [&] {
    Rng rng(777);
    Graph<Real> g;
    return batch_objective(g, model, data, batch, weights, true, rng)
        .total.scalar_value();
  };
  model.zero_grad();
  {
    Rng rng(777);
    Graph<Real> g;
    g.backward(
        batch_objective(g, model, data, batch, weights, true, rng).total);
  }
  auto params = model.parameters();
  Rng pick(22);
  const auto report = sfkt::finite_difference_check<Real>(
      std::span<Parameter<Real>* const>(params), loss_value, 40, pick);
  INFO("worst " << report.worst_param << " rel " << report.max_rel_err);
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("score_records matches per-record clean predictions") {
  const auto data = toy_dataset(92);
  auto model = toy_model(data, 23);
  const auto ids = std::span<const std::uint32_t>(data.test_records.data(),
                                                  data.test_records.size());
  const auto scores = score_records(model, data, ids);
  REQUIRE(scores.size() == ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Graph<Real> g;
    const auto enc = model.encode(g, data, data.records[ids[i]]);
    CHECK(scores[i] == model.predict(g, enc).scalar_value());
    CHECK(scores[i] > 0.0);
    CHECK(scores[i] < 1.0);
  }
}
