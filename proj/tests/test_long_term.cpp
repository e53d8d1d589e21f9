#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "sfkt/core/grad_check.hpp"
#include "sfkt/core/graph.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/model/long_term.hpp"

using namespace sfkt;

namespace {

using Real = double;
using Encoder = LongTermEncoder<Real>;

void randomize(Encoder& enc, std::uint64_t seed) {
  Rng rng(seed);
  enc.for_each_parameter([&](Parameter<Real>& p) {
    for (auto& v : p.value.data) v = rng.next_range(-0.7, 0.7);
  });
}

std::vector<Real> manual_matvec(const Tensor<Real>& w,
                                std::span<const Real> x) {
  std::vector<Real> out(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      out[r] += w.at(r, c) * x[c];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("positional table follows the sinusoid layout") {
  const auto pe = positional_table<double>(6, 4);
  REQUIRE(pe.rows() == 7);
  REQUIRE(pe.cols() == 4);

  // Row 0 is the unused placeholder.
  for (std::size_t j = 0; j < 4; ++j) CHECK(pe.at(0, j) == 0.0);

  // Distance 1: even slots sine, odd slots cosine of the same angle.
  CHECK(pe.at(1, 0) == Catch::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe.at(1, 1) == Catch::Approx(std::cos(1.0)).epsilon(1e-12));
  const double angle2 = 1.0 / std::pow(10000.0, 2.0 / 4.0);
  CHECK(pe.at(1, 2) == Catch::Approx(std::sin(angle2)).epsilon(1e-12));
  CHECK(pe.at(1, 3) == Catch::Approx(std::cos(angle2)).epsilon(1e-12));

  // Distance 5, first pair.
  CHECK(pe.at(5, 0) == Catch::Approx(std::sin(5.0)).epsilon(1e-12));
  CHECK(pe.at(5, 1) == Catch::Approx(std::cos(5.0)).epsilon(1e-12));

  // Values stay in [-1, 1].
  for (std::size_t r = 1; r < pe.rows(); ++r) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(pe.at(r, j) >= -1.0);
      CHECK(pe.at(r, j) <= 1.0);
    }
  }
}

TEST_CASE("positional table handles odd widths") {
  const auto pe = positional_table<double>(3, 5);
  CHECK(pe.cols() == 5);
  CHECK(pe.at(2, 4) ==
        Catch::Approx(std::sin(2.0 / std::pow(10000.0, 4.0 / 5.0)))
            .epsilon(1e-12));
}

TEST_CASE("positional encoding of a single interval matches the table") {
  const auto row = positional_encoding(4, 6);
  const auto table = positional_table<double>(4, 6);
  REQUIRE(row.size() == 6);
  for (std::size_t j = 0; j < 6; ++j) CHECK(row[j] == table.at(4, j));
  CHECK_THROWS(positional_encoding(0, 6));
}

TEST_CASE("empty history yields the trainable fallback vector") {
  Encoder enc(5, 8);
  randomize(enc, 61);
  Graph<Real> g;
  const Real qc[] = {0.3, -0.2, 0.8, 0.1, -0.5, 0.7, 0.2, 0.0, 0.4, -0.1};
  const auto out = enc.attend(g, g.constant(qc), {});
  REQUIRE(out.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(out.values()[i] == enc.empty_history.value[i]);
  }

  enc.empty_history.zero_grad();
  g.backward(g.dot(out, out));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(enc.empty_history.grad[i] ==
          Catch::Approx(2.0 * enc.empty_history.value[i]).epsilon(1e-12));
  }
}

TEST_CASE("history intervals outside the table are rejected") {
  Encoder enc(3, 4);
  randomize(enc, 62);
  Graph<Real> g;
  const Real pvec[] = {0.1, 0.2, 0.3};
  const Real kvec[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  Encoder::HistoryItem item;
  item.practice = g.constant(pvec);
  item.key_input = g.constant(kvec);

  item.interval = 0;
  CHECK_THROWS(enc.prepare(g, std::span<const Encoder::HistoryItem>(&item, 1)));
  item.interval = 5;  // table holds distances 1..4
  CHECK_THROWS(enc.prepare(g, std::span<const Encoder::HistoryItem>(&item, 1)));
  item.interval = 4;
  CHECK_NOTHROW(
      enc.prepare(g, std::span<const Encoder::HistoryItem>(&item, 1)));
}

TEST_CASE("attention reproduces a by-hand softmax mix") {
  const std::size_t d = 3;
  Encoder enc(d, 6);
  randomize(enc, 63);

  Graph<Real> g;
  const Real p1[] = {0.4, -0.6, 0.2};
  const Real p2[] = {-0.3, 0.5, 0.9};
  const Real k1[] = {0.2, 0.1, -0.4, 0.6, 0.3, -0.2};
  const Real k2[] = {-0.5, 0.7, 0.2, -0.1, 0.4, 0.8};
  const Real qc[] = {0.9, -0.2, 0.3, 0.5, -0.7, 0.1};

  std::vector<Encoder::HistoryItem> items(2);
  items[0] = {g.constant(p1), g.constant(k1), 2};
  items[1] = {g.constant(p2), g.constant(k2), 5};
  const auto prep = enc.prepare(g, items);
  const auto out = enc.attend(g, g.constant(qc), prep);

  // Recompute with plain loops over the parameter tensors.
  const auto query = manual_matvec(enc.query_weight.value, qc);
  const auto key_a = manual_matvec(enc.key_weight.value, k1);
  const auto key_b = manual_matvec(enc.key_weight.value, k2);
  std::vector<Real> val_in_a(d), val_in_b(d);
  for (std::size_t j = 0; j < d; ++j) {
    val_in_a[j] = p1[j] + enc.pe.at(2, j);
    val_in_b[j] = p2[j] + enc.pe.at(5, j);
  }
  const auto val_a = manual_matvec(enc.value_weight.value, val_in_a);
  const auto val_b = manual_matvec(enc.value_weight.value, val_in_b);
  double la = 0.0, lb = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    la += query[j] * key_a[j];
    lb += query[j] * key_b[j];
  }
  const double wa = std::exp(la) / (std::exp(la) + std::exp(lb));
  const double wb = 1.0 - wa;
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(out.values()[j] ==
          Catch::Approx(wa * val_a[j] + wb * val_b[j]).epsilon(1e-10));
  }
}

TEST_CASE("logit scaling flag divides scores by the embedding-width root") {
  const std::size_t d = 4;
  Encoder plain(d, 5, false);
  Encoder scaled(d, 5, true);
  randomize(plain, 64);
  randomize(scaled, 64);  // identical parameters

  const Real p1[] = {0.8, -0.1, 0.6, 0.2};
  const Real p2[] = {-0.7, 0.9, -0.2, 0.4};
  const Real k1[] = {0.3, 0.2, -0.6, 0.1, 0.5, -0.3, 0.7, 0.2};
  const Real k2[] = {-0.2, 0.8, 0.4, -0.5, 0.1, 0.6, -0.4, 0.3};
  const Real qc[] = {0.5, -0.9, 0.2, 0.7, -0.3, 0.1, 0.8, -0.6};

  const auto attended = [&](Encoder& enc) {
    Graph<Real> g;
    std::vector<Encoder::HistoryItem> items(2);
    items[0] = {g.constant(p1), g.constant(k1), 1};
    items[1] = {g.constant(p2), g.constant(k2), 3};
    const auto out = enc.feature(g, g.constant(qc), items);
    return std::vector<Real>(out.values().begin(), out.values().end());
  };
  const auto out_plain = attended(plain);
  const auto out_scaled = attended(scaled);

  // Same parameters, different logit temperature: the mixes must differ
  // unless the two logits happen to coincide.
  bool any_diff = false;
  for (std::size_t j = 0; j < d; ++j) {
    if (out_plain[j] != out_scaled[j]) any_diff = true;
  }
  CHECK(any_diff);

  // And the scaled weights match an explicit recomputation.
  const auto query = manual_matvec(scaled.query_weight.value, qc);
  const auto key_a = manual_matvec(scaled.key_weight.value, k1);
  const auto key_b = manual_matvec(scaled.key_weight.value, k2);
  double la = 0.0, lb = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    la += query[j] * key_a[j];
    lb += query[j] * key_b[j];
  }
  la /= std::sqrt(double(d));
  lb /= std::sqrt(double(d));
  const double wa = std::exp(la) / (std::exp(la) + std::exp(lb));
  std::vector<Real> val_in_a(d), val_in_b(d);
  for (std::size_t j = 0; j < d; ++j) {
    val_in_a[j] = p1[j] + scaled.pe.at(1, j);
    val_in_b[j] = p2[j] + scaled.pe.at(3, j);
  }
  const auto val_a = manual_matvec(scaled.value_weight.value, val_in_a);
  const auto val_b = manual_matvec(scaled.value_weight.value, val_in_b);
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(out_scaled[j] ==
          Catch::Approx(wa * val_a[j] + (1.0 - wa) * val_b[j]).epsilon(1e-10));
  }
}

TEST_CASE("attention output stays inside the convex hull of the values") {
  const std::size_t d = 4;
  Encoder enc(d, 10);
  randomize(enc, 65);
  // Identity value projection makes the value vectors directly inspectable.
  enc.value_weight.value.fill(0.0);
  for (std::size_t j = 0; j < d; ++j) enc.value_weight.value.at(j, j) = 1.0;

  Graph<Real> g;
  Rng rng(66);
  std::vector<std::vector<Real>> raw_values;
  std::vector<Encoder::HistoryItem> items;
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<Real> practice(d), key(2 * d);
    for (auto& v : practice) v = rng.next_range(-1.0, 1.0);
    for (auto& v : key) v = rng.next_range(-1.0, 1.0);
    const auto interval = static_cast<std::uint32_t>(1 + rng.next_below(10));
    std::vector<Real> value(d);
    for (std::size_t j = 0; j < d; ++j) {
      value[j] = practice[j] + enc.pe.at(interval, j);
    }
    raw_values.push_back(value);
    items.push_back({g.constant(practice), g.constant(key), interval});
  }
  std::vector<Real> qc(2 * d);
  for (auto& v : qc) v = rng.next_range(-1.0, 1.0);
  const auto out = enc.feature(g, g.constant(qc), items);

  for (std::size_t j = 0; j < d; ++j) {
    Real lo = raw_values[0][j], hi = raw_values[0][j];
    for (const auto& v : raw_values) {
      lo = std::min(lo, v[j]);
      hi = std::max(hi, v[j]);
    }
    CHECK(out.values()[j] >= lo - 1e-12);
    CHECK(out.values()[j] <= hi + 1e-12);
  }
}

TEST_CASE("long-term gradients match finite differences") {
  const std::size_t d = 4;
  Encoder enc(d, 6);
  randomize(enc, 67);
  std::vector<Parameter<Real>*> params;
  enc.for_each_parameter([&](Parameter<Real>& p) {
    p.zero_grad();
    params.push_back(&p);
  });

  const Real p1[] = {0.4, -0.6, 0.2, 0.8};
  const Real p2[] = {-0.3, 0.5, 0.9, -0.1};
  const Real k1[] = {0.2, 0.1, -0.4, 0.6, 0.3, -0.2, 0.5, 0.1};
  const Real k2[] = {-0.5, 0.7, 0.2, -0.1, 0.4, 0.8, -0.3, 0.6};
  const Real qc[] = {0.9, -0.2, 0.3, 0.5, -0.7, 0.1, 0.2, -0.4};

  const auto forward = [&](Graph<Real>& g) {
    std::vector<Encoder::HistoryItem> items(2);
    items[0] = {g.constant(p1), g.constant(k1), 2};
    items[1] = {g.constant(p2), g.constant(k2), 4};
    return g.log_sum_exp(enc.feature(g, g.constant(qc), items));
  };
  {
    Graph<Real> g;
    g.backward(forward(g));
  }
  Rng unused(1);
  const auto report = sfkt::finite_difference_check<Real>(
      std::span<Parameter<Real>* const>(params),
      [&] {
        Graph<Real> g;
        return forward(g).scalar_value();
      },
      0, unused, 1e-5);
  INFO("worst " << report.worst_param << " rel " << report.max_rel_err);
  CHECK(report.max_rel_err < 1e-4);
}
