#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/graph.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/core/tensor.hpp"
#include "sfkt/data/pipeline.hpp"
#include "sfkt/model/config.hpp"
#include "sfkt/model/long_term.hpp"
#include "sfkt/model/total_term.hpp"

namespace sfkt {

/// The complete model: embedding tables, the practice fusion layer, both
/// encoders, the two-layer prediction head, and the contrastive projection
/// head shared by both encoder branches.
template <typename Real>
class SfktModel {
 public:
  SfktModel(const ModelConfig& cfg, std::size_t student_rows,
            std::size_t question_rows, std::size_t concept_rows)
      : config(cfg),
        student_table("embed.student", Tensor<Real>::mat(student_rows, cfg.dim)),
        question_table("embed.question",
                       Tensor<Real>::mat(question_rows, cfg.dim)),
        concept_table("embed.concept", Tensor<Real>::mat(concept_rows, cfg.dim)),
        response_table("embed.response", Tensor<Real>::mat(2, cfg.dim)),
        practice_weight("practice.weight", Tensor<Real>::mat(cfg.dim, 3 * cfg.dim)),
        practice_bias("practice.bias", Tensor<Real>::vec(cfg.dim)),
        total_term(concept_rows, cfg.buckets, cfg.meta_numbers, cfg.dim),
        long_term(cfg.dim, cfg.max_len, cfg.scale_attention),
        head_weight1("head.weight1", Tensor<Real>::mat(2 * cfg.dim, 5 * cfg.dim)),
        head_bias1("head.bias1", Tensor<Real>::vec(2 * cfg.dim)),
        head_weight2("head.weight2", Tensor<Real>::mat(1, 2 * cfg.dim)),
        head_bias2("head.bias2", Tensor<Real>::vec(1)),
        proj_weight1("contrast.weight1", Tensor<Real>::mat(2 * cfg.dim, cfg.dim)),
        proj_bias1("contrast.bias1", Tensor<Real>::vec(2 * cfg.dim)),
        proj_weight2("contrast.weight2", Tensor<Real>::mat(cfg.dim, 2 * cfg.dim)),
        proj_bias2("contrast.bias2", Tensor<Real>::vec(cfg.dim)) {
    cfg.check();
  }

  ModelConfig config;

  Parameter<Real> student_table;
  Parameter<Real> question_table;
  Parameter<Real> concept_table;
  Parameter<Real> response_table;
  Parameter<Real> practice_weight;
  Parameter<Real> practice_bias;
  TotalTermEncoder<Real> total_term;
  LongTermEncoder<Real> long_term;
  Parameter<Real> head_weight1;
  Parameter<Real> head_bias1;
  Parameter<Real> head_weight2;
  Parameter<Real> head_bias2;
  Parameter<Real> proj_weight1;
  Parameter<Real> proj_bias1;
  Parameter<Real> proj_weight2;
  Parameter<Real> proj_bias2;

  /// Stable declaration-order walk over every trainable tensor. Seeded
  /// initialization, the optimizer, and checkpoints all rely on this order.
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    fn(student_table);
    fn(question_table);
    fn(concept_table);
    fn(response_table);
    fn(practice_weight);
    fn(practice_bias);
    total_term.for_each_parameter(fn);
    long_term.for_each_parameter(fn);
    fn(head_weight1);
    fn(head_bias1);
    fn(head_weight2);
    fn(head_bias2);
    fn(proj_weight1);
    fn(proj_bias1);
    fn(proj_weight2);
    fn(proj_bias2);
  }

  std::vector<Parameter<Real>*> parameters() {
    std::vector<Parameter<Real>*> out;
    for_each_parameter([&](Parameter<Real>& p) { out.push_back(&p); });
    return out;
  }

  void zero_grad() {
    for_each_parameter([](Parameter<Real>& p) { p.zero_grad(); });
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for_each_parameter([&](Parameter<Real>& p) { n += p.size(); });
    return n;
  }

  using V = Value<Real>;

  V concept_mean(Graph<Real>& g, std::span<const std::uint32_t> concepts) {
    return g.gather_mean(g.param(concept_table), concepts);
  }

  /// p = W0 (q ⊕ C̄ ⊕ a) + b0 for one interaction.
  V embed_practice(Graph<Real>& g, std::uint32_t question,
                   std::span<const std::uint32_t> concepts,
                   std::uint8_t response) {
    const auto q = g.gather_row(g.param(question_table), question);
    const auto cbar = concept_mean(g, concepts);
    const auto a = g.gather_row(g.param(response_table), response ? 1u : 0u);
    const auto joined = g.concat(std::array<V, 3>{q, cbar, a});
    return g.affine(g.param(practice_weight), joined, g.param(practice_bias));
  }

  /// ŷ = σ(W4 (W3 (u ⊕ q ⊕ C̄ ⊕ v_ttl ⊕ v_lng) + b3) + b4). The inner
  /// activation is identity unless relu_head is set.
  V predict_head(Graph<Real>& g, V u, V q, V cbar, V v_ttl, V v_lng) {
    const auto joined = g.concat(std::array<V, 5>{u, q, cbar, v_ttl, v_lng});
    auto hidden = g.affine(g.param(head_weight1), joined, g.param(head_bias1));
    if (config.relu_head) hidden = g.relu(hidden);
    const auto logit =
        g.affine(g.param(head_weight2), hidden, g.param(head_bias2));
    return g.sigmoid(logit);
  }

  /// h = ReLU(W6 ReLU(W5 v + b5) + b6); one head serves both branches.
  V contrastive_project(Graph<Real>& g, V v) {
    const auto inner =
        g.relu(g.affine(g.param(proj_weight1), v, g.param(proj_bias1)));
    return g.relu(g.affine(g.param(proj_weight2), inner, g.param(proj_bias2)));
  }

  /// Everything computed for one record that later passes reuse: the target
  /// embeddings, both encoder features, and the projected history.
  struct Encoded {
    V u, q, cbar;
    V v_ttl, v_lng;
    typename LongTermEncoder<Real>::PreparedHistory history;
  };

  Encoded encode(Graph<Real>& g, const Dataset& data, const Record& rec) {
    const auto& seq = data.sequence_of(rec);
    const auto& step = data.step_of(rec);
    const auto& win = data.window_of(rec);

    Encoded enc;
    enc.u = g.gather_row(g.param(student_table), seq.student);
    enc.q = g.gather_row(g.param(question_table), step.question);
    enc.cbar = concept_mean(g, step.concepts);
    enc.v_ttl = total_term.feature(g, step.concepts, rec.target_counts);

    std::vector<typename LongTermEncoder<Real>::HistoryItem> items;
    items.reserve(rec.pos - win.begin);
    for (std::uint32_t i = win.begin; i < rec.pos; ++i) {
      const auto& past = seq.steps[i];
      typename LongTermEncoder<Real>::HistoryItem item;
      item.practice = embed_practice(g, past.question, past.concepts, past.response);
      const auto past_q = g.gather_row(g.param(question_table), past.question);
      const auto past_c = concept_mean(g, past.concepts);
      item.key_input = g.concat(std::array<V, 2>{past_q, past_c});
      item.interval = rec.pos - i;
      items.push_back(item);
    }
    enc.history = long_term.prepare(g, items);
    enc.v_lng = long_term.attend(g, g.concat(std::array<V, 2>{enc.q, enc.cbar}),
                                 enc.history);
    return enc;
  }

  V predict(Graph<Real>& g, const Encoded& enc) {
    return predict_head(g, enc.u, enc.q, enc.cbar, enc.v_ttl, enc.v_lng);
  }

  /// Prediction with the target question and concept embeddings passed
  /// through dropout. The history and the total-term feature are reused
  /// untouched; only the attention query and the head inputs see the
  /// perturbed embeddings. At rate 0 this reduces to predict() exactly.
  V perturbed_predict(Graph<Real>& g, const Encoded& enc, Real rate,
                      bool train_mode, Rng& rng) {
    const auto q = g.dropout(enc.q, rate, train_mode, rng);
    const auto cbar = g.dropout(enc.cbar, rate, train_mode, rng);
    const auto v_lng =
        long_term.attend(g, g.concat(std::array<V, 2>{q, cbar}), enc.history);
    return predict_head(g, enc.u, q, cbar, enc.v_ttl, v_lng);
  }
};

/// Model sized for a prepared dataset: embedding tables get one row per
/// observed id plus the UNKNOWN row, and the count projectors take their
/// normalization statistics from the training split.
template <typename Real>
SfktModel<Real> make_model(const ModelConfig& cfg, const Dataset& data) {
  SfktModel<Real> model(cfg, data.vocab.students.table_rows(),
                        data.vocab.questions.table_rows(),
                        data.vocab.concepts.table_rows());
  model.total_term.success.set_stats(data.success_stats);
  model.total_term.failure.set_stats(data.failure_stats);
  return model;
}

/// Two-view batch contrastive loss. For each record i the positive pair is
/// h_ttl[i] with h_lng[i]; negatives come from the same view only. Each term
/// is log(1 + Σ_{j≠i} exp((sim_neg − sim_pos)/τ)) computed through
/// log-sum-exp, and the two per-view means are added.
template <typename Real>
Value<Real> contrastive_loss(Graph<Real>& g,
                             std::span<const Value<Real>> h_ttl,
                             std::span<const Value<Real>> h_lng, double tau,
                             bool cosine = false) {
  require(!h_ttl.empty(), "contrastive_loss: empty batch");
  require(h_ttl.size() == h_lng.size(),
          "contrastive_loss: view batch lengths differ");
  require(tau > 0.0, "contrastive_loss: tau must be positive");
  const std::size_t n = h_ttl.size();
  const Real inv_tau = Real(1) / static_cast<Real>(tau);

  const auto similarity = [&](Value<Real> a, Value<Real> b) {
    const auto raw = g.dot(a, b);
    if (!cosine) return raw;
    const auto norms = g.mul(g.dot(a, a), g.dot(b, b));
    return g.mul(raw, g.rsqrt(norms, Real(1e-12)));
  };

  const auto view_term = [&](std::span<const Value<Real>> anchor) {
    std::vector<Value<Real>> terms;
    terms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto pos = similarity(h_ttl[i], h_lng[i]);
      std::vector<Value<Real>> logits;
      logits.reserve(n);
      logits.push_back(g.constant_scalar(Real(0)));
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const auto neg = similarity(anchor[i], anchor[j]);
        logits.push_back(g.scale(g.sub(neg, pos), inv_tau));
      }
      terms.push_back(g.log_sum_exp(g.concat(logits)));
    }
    return g.mean(terms);
  };

  return g.add(view_term(h_ttl), view_term(h_lng));
}

/// Per-batch losses with the weighted total as a graph value. Component
/// values are plain numbers for logging; disabled terms (weight zero) are
/// never built and read 0.
template <typename Real>
struct BatchLoss {
  Value<Real> total;
  double pred = 0.0;
  double contrastive = 0.0;
  double perturbation = 0.0;
  std::size_t records = 0;
};

/// Builds the integrated objective L_Pred + λ_CL Φ_CL + λ_Pert Φ_Pert over a
/// batch of records. In train mode the perturbation path samples dropout
/// from `rng`; in eval mode both auxiliary paths collapse to their clean
/// equivalents and only matter for inspection.
template <typename Real>
BatchLoss<Real> batch_objective(Graph<Real>& g, SfktModel<Real>& model,
                                const Dataset& data,
                                std::span<const std::uint32_t> record_ids,
                                const LossWeights& weights, bool train_mode,
                                Rng& rng) {
  require(!record_ids.empty(), "batch_objective: empty batch");
  weights.check();

  const bool want_cl = weights.lambda_cl > 0.0;
  const bool want_pert = weights.lambda_pert > 0.0;

  std::vector<Value<Real>> pred_terms, pert_terms, h_ttl, h_lng;
  pred_terms.reserve(record_ids.size());
  for (const auto id : record_ids) {
    const auto& rec = data.records[id];
    const auto label = static_cast<Real>(data.step_of(rec).response);
    const auto enc = model.encode(g, data, rec);
    pred_terms.push_back(g.binary_cross_entropy(model.predict(g, enc), label));
    if (want_pert) {
      const auto perturbed = model.perturbed_predict(
          g, enc, static_cast<Real>(weights.dropout_rate), train_mode, rng);
      pert_terms.push_back(g.binary_cross_entropy(perturbed, label));
    }
    if (want_cl) {
      h_ttl.push_back(model.contrastive_project(g, enc.v_ttl));
      h_lng.push_back(model.contrastive_project(g, enc.v_lng));
    }
  }

  BatchLoss<Real> out;
  out.records = record_ids.size();
  auto total = g.mean(pred_terms);
  out.pred = static_cast<double>(total.scalar_value());
  if (want_cl) {
    const auto phi_cl = contrastive_loss(g, std::span<const Value<Real>>(h_ttl),
                                         std::span<const Value<Real>>(h_lng),
                                         weights.tau, model.config.cosine_similarity);
    out.contrastive = static_cast<double>(phi_cl.scalar_value());
    total = g.add(total, g.scale(phi_cl, static_cast<Real>(weights.lambda_cl)));
  }
  if (want_pert) {
    const auto phi_pert = g.mean(pert_terms);
    out.perturbation = static_cast<double>(phi_pert.scalar_value());
    total = g.add(total,
                  g.scale(phi_pert, static_cast<Real>(weights.lambda_pert)));
  }
  out.total = total;
  return out;
}

/// Clean forward scores for a set of records, in the given order.
template <typename Real>
std::vector<double> score_records(SfktModel<Real>& model, const Dataset& data,
                                  std::span<const std::uint32_t> record_ids) {
  std::vector<double> scores;
  scores.reserve(record_ids.size());
  for (const auto id : record_ids) {
    Graph<Real> g;
    const auto enc = model.encode(g, data, data.records[id]);
    scores.push_back(static_cast<double>(model.predict(g, enc).scalar_value()));
  }
  return scores;
}

}  // namespace sfkt
