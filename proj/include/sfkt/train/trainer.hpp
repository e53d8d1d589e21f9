#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sfkt/core/errors.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/data/pipeline.hpp"
#include "sfkt/eval/evaluate.hpp"
#include "sfkt/model/network.hpp"
#include "sfkt/train/adam.hpp"

namespace sfkt {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss_pred = 0.0;
  double phi_cl = 0.0;
  double phi_pert = 0.0;
  double loss_total = 0.0;
  std::optional<double> val_auc;
  bool improved = false;
};

struct FitResult {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no validation selection ran
  std::optional<double> best_val_auc;
  std::vector<std::string> warnings;
  bool aborted = false;
  std::string abort_reason;
};

/// Epoch loop: shuffle the training records, optimize in fixed-size batches,
/// score validation AUC, keep the best parameters, stop after `patience`
/// non-improving epochs. Works in place on the model; on return the model
/// holds the best parameters seen (or the final ones when there was nothing
/// to validate against, with a warning).
///
/// Per-record losses are averaged per batch; the logged epoch values weight
/// each batch by its record count, so they are means over records for the
/// prediction and perturbation terms and record-weighted means of the
/// per-batch value for the contrastive term.
template <typename Real>
FitResult fit(SfktModel<Real>& model, const Dataset& data,
              const TrainConfig& cfg, std::ostream* progress = nullptr) {
  cfg.check();
  require(!data.train_records.empty(), "fit: no training records");
  require(cfg.model.max_len == data.max_len,
          "fit: model window length does not match the dataset");

  auto params = model.parameters();
  AdamState<Real> opt{std::span<Parameter<Real>* const>(params)};

  const bool has_val = !data.val_records.empty();
  FitResult result;
  if (!has_val) {
    result.warnings.push_back(
        "validation split is empty; keeping final-epoch parameters");
  }

  std::vector<Tensor<Real>> best_snapshot;
  const auto snapshot = [&] {
    best_snapshot.clear();
    for (const auto* p : params) best_snapshot.push_back(p->value);
  };
  const auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i]->value = best_snapshot[i];
    }
  };

  std::vector<std::uint32_t> order(data.train_records.begin(),
                                   data.train_records.end());
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 1, epoch));
    Rng dropout_rng(derive_seed(cfg.seed, 2, epoch));
    shuffle(order, shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    std::size_t seen = 0;
    bool epoch_aborted = false;

    for (std::size_t at = 0; at < order.size() && !epoch_aborted;
         at += cfg.batch_size) {
      const std::size_t take = std::min(cfg.batch_size, order.size() - at);
      const std::span<const std::uint32_t> batch(order.data() + at, take);
      model.zero_grad();
      Graph<Real> g;
      BatchLoss<Real> loss;
      try {
        loss = batch_objective(g, model, data, batch, cfg.weights, true,
                               dropout_rng);
        g.backward(loss.total);
        clip_gradients(std::span<Parameter<Real>* const>(params),
                       cfg.grad_clip_norm);
        adam_step(std::span<Parameter<Real>* const>(params), opt,
                  cfg.learning_rate);
      } catch (const GradientError& err) {
        result.warnings.push_back("epoch " + std::to_string(epoch) +
                                  " aborted: " + err.what());
        epoch_aborted = true;
        break;
      }
      const auto w = static_cast<double>(take);
      log.loss_pred += w * loss.pred;
      log.phi_cl += w * loss.contrastive;
      log.phi_pert += w * loss.perturbation;
      log.loss_total += w * static_cast<double>(loss.total.scalar_value());
      seen += take;
    }
    if (seen > 0) {
      const auto inv = 1.0 / static_cast<double>(seen);
      log.loss_pred *= inv;
      log.phi_cl *= inv;
      log.phi_pert *= inv;
      log.loss_total *= inv;
    }

    if (has_val) {
      log.val_auc = validation_auc(model, data,
                                   std::span<const std::uint32_t>(
                                       data.val_records.data(),
                                       data.val_records.size()));
    }

    const bool improved =
        has_val && log.val_auc.has_value() &&
        (!result.best_val_auc.has_value() ||
         *log.val_auc > *result.best_val_auc);
    log.improved = improved;
    if (improved) {
      result.best_val_auc = log.val_auc;
      result.best_epoch = epoch;
      snapshot();
      stale_epochs = 0;
    } else if (has_val) {
      ++stale_epochs;
    }

    if (progress) {
      (*progress) << "epoch " << epoch << " loss " << log.loss_total
                  << " pred " << log.loss_pred << " cl " << log.phi_cl
                  << " pert " << log.phi_pert;
      if (log.val_auc) (*progress) << " val_auc " << *log.val_auc;
      if (improved) (*progress) << " *";
      (*progress) << '\n';
    }
    result.epochs.push_back(log);

    if (epoch_aborted) {
      result.aborted = true;
      result.abort_reason = result.warnings.back();
      break;
    }
    // Stop once `patience` consecutive epochs failed to improve; patience 0
    // stops at the first non-improving epoch, same as patience 1.
    const std::size_t stale_limit = std::max<std::size_t>(cfg.patience, 1);
    if (has_val && stale_epochs >= stale_limit) break;
  }

  if (result.best_epoch != 0) restore();
  return result;
}

}  // namespace sfkt
