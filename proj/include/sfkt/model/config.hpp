#pragma once

#include <cstddef>
#include <cstdint>

#include "sfkt/core/tensor.hpp"

namespace sfkt {

/// Architecture sizes and variant switches. One width `dim` is shared by the
/// student, question, concept, and response embeddings.
struct ModelConfig {
  std::size_t dim = 64;
  std::size_t buckets = 100;       // count-bucket embedding rows per side
  std::size_t meta_numbers = 100;  // meta-number embeddings per side
  std::size_t max_len = 200;       // window length; bounds attention distance
  bool relu_head = false;          // ReLU between the two prediction layers
  bool cosine_similarity = false;  // cosine instead of dot in the contrastive loss
  bool scale_attention = false;    // divide attention logits by sqrt(dim)

  void check() const {
    require(dim >= 1, "dim must be at least 1");
    require(buckets >= 2, "buckets must be at least 2");
    require(meta_numbers >= 1, "meta_numbers must be at least 1");
    require(max_len >= 1, "max_len must be at least 1");
  }
};

/// Weights of the auxiliary objectives. A weight of zero disables the
/// corresponding term entirely, including its forward pass.
struct LossWeights {
  double lambda_cl = 0.5;
  double lambda_pert = 1.0;
  double tau = 1.0;
  double dropout_rate = 0.2;

  void check() const {
    require(lambda_cl >= 0.0, "lambda_cl must be non-negative");
    require(lambda_pert >= 0.0, "lambda_pert must be non-negative");
    require(tau > 0.0, "tau must be positive");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0,
            "dropout_rate must be in [0, 1)");
  }
};

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  double learning_rate = 0.001;
  std::size_t batch_size = 24;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  double grad_clip_norm = 5.0;

  void check() const {
    model.check();
    weights.check();
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(max_epochs >= 1, "max_epochs must be at least 1");
    require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
  }
};

}  // namespace sfkt
