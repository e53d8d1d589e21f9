#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sfkt/core/errors.hpp"
#include "sfkt/io/binary.hpp"
#include "sfkt/model/network.hpp"

namespace sfkt {

inline constexpr char kCheckpointMagic[8] = {'S', 'F', 'K', 'T', 'C', 'K', 'P', '1'};

/// Model checkpoint: configuration as JSON text, the vocabulary hash of the
/// dataset the model was trained against, the count-normalization statistics,
/// and every parameter tensor by name in 64-bit floats. Loading into a model
/// demands an exact name/shape match and the same vocabulary hash.
struct Checkpoint {
  std::string config_json;
  std::uint64_t vocab_hash = 0;
  std::uint64_t student_rows = 0;
  std::uint64_t question_rows = 0;
  std::uint64_t concept_rows = 0;
  CountStats success_stats;
  CountStats failure_stats;
  std::map<std::string, Tensor<double>> tensors;
};

namespace detail {

inline void write_stats(std::ostream& out, const CountStats& s) {
  io::write_scalar<double>(out, s.min);
  io::write_scalar<double>(out, s.max);
  io::write_scalar<std::uint8_t>(out, s.valid ? 1 : 0);
}

inline CountStats read_stats(std::istream& in) {
  CountStats s;
  s.min = io::read_scalar<double>(in, "checkpoint stats");
  s.max = io::read_scalar<double>(in, "checkpoint stats");
  s.valid = io::read_scalar<std::uint8_t>(in, "checkpoint stats") != 0;
  return s;
}

}  // namespace detail

template <typename Real>
Checkpoint checkpoint_from_model(SfktModel<Real>& model,
                                 std::uint64_t vocab_hash_value,
                                 const std::string& config_json) {
  Checkpoint ckpt;
  ckpt.config_json = config_json;
  ckpt.vocab_hash = vocab_hash_value;
  ckpt.student_rows = model.student_table.value.rows();
  ckpt.question_rows = model.question_table.value.rows();
  ckpt.concept_rows = model.concept_table.value.rows();
  ckpt.success_stats = {model.total_term.success.count_min,
                        model.total_term.success.count_max,
                        model.total_term.success.stats_valid};
  ckpt.failure_stats = {model.total_term.failure.count_min,
                        model.total_term.failure.count_max,
                        model.total_term.failure.stats_valid};
  model.for_each_parameter([&](Parameter<Real>& p) {
    ckpt.tensors.emplace(p.name, p.value.template cast<double>());
  });
  return ckpt;
}

template <typename Real>
void load_into_model(const Checkpoint& ckpt, SfktModel<Real>& model) {
  std::size_t matched = 0;
  model.for_each_parameter([&](Parameter<Real>& p) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) {
      throw InputError("checkpoint is missing parameter " + p.name);
    }
    if (it->second.shape != p.value.shape) {
      throw InputError("checkpoint shape mismatch for parameter " + p.name);
    }
    p.value = it->second.template cast<Real>();
    p.grad = Tensor<Real>(p.value.shape);
    ++matched;
  });
  if (matched != ckpt.tensors.size()) {
    throw InputError("checkpoint contains tensors this model does not use");
  }
  model.total_term.success.count_min = ckpt.success_stats.min;
  model.total_term.success.count_max = ckpt.success_stats.max;
  model.total_term.success.stats_valid = ckpt.success_stats.valid;
  model.total_term.failure.count_min = ckpt.failure_stats.min;
  model.total_term.failure.count_max = ckpt.failure_stats.max;
  model.total_term.failure.stats_valid = ckpt.failure_stats.valid;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  io::write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  io::write_string(out, ckpt.config_json);
  io::write_scalar<std::uint64_t>(out, ckpt.vocab_hash);
  io::write_scalar<std::uint64_t>(out, ckpt.student_rows);
  io::write_scalar<std::uint64_t>(out, ckpt.question_rows);
  io::write_scalar<std::uint64_t>(out, ckpt.concept_rows);
  detail::write_stats(out, ckpt.success_stats);
  detail::write_stats(out, ckpt.failure_stats);
  io::write_scalar<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    io::write_string(out, name);
    io::write_scalar<std::uint8_t>(out,
                                   static_cast<std::uint8_t>(tensor.shape.size()));
    for (const auto dim : tensor.shape) {
      io::write_scalar<std::uint64_t>(out, dim);
    }
    io::write_bytes(out, tensor.data.data(), tensor.data.size() * sizeof(double));
  }
  if (!out) throw InputError("failed to write checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  io::read_bytes(in, magic, sizeof(magic), "checkpoint header");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw InputError("not a checkpoint file: " + path);
  }
  Checkpoint ckpt;
  ckpt.config_json = io::read_string(in, "checkpoint config");
  ckpt.vocab_hash = io::read_scalar<std::uint64_t>(in, "vocab hash");
  ckpt.student_rows = io::read_scalar<std::uint64_t>(in, "student rows");
  ckpt.question_rows = io::read_scalar<std::uint64_t>(in, "question rows");
  ckpt.concept_rows = io::read_scalar<std::uint64_t>(in, "concept rows");
  ckpt.success_stats = detail::read_stats(in);
  ckpt.failure_stats = detail::read_stats(in);
  const auto n_tensors = io::read_scalar<std::uint64_t>(in, "tensor count");
  for (std::uint64_t t = 0; t < n_tensors; ++t) {
    const auto name = io::read_string(in, "tensor name");
    const auto rank = io::read_scalar<std::uint8_t>(in, "tensor rank");
    if (rank == 0 || rank > 2) throw InputError("checkpoint: bad tensor rank");
    std::vector<std::size_t> shape;
    for (std::uint8_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(
          io::read_scalar<std::uint64_t>(in, "tensor shape")));
    }
    Tensor<double> tensor(shape);
    io::read_bytes(in, tensor.data.data(), tensor.data.size() * sizeof(double),
                   "tensor data");
    ckpt.tensors.emplace(name, std::move(tensor));
  }
  return ckpt;
}

}  // namespace sfkt
