#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "sfkt/core/errors.hpp"
#include "sfkt/data/pipeline.hpp"
#include "sfkt/io/binary.hpp"

namespace sfkt {

/// Prepared-dataset cache. The payload stores the vocabularies, the interned
/// sequences with split labels, the window length, and the count statistics;
/// windows, records, and per-record count snapshots are recomputed on load
/// through the same derivation the builder uses. A content hash over the
/// payload identifies the dataset to downstream artifacts.
inline constexpr char kCacheMagic[8] = {'S', 'F', 'K', 'T', 'D', 'A', 'T', '1'};

namespace detail {

inline void serialize_index_map(std::ostream& out, const IndexMap& map) {
  io::write_scalar<std::uint64_t>(out, map.keys().size());
  for (const auto& k : map.keys()) io::write_string(out, k);
}

inline void deserialize_index_map(std::istream& in, IndexMap& map,
                                  const char* what) {
  const auto n = io::read_scalar<std::uint64_t>(in, what);
  for (std::uint64_t i = 0; i < n; ++i) {
    map.intern(io::read_string(in, what));
  }
}

inline void serialize_stats(std::ostream& out, const CountStats& s) {
  io::write_scalar<double>(out, s.min);
  io::write_scalar<double>(out, s.max);
  io::write_scalar<std::uint8_t>(out, s.valid ? 1 : 0);
}

inline CountStats deserialize_stats(std::istream& in) {
  CountStats s;
  s.min = io::read_scalar<double>(in, "count stats");
  s.max = io::read_scalar<double>(in, "count stats");
  s.valid = io::read_scalar<std::uint8_t>(in, "count stats") != 0;
  return s;
}

inline std::string dataset_payload(const Dataset& ds) {
  std::ostringstream out(std::ios::binary);
  serialize_index_map(out, ds.vocab.students);
  serialize_index_map(out, ds.vocab.questions);
  serialize_index_map(out, ds.vocab.concepts);
  io::write_scalar<std::uint64_t>(out, ds.max_len);
  serialize_stats(out, ds.success_stats);
  serialize_stats(out, ds.failure_stats);
  io::write_scalar<std::uint64_t>(out, ds.sequences.size());
  for (const auto& seq : ds.sequences) {
    io::write_scalar<std::uint32_t>(out, seq.student);
    io::write_scalar<std::uint64_t>(out, seq.steps.size());
    for (const auto& step : seq.steps) {
      io::write_scalar<std::uint32_t>(out, step.question);
      io::write_scalar<std::uint16_t>(
          out, static_cast<std::uint16_t>(step.concepts.size()));
      for (const auto k : step.concepts) io::write_scalar<std::uint32_t>(out, k);
      io::write_scalar<std::uint8_t>(out, step.response);
      io::write_scalar<std::uint8_t>(out, static_cast<std::uint8_t>(step.split));
    }
  }
  return std::move(out).str();
}

}  // namespace detail

inline std::uint64_t dataset_content_hash(const Dataset& ds) {
  io::Fnv1a h;
  h.feed(detail::dataset_payload(ds));
  return h.value();
}

/// Hash of the vocabulary alone; checkpoints pin this so a model is never
/// evaluated against data with reindexed ids.
inline std::uint64_t vocab_hash(const Vocab& vocab) {
  io::Fnv1a h;
  for (const IndexMap* map :
       {&vocab.students, &vocab.questions, &vocab.concepts}) {
    h.feed_scalar<std::uint64_t>(map->keys().size());
    for (const auto& k : map->keys()) {
      h.feed(k);
      h.feed_scalar<char>('\0');
    }
  }
  return h.value();
}

inline void save_dataset_cache(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open cache file for writing: " + path);
  const auto payload = detail::dataset_payload(ds);
  io::Fnv1a h;
  h.feed(payload);
  io::write_bytes(out, kCacheMagic, sizeof(kCacheMagic));
  io::write_scalar<std::uint64_t>(out, h.value());
  io::write_scalar<std::uint64_t>(out, payload.size());
  io::write_bytes(out, payload.data(), payload.size());
  if (!out) throw InputError("failed to write cache file: " + path);
}

inline Dataset load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open cache file: " + path);
  char magic[sizeof(kCacheMagic)];
  io::read_bytes(in, magic, sizeof(magic), "cache header");
  if (std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
    throw InputError("not a dataset cache file: " + path);
  }
  const auto stored_hash = io::read_scalar<std::uint64_t>(in, "cache hash");
  const auto payload_size = io::read_scalar<std::uint64_t>(in, "cache size");
  std::string payload(payload_size, '\0');
  io::read_bytes(in, payload.data(), payload_size, "cache payload");
  io::Fnv1a h;
  h.feed(payload);
  if (h.value() != stored_hash) {
    throw InputError("cache content hash mismatch, file is corrupt: " + path);
  }

  std::istringstream body(payload, std::ios::binary);
  Dataset ds;
  detail::deserialize_index_map(body, ds.vocab.students, "student vocabulary");
  detail::deserialize_index_map(body, ds.vocab.questions, "question vocabulary");
  detail::deserialize_index_map(body, ds.vocab.concepts, "concept vocabulary");
  ds.max_len = io::read_scalar<std::uint64_t>(body, "window length");
  require(ds.max_len >= 1, "cache: window length must be at least 1");
  ds.success_stats = detail::deserialize_stats(body);
  ds.failure_stats = detail::deserialize_stats(body);
  const auto n_seq = io::read_scalar<std::uint64_t>(body, "sequence count");
  ds.sequences.reserve(n_seq);
  for (std::uint64_t s = 0; s < n_seq; ++s) {
    StudentSequence seq;
    seq.student = io::read_scalar<std::uint32_t>(body, "student index");
    const auto n_steps = io::read_scalar<std::uint64_t>(body, "step count");
    seq.steps.reserve(n_steps);
    for (std::uint64_t t = 0; t < n_steps; ++t) {
      SeqStep step;
      step.question = io::read_scalar<std::uint32_t>(body, "question index");
      const auto nk = io::read_scalar<std::uint16_t>(body, "concept count");
      if (nk == 0) throw InputError("cache: step with no concepts");
      step.concepts.reserve(nk);
      for (std::uint16_t k = 0; k < nk; ++k) {
        step.concepts.push_back(
            io::read_scalar<std::uint32_t>(body, "concept index"));
      }
      step.response = io::read_scalar<std::uint8_t>(body, "response");
      const auto split = io::read_scalar<std::uint8_t>(body, "split label");
      if (split > 2) throw InputError("cache: invalid split label");
      step.split = static_cast<Split>(split);
      seq.steps.push_back(std::move(step));
    }
    ds.sequences.push_back(std::move(seq));
  }
  detail::derive_windows_and_records(ds);
  return ds;
}

}  // namespace sfkt
