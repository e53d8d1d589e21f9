#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/errors.hpp"
#include "sfkt/core/tensor.hpp"
#include "sfkt/data/interaction.hpp"

namespace sfkt {

/// How many of a student's n interactions land in each split. The first
/// floor(train_frac * n) go to train+val (the trailing floor(val_frac * that)
/// of them become validation), the rest to test. A single-interaction student
/// goes entirely to train.
struct SplitBounds {
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
};

inline SplitBounds split_bounds(std::size_t n, double train_frac = 0.8,
                                double val_frac = 0.1) {
  require(train_frac >= 0.0 && train_frac <= 1.0, "train_frac out of [0,1]");
  require(val_frac >= 0.0 && val_frac <= 1.0, "val_frac out of [0,1]");
  SplitBounds b;
  if (n == 0) return b;
  if (n == 1) {
    b.n_train = 1;
    return b;
  }
  const auto head = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n)));
  b.n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(head)));
  b.n_train = head - b.n_val;
  b.n_test = n - head;
  return b;
}

inline Split split_of_position(std::size_t pos, const SplitBounds& b) {
  if (pos < b.n_train) return Split::kTrain;
  if (pos < b.n_train + b.n_val) return Split::kVal;
  return Split::kTest;
}

/// Splits the log into three logs along each student's timeline. Students
/// with no interactions in a given split are omitted from that log.
struct SplitLogs {
  InteractionLog train;
  InteractionLog val;
  InteractionLog test;
};

inline SplitLogs chronological_split(const InteractionLog& log,
                                     double train_frac = 0.8,
                                     double val_frac = 0.1) {
  SplitLogs out;
  for (const auto& student : log.students) {
    const auto b = split_bounds(student.interactions.size(), train_frac, val_frac);
    const auto take = [&](InteractionLog& dst, std::size_t from, std::size_t count) {
      if (count == 0) return;
      InteractionLog::Student s;
      s.id = student.id;
      s.interactions.assign(student.interactions.begin() + static_cast<std::ptrdiff_t>(from),
                            student.interactions.begin() + static_cast<std::ptrdiff_t>(from + count));
      dst.students.push_back(std::move(s));
    };
    take(out.train, 0, b.n_train);
    take(out.val, b.n_train, b.n_val);
    take(out.test, b.n_train + b.n_val, b.n_test);
  }
  return out;
}

/// Builds the three vocabularies from a training log. Set per_student_limit
/// to cap how many leading interactions of each student are scanned (used to
/// restrict to the training portion without materializing a filtered log).
inline Vocab build_vocabularies(const InteractionLog& log,
                                std::span<const std::size_t> per_student_limit = {}) {
  if (log.students.empty()) {
    throw InputError("cannot build vocabularies from an empty interaction log");
  }
  Vocab vocab;
  for (std::size_t si = 0; si < log.students.size(); ++si) {
    const auto& student = log.students[si];
    std::size_t limit = student.interactions.size();
    if (!per_student_limit.empty()) {
      require(per_student_limit.size() == log.students.size(),
              "per_student_limit size mismatch");
      limit = std::min(limit, per_student_limit[si]);
    }
    if (limit == 0) continue;
    vocab.students.intern(student.id);
    for (std::size_t i = 0; i < limit; ++i) {
      const auto& row = student.interactions[i];
      vocab.questions.intern(row.question_id);
      for (const auto& k : row.concept_ids) vocab.concepts.intern(k);
    }
  }
  return vocab;
}

/// Prior count state before each step: result[t-1] covers steps 1..t-1, so
/// result[0] is empty. Counts accumulate over the full sequence regardless
/// of split labels or window boundaries.
inline std::vector<CountFeatures> compute_prefix_counts(const StudentSequence& seq) {
  std::vector<CountFeatures> out(seq.steps.size());
  CountFeatures rolling;
  for (std::size_t t = 0; t < seq.steps.size(); ++t) {
    out[t] = rolling;
    rolling.record(seq.steps[t].concepts, seq.steps[t].response);
  }
  return out;
}

/// Tiles a sequence of seq_len steps into consecutive windows of at most
/// max_len steps, no overlap, no gaps; the last window keeps the remainder.
inline std::vector<Window> window_sequences(std::uint32_t sequence,
                                            std::size_t seq_len,
                                            std::size_t max_len) {
  require(max_len >= 1, "window length must be at least 1");
  std::vector<Window> out;
  for (std::size_t begin = 0; begin < seq_len; begin += max_len) {
    const std::size_t end = std::min(begin + max_len, seq_len);
    out.push_back(Window{sequence, static_cast<std::uint32_t>(begin),
                         static_cast<std::uint32_t>(end)});
  }
  return out;
}

/// Raw min and max of the prior counts consumed as model inputs on the
/// training split, kept per side (successes and failures separately).
struct CountStats {
  double min = 0.0;
  double max = 0.0;
  bool valid = false;

  void fold(double x) {
    if (!valid) {
      min = max = x;
      valid = true;
      return;
    }
    if (x < min) min = x;
    if (x > max) max = x;
  }
};

/// One prediction target: step `pos` of sequence `sequence`, seen through
/// window `window`. target_counts[i] is the prior count pair for the step's
/// i-th concept, accumulated over the full sequence prefix.
struct Record {
  std::uint32_t sequence = 0;
  std::uint32_t window = 0;
  std::uint32_t pos = 0;
  Split split = Split::kTrain;
  std::vector<CountPair> target_counts;
};

struct DatasetConfig {
  std::size_t max_len = 200;
  double train_frac = 0.8;
  double val_frac = 0.1;
};

struct Dataset {
  Vocab vocab;
  std::vector<StudentSequence> sequences;
  std::vector<Window> windows;
  std::vector<Record> records;
  std::vector<std::uint32_t> train_records;
  std::vector<std::uint32_t> val_records;
  std::vector<std::uint32_t> test_records;
  CountStats success_stats;
  CountStats failure_stats;
  std::size_t max_len = 200;

  const StudentSequence& sequence_of(const Record& r) const {
    return sequences[r.sequence];
  }
  const SeqStep& step_of(const Record& r) const {
    return sequences[r.sequence].steps[r.pos];
  }
  const Window& window_of(const Record& r) const { return windows[r.window]; }
};

namespace detail {

/// Windows and per-record count snapshots are fully determined by the
/// sequences and the window length; both the builder and the cache loader
/// go through here so the two paths cannot drift apart.
inline void derive_windows_and_records(Dataset& ds) {
  ds.windows.clear();
  ds.records.clear();
  ds.train_records.clear();
  ds.val_records.clear();
  ds.test_records.clear();
  for (std::uint32_t si = 0; si < ds.sequences.size(); ++si) {
    const auto& seq = ds.sequences[si];
    const auto windows = window_sequences(si, seq.steps.size(), ds.max_len);
    const auto first_window = static_cast<std::uint32_t>(ds.windows.size());
    ds.windows.insert(ds.windows.end(), windows.begin(), windows.end());

    CountFeatures rolling;
    for (std::uint32_t t = 0; t < seq.steps.size(); ++t) {
      const auto& step = seq.steps[t];
      Record rec;
      rec.sequence = si;
      rec.window = first_window + t / static_cast<std::uint32_t>(ds.max_len);
      rec.pos = t;
      rec.split = step.split;
      rec.target_counts.reserve(step.concepts.size());
      for (const auto k : step.concepts) rec.target_counts.push_back(rolling.at(k));
      rolling.record(step.concepts, step.response);

      const auto id = static_cast<std::uint32_t>(ds.records.size());
      switch (rec.split) {
        case Split::kTrain: ds.train_records.push_back(id); break;
        case Split::kVal: ds.val_records.push_back(id); break;
        case Split::kTest: ds.test_records.push_back(id); break;
      }
      ds.records.push_back(std::move(rec));
    }
  }
}

}  // namespace detail

/// Assembles the full training artifact from a raw log: chronological
/// per-student split, vocabularies from the training portion only, interned
/// sequences over all interactions, window tiling, per-record prior counts,
/// and count normalization statistics from the training records.
inline Dataset build_dataset(const InteractionLog& log, const DatasetConfig& cfg = {}) {
  if (log.students.empty()) {
    throw InputError("interaction log has no usable rows");
  }
  require(cfg.max_len >= 1, "max_len must be at least 1");

  std::vector<std::size_t> train_limits;
  train_limits.reserve(log.students.size());
  std::vector<SplitBounds> bounds;
  bounds.reserve(log.students.size());
  for (const auto& student : log.students) {
    const auto b = split_bounds(student.interactions.size(), cfg.train_frac, cfg.val_frac);
    bounds.push_back(b);
    train_limits.push_back(b.n_train);
  }

  Dataset ds;
  ds.max_len = cfg.max_len;
  ds.vocab = build_vocabularies(log, train_limits);

  ds.sequences.reserve(log.students.size());
  for (std::size_t si = 0; si < log.students.size(); ++si) {
    const auto& student = log.students[si];
    StudentSequence seq;
    seq.student = ds.vocab.students.lookup(student.id);
    seq.steps.reserve(student.interactions.size());
    for (std::size_t i = 0; i < student.interactions.size(); ++i) {
      const auto& row = student.interactions[i];
      SeqStep step;
      step.question = ds.vocab.questions.lookup(row.question_id);
      step.concepts.reserve(row.concept_ids.size());
      for (const auto& k : row.concept_ids) {
        step.concepts.push_back(ds.vocab.concepts.lookup(k));
      }
      step.response = row.response;
      step.split = split_of_position(i, bounds[si]);
      seq.steps.push_back(std::move(step));
    }
    ds.sequences.push_back(std::move(seq));
  }

  detail::derive_windows_and_records(ds);

  for (const auto id : ds.train_records) {
    for (const auto& pair : ds.records[id].target_counts) {
      ds.success_stats.fold(static_cast<double>(pair.success));
      ds.failure_stats.fold(static_cast<double>(pair.failure));
    }
  }
  return ds;
}

}  // namespace sfkt
