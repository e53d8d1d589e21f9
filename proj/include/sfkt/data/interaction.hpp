#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sfkt/core/tensor.hpp"

namespace sfkt {

/// One row of the interaction log, still string-keyed.
struct Interaction {
  std::string student_id;
  std::string question_id;
  std::vector<std::string> concept_ids;  // deduplicated, input order
  std::uint8_t response = 0;             // 1 correct, 0 incorrect
  long long order_key = 0;
};

/// All interactions grouped per student. Students appear in first-occurrence
/// order; within a student, interactions are sorted by order_key with ties
/// keeping input order.
struct InteractionLog {
  struct Student {
    std::string id;
    std::vector<Interaction> interactions;
  };
  std::vector<Student> students;
  std::size_t skipped_rows = 0;

  std::size_t total_interactions() const {
    std::size_t n = 0;
    for (const auto& s : students) n += s.interactions.size();
    return n;
  }
};

/// String-to-index map with a reserved UNKNOWN slot at index size(). Lookup
/// of an unseen key returns the UNKNOWN index instead of failing, so models
/// trained on one vocabulary can score held-out data containing new ids.
class IndexMap {
 public:
  std::uint32_t intern(const std::string& key) {
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(keys_.size());
    index_.emplace(key, id);
    keys_.push_back(key);
    return id;
  }

  std::uint32_t lookup(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? unknown_index() : it->second;
  }

  bool contains(const std::string& key) const { return index_.count(key) != 0; }

  std::uint32_t unknown_index() const {
    return static_cast<std::uint32_t>(keys_.size());
  }

  /// Number of observed keys, excluding the UNKNOWN slot.
  std::size_t observed() const { return keys_.size(); }

  /// Rows an embedding table over this map needs (observed + UNKNOWN).
  std::size_t table_rows() const { return keys_.size() + 1; }

  /// Keys in index order; drives deterministic serialization.
  const std::vector<std::string>& keys() const { return keys_; }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> keys_;
};

struct Vocab {
  IndexMap students;
  IndexMap questions;
  IndexMap concepts;
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

/// One interaction after vocabulary interning.
struct SeqStep {
  std::uint32_t question = 0;
  std::vector<std::uint32_t> concepts;  // non-empty
  std::uint8_t response = 0;
  Split split = Split::kTrain;
};

/// A student's full interaction history in chronological order. Step t
/// (1-based) lives at steps[t-1].
struct StudentSequence {
  std::uint32_t student = 0;
  std::vector<SeqStep> steps;
};

/// Successes and failures accumulated for one concept.
struct CountPair {
  std::uint32_t success = 0;
  std::uint32_t failure = 0;
};

/// Per-concept prior counts over a growing prefix of one student's history.
class CountFeatures {
 public:
  CountPair at(std::uint32_t concept_id) const {
    auto it = counts_.find(concept_id);
    return it == counts_.end() ? CountPair{} : it->second;
  }

  /// Folds one interaction in; cost is linear in its concept count.
  void record(std::span<const std::uint32_t> concepts, std::uint8_t response) {
    for (std::uint32_t k : concepts) {
      auto& pair = counts_[k];
      if (response != 0) {
        ++pair.success;
      } else {
        ++pair.failure;
      }
    }
  }

  std::size_t touched_concepts() const { return counts_.size(); }

 private:
  std::unordered_map<std::uint32_t, CountPair> counts_;
};

/// Contiguous slice [begin, end) of one sequence's steps, at most the
/// configured window length. Prediction features that look back at history
/// stay inside the window; prior counts do not, they keep the full
/// sequence prefix.
struct Window {
  std::uint32_t sequence = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  std::uint32_t length() const { return end - begin; }
};

}  // namespace sfkt
