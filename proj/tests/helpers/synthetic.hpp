#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "sfkt/core/errors.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/data/interaction.hpp"

namespace sfkt::test {

/// Generator with a planted, fully known rule: a student answers correctly
/// with probability p_mastered once they have accumulated at least
/// mastery_threshold prior correct answers on the question's concept, and
/// with probability p_learning before that. Every question belongs to
/// exactly one concept, so the per-concept success count is a sufficient
/// statistic and the achievable AUC has a computable ceiling.
struct ThresholdRuleConfig {
  std::size_t students = 500;
  std::size_t min_steps = 45;
  std::size_t max_steps = 60;
  std::size_t concepts = 3;
  std::size_t questions_per_concept = 8;
  std::uint32_t mastery_threshold = 3;
  double p_mastered = 0.9;
  double p_learning = 0.2;
};

inline InteractionLog threshold_rule_log(const ThresholdRuleConfig& cfg,
                                         std::uint64_t seed) {
  Rng rng(seed);
  InteractionLog log;
  log.students.reserve(cfg.students);
  for (std::size_t s = 0; s < cfg.students; ++s) {
    InteractionLog::Student student;
    student.id = "s" + std::to_string(s);
    std::vector<std::uint32_t> correct_on(cfg.concepts, 0);
    const std::size_t len =
        cfg.min_steps + rng.next_below(cfg.max_steps - cfg.min_steps + 1);
    student.interactions.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      const auto concept_id = rng.next_below(cfg.concepts);
      const auto question_id = concept_id * cfg.questions_per_concept +
                               rng.next_below(cfg.questions_per_concept);
      const double p = correct_on[concept_id] >= cfg.mastery_threshold
                           ? cfg.p_mastered
                           : cfg.p_learning;
      Interaction row;
      row.student_id = student.id;
      row.question_id = "q" + std::to_string(question_id);
      row.concept_ids.push_back("c" + std::to_string(concept_id));
      row.response = rng.next_bernoulli(p) ? 1 : 0;
      row.order_key = static_cast<long long>(t);
      if (row.response != 0) ++correct_on[concept_id];
      student.interactions.push_back(std::move(row));
    }
    log.students.push_back(std::move(student));
  }
  return log;
}

/// Writes a log back out in the ingestion CSV schema, for tests that drive
/// the command-line binary end to end.
inline void write_interaction_csv(const std::string& path,
                                  const InteractionLog& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write CSV fixture: " + path);
  out << "student_id,question_id,concept_ids,correct,order\n";
  for (const auto& student : log.students) {
    for (const auto& row : student.interactions) {
      out << student.id << ',' << row.question_id << ',';
      for (std::size_t i = 0; i < row.concept_ids.size(); ++i) {
        if (i != 0) out << ';';
        out << row.concept_ids[i];
      }
      out << ',' << int(row.response) << ',' << row.order_key << '\n';
    }
  }
}

}  // namespace sfkt::test
