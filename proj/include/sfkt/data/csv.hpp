#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sfkt/core/errors.hpp"
#include "sfkt/data/interaction.hpp"

namespace sfkt {

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t rows_skipped = 0;
  std::vector<std::string> warnings;  // capped, one per skipped row at most

  static constexpr std::size_t kMaxWarnings = 20;

  void skip(std::size_t line_no, const std::string& why) {
    ++rows_skipped;
    if (warnings.size() < kMaxWarnings) {
      warnings.push_back("line " + std::to_string(line_no) + ": " + why);
    }
  }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace detail

/// Reads the interaction CSV. Expected header columns (any order, extras
/// ignored): student_id, question_id, concept_ids, correct, order. Field
/// values are plain text without quoting; concept_ids holds one or more
/// ids joined by ';'. Malformed rows are skipped and counted, a missing
/// header column is an InputError.
inline InteractionLog ingest_interactions(std::istream& in,
                                          IngestReport* report = nullptr) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::string line;
  if (!std::getline(in, line)) {
    throw InputError("interaction CSV is empty, expected a header row");
  }

  const auto header = detail::split_fields(line, ',');
  std::unordered_map<std::string_view, std::size_t> columns;
  for (std::size_t i = 0; i < header.size(); ++i) {
    columns.emplace(detail::trim(header[i]), i);
  }
  const auto column = [&](std::string_view name) {
    auto it = columns.find(name);
    if (it == columns.end()) {
      throw InputError("interaction CSV is missing required column '" +
                       std::string(name) + "'");
    }
    return it->second;
  };
  const std::size_t col_student = column("student_id");
  const std::size_t col_question = column("question_id");
  const std::size_t col_concepts = column("concept_ids");
  const std::size_t col_correct = column("correct");
  const std::size_t col_order = column("order");
  const std::size_t needed =
      1 + std::max({col_student, col_question, col_concepts, col_correct,
                    col_order});

  InteractionLog log;
  std::unordered_map<std::string, std::size_t> student_slot;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    ++rep.rows_read;
    if (detail::trim(line).empty()) {
      rep.skip(line_no, "blank row");
      continue;
    }
    const auto fields = detail::split_fields(line, ',');
    if (fields.size() < needed) {
      rep.skip(line_no, "too few fields");
      continue;
    }

    Interaction row;
    row.student_id = std::string(detail::trim(fields[col_student]));
    row.question_id = std::string(detail::trim(fields[col_question]));
    if (row.student_id.empty() || row.question_id.empty()) {
      rep.skip(line_no, "empty student or question id");
      continue;
    }

    const auto correct = detail::trim(fields[col_correct]);
    if (correct == "1") {
      row.response = 1;
    } else if (correct == "0") {
      row.response = 0;
    } else {
      rep.skip(line_no, "correct must be 0 or 1");
      continue;
    }

    const auto order = detail::trim(fields[col_order]);
    const auto parsed = std::from_chars(order.data(), order.data() + order.size(),
                                        row.order_key);
    if (parsed.ec != std::errc{} || parsed.ptr != order.data() + order.size()) {
      rep.skip(line_no, "order is not an integer");
      continue;
    }

    for (const auto raw : detail::split_fields(fields[col_concepts], ';')) {
      const auto concept_id = detail::trim(raw);
      if (concept_id.empty()) continue;
      const std::string value(concept_id);
      if (std::find(row.concept_ids.begin(), row.concept_ids.end(), value) ==
          row.concept_ids.end()) {
        row.concept_ids.push_back(value);
      }
    }
    if (row.concept_ids.empty()) {
      rep.skip(line_no, "no concept ids");
      continue;
    }

    auto [it, inserted] = student_slot.emplace(row.student_id, log.students.size());
    if (inserted) {
      log.students.push_back({row.student_id, {}});
    }
    log.students[it->second].interactions.push_back(std::move(row));
    ++rep.rows_kept;
  }

  for (auto& student : log.students) {
    std::stable_sort(student.interactions.begin(), student.interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.order_key < b.order_key;
                     });
  }
  log.skipped_rows = rep.rows_skipped;
  return log;
}

inline InteractionLog ingest_interactions_file(const std::string& path,
                                               IngestReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open interaction CSV: " + path);
  }
  return ingest_interactions(in, report);
}

}  // namespace sfkt
