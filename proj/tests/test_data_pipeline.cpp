#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "sfkt/core/errors.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/data/csv.hpp"
#include "sfkt/data/interaction.hpp"
#include "sfkt/data/pipeline.hpp"

using namespace sfkt;

namespace {

/// One student, `n` steps, one fixed concept, alternating or constant
/// responses; handy for exact split and count arithmetic.
InteractionLog single_student_log(std::size_t n, bool all_correct = true) {
  InteractionLog log;
  InteractionLog::Student s;
  s.id = "only";
  for (std::size_t t = 0; t < n; ++t) {
    Interaction row;
    row.student_id = s.id;
    row.question_id = "q" + std::to_string(t % 4);
    row.concept_ids = {"c"};
    row.response = all_correct ? 1 : static_cast<std::uint8_t>(t % 2);
    row.order_key = static_cast<long long>(t);
    s.interactions.push_back(std::move(row));
  }
  log.students.push_back(std::move(s));
  return log;
}

InteractionLog random_log(std::size_t students, std::size_t max_steps,
                          std::size_t concepts, std::uint64_t seed) {
  Rng rng(seed);
  InteractionLog log;
  for (std::size_t s = 0; s < students; ++s) {
    InteractionLog::Student student;
    student.id = "s" + std::to_string(s);
    const std::size_t len = 1 + rng.next_below(max_steps);
    for (std::size_t t = 0; t < len; ++t) {
      Interaction row;
      row.student_id = student.id;
      row.question_id = "q" + std::to_string(rng.next_below(12));
      const std::size_t nk = 1 + rng.next_below(3);
      for (std::size_t k = 0; k < nk; ++k) {
        const auto cid = "c" + std::to_string(rng.next_below(concepts));
        if (std::find(row.concept_ids.begin(), row.concept_ids.end(), cid) ==
            row.concept_ids.end()) {
          row.concept_ids.push_back(cid);
        }
      }
      row.response = rng.next_bernoulli(0.5) ? 1 : 0;
      row.order_key = static_cast<long long>(t);
      student.interactions.push_back(std::move(row));
    }
    log.students.push_back(std::move(student));
  }
  return log;
}

}  // namespace

TEST_CASE("split bounds at the worked sizes") {
  const auto b10 = split_bounds(10);
  CHECK(b10.n_train == 8);
  CHECK(b10.n_val == 0);
  CHECK(b10.n_test == 2);

  const auto b100 = split_bounds(100);
  CHECK(b100.n_train == 72);
  CHECK(b100.n_val == 8);
  CHECK(b100.n_test == 20);

  const auto b1 = split_bounds(1);
  CHECK(b1.n_train == 1);
  CHECK(b1.n_val == 0);
  CHECK(b1.n_test == 0);

  const auto b0 = split_bounds(0);
  CHECK(b0.n_train + b0.n_val + b0.n_test == 0);
}

TEST_CASE("split bounds agree with integer arithmetic at every size") {
  for (std::size_t n = 2; n <= 5000; ++n) {
    const auto b = split_bounds(n);
    const std::size_t head = n * 8 / 10;
    const std::size_t val = head / 10;
    REQUIRE(b.n_train == head - val);
    REQUIRE(b.n_val == val);
    REQUIRE(b.n_test == n - head);
    REQUIRE(b.n_train + b.n_val + b.n_test == n);
  }
}

TEST_CASE("split positions are contiguous train, val, test") {
  const auto b = split_bounds(100);
  CHECK(split_of_position(0, b) == Split::kTrain);
  CHECK(split_of_position(71, b) == Split::kTrain);
  CHECK(split_of_position(72, b) == Split::kVal);
  CHECK(split_of_position(79, b) == Split::kVal);
  CHECK(split_of_position(80, b) == Split::kTest);
  CHECK(split_of_position(99, b) == Split::kTest);
}

TEST_CASE("chronological split preserves order and drops empty portions") {
  const auto logs = chronological_split(single_student_log(10));
  REQUIRE(logs.train.students.size() == 1);
  CHECK(logs.train.students[0].interactions.size() == 8);
  CHECK(logs.val.students.empty());  // floor(0.1 * 8) == 0
  REQUIRE(logs.test.students.size() == 1);
  CHECK(logs.test.students[0].interactions.size() == 2);
  CHECK(logs.test.students[0].interactions[0].order_key == 8);
}

TEST_CASE("window tiling covers the sequence without overlap") {
  const auto windows = window_sequences(0, 450, 200);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].begin == 0);
  CHECK(windows[0].end == 200);
  CHECK(windows[1].begin == 200);
  CHECK(windows[1].end == 400);
  CHECK(windows[2].begin == 400);
  CHECK(windows[2].end == 450);
  CHECK(windows[2].length() == 50);

  CHECK(window_sequences(0, 200, 200).size() == 1);
  CHECK(window_sequences(0, 201, 200).size() == 2);
  CHECK(window_sequences(0, 0, 200).empty());
}

TEST_CASE("prefix counts accumulate across window boundaries") {
  const auto log = single_student_log(30);
  DatasetConfig cfg;
  cfg.max_len = 10;
  const auto ds = build_dataset(log, cfg);
  REQUIRE(ds.records.size() == 30);
  REQUIRE(ds.windows.size() == 3);
  for (std::size_t t = 0; t < 30; ++t) {
    const auto& rec = ds.records[t];
    REQUIRE(rec.target_counts.size() == 1);
    // Every step is correct on the same concept, so the prior success
    // count equals the step position even after the window resets.
    CHECK(rec.target_counts[0].success == t);
    CHECK(rec.target_counts[0].failure == 0);
    CHECK(ds.window_of(rec).begin == (t / 10) * 10);
  }
}

TEST_CASE("prefix counts match a brute-force recount on random data") {
  const auto log = random_log(40, 60, 8, 404);
  const auto ds = build_dataset(log, DatasetConfig{});
  for (const auto& rec : ds.records) {
    const auto& seq = ds.sequence_of(rec);
    const auto& step = seq.steps[rec.pos];
    REQUIRE(rec.target_counts.size() == step.concepts.size());
    for (std::size_t i = 0; i < step.concepts.size(); ++i) {
      const auto k = step.concepts[i];
      std::uint32_t success = 0, failure = 0;
      for (std::uint32_t j = 0; j < rec.pos; ++j) {
        const auto& past = seq.steps[j];
        if (std::find(past.concepts.begin(), past.concepts.end(), k) ==
            past.concepts.end()) {
          continue;
        }
        if (past.response != 0) {
          ++success;
        } else {
          ++failure;
        }
      }
      REQUIRE(rec.target_counts[i].success == success);
      REQUIRE(rec.target_counts[i].failure == failure);
    }
  }
}

TEST_CASE("compute_prefix_counts starts empty and lags by one step") {
  StudentSequence seq;
  seq.steps = {
      {0, {1, 2}, 1, Split::kTrain},
      {1, {2}, 0, Split::kTrain},
      {2, {1}, 1, Split::kTrain},
  };
  const auto counts = compute_prefix_counts(seq);
  REQUIRE(counts.size() == 3);
  CHECK(counts[0].at(1).success == 0);
  CHECK(counts[0].at(2).success == 0);
  CHECK(counts[1].at(1).success == 1);
  CHECK(counts[1].at(2).success == 1);
  CHECK(counts[2].at(2).failure == 1);
  CHECK(counts[2].at(1).success == 1);
  CHECK(counts[2].at(1).failure == 0);
}

TEST_CASE("vocabularies come from the training portion only") {
  // 10 interactions: the last two (test split) introduce a question and a
  // concept never seen in training.
  InteractionLog log;
  InteractionLog::Student s;
  s.id = "a";
  for (std::size_t t = 0; t < 10; ++t) {
    Interaction row;
    row.student_id = s.id;
    row.question_id = t < 8 ? "q_known" : "q_new";
    row.concept_ids = {t < 8 ? "c_known" : "c_new"};
    row.response = 1;
    row.order_key = static_cast<long long>(t);
    s.interactions.push_back(std::move(row));
  }
  log.students.push_back(std::move(s));

  const auto ds = build_dataset(log, DatasetConfig{});
  CHECK(ds.vocab.questions.observed() == 1);
  CHECK(ds.vocab.questions.table_rows() == 2);
  CHECK(ds.vocab.questions.contains("q_known"));
  CHECK_FALSE(ds.vocab.questions.contains("q_new"));
  CHECK(ds.vocab.questions.lookup("q_new") ==
        ds.vocab.questions.unknown_index());
  CHECK(ds.vocab.concepts.lookup("c_new") == ds.vocab.concepts.unknown_index());

  // The held-out steps are still present, interned to the UNKNOWN slots.
  const auto& last = ds.sequences[0].steps.back();
  CHECK(last.question == ds.vocab.questions.unknown_index());
  CHECK(last.concepts[0] == ds.vocab.concepts.unknown_index());
  CHECK(last.split == Split::kTest);
}

TEST_CASE("count statistics fold training records only") {
  const auto ds = build_dataset(single_student_log(10), DatasetConfig{});
  // Train records sit at positions 0..7 with prior success counts 0..7;
  // the test records see 8 and 9 but must not widen the range.
  CHECK(ds.success_stats.valid);
  CHECK(ds.success_stats.min == 0.0);
  CHECK(ds.success_stats.max == 7.0);
  CHECK(ds.failure_stats.min == 0.0);
  CHECK(ds.failure_stats.max == 0.0);
}

TEST_CASE("record split membership follows the per-student bounds") {
  const auto ds = build_dataset(random_log(25, 40, 6, 77), DatasetConfig{});
  CHECK(ds.records.size() ==
        ds.train_records.size() + ds.val_records.size() + ds.test_records.size());
  for (const auto id : ds.train_records) {
    CHECK(ds.records[id].split == Split::kTrain);
  }
  for (const auto id : ds.val_records) CHECK(ds.records[id].split == Split::kVal);
  for (const auto id : ds.test_records) {
    CHECK(ds.records[id].split == Split::kTest);
  }
  CHECK_FALSE(ds.train_records.empty());
}

TEST_CASE("a single-interaction student trains on that interaction") {
  const auto ds = build_dataset(single_student_log(1), DatasetConfig{});
  REQUIRE(ds.records.size() == 1);
  CHECK(ds.records[0].split == Split::kTrain);
  CHECK(ds.train_records.size() == 1);
}

TEST_CASE("building a dataset twice gives identical structure") {
  const auto log = random_log(15, 30, 5, 123);
  const auto a = build_dataset(log, DatasetConfig{});
  const auto b = build_dataset(log, DatasetConfig{});
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].sequence == b.records[i].sequence);
    CHECK(a.records[i].pos == b.records[i].pos);
    CHECK(a.records[i].window == b.records[i].window);
    REQUIRE(a.records[i].target_counts.size() ==
            b.records[i].target_counts.size());
    for (std::size_t j = 0; j < a.records[i].target_counts.size(); ++j) {
      CHECK(a.records[i].target_counts[j].success ==
            b.records[i].target_counts[j].success);
      CHECK(a.records[i].target_counts[j].failure ==
            b.records[i].target_counts[j].failure);
    }
  }
  CHECK(a.success_stats.max == b.success_stats.max);
  CHECK(a.vocab.questions.keys() == b.vocab.questions.keys());
}

TEST_CASE("empty log is rejected") {
  CHECK_THROWS_AS(build_dataset(InteractionLog{}, DatasetConfig{}), InputError);
}

TEST_CASE("CSV ingestion accepts reordered headers and extra columns") {
  std::istringstream in(
      "order,extra,correct,student_id,concept_ids,question_id\n"
      "2,x,1,s1,c1;c2,q1\n"
      "1,y,0,s1,c1,q2\n"
      "5,z,1,s2,c3,q1\n");
  IngestReport report;
  const auto log = ingest_interactions(in, &report);
  CHECK(report.rows_kept == 3);
  CHECK(report.rows_skipped == 0);
  REQUIRE(log.students.size() == 2);
  // s1's rows are reordered by the order column.
  REQUIRE(log.students[0].interactions.size() == 2);
  CHECK(log.students[0].interactions[0].question_id == "q2");
  CHECK(log.students[0].interactions[1].question_id == "q1");
  CHECK(log.students[0].interactions[1].concept_ids ==
        std::vector<std::string>{"c1", "c2"});
}

TEST_CASE("CSV ingestion skips malformed rows and counts them") {
  std::istringstream in(
      "student_id,question_id,concept_ids,correct,order\n"
      "s1,q1,c1,1,1\n"
      "s1,q2,c1,2,2\n"        // correct out of range
      "s1,q3,c1,1,abc\n"      // order not an integer
      "s1,q4,,1,4\n"          // no concepts
      "\n"                    // blank
      "s1,q5\n"               // too few fields
      ",q6,c1,1,6\n"          // empty student id
      "s1,q7,c1;c1; ,0,7\n"); // duplicate and blank concept entries collapse
  IngestReport report;
  const auto log = ingest_interactions(in, &report);
  CHECK(report.rows_read == 8);
  CHECK(report.rows_kept == 2);
  CHECK(report.rows_skipped == 6);
  CHECK(report.warnings.size() == 6);
  REQUIRE(log.students.size() == 1);
  REQUIRE(log.students[0].interactions.size() == 2);
  CHECK(log.students[0].interactions[1].concept_ids ==
        std::vector<std::string>{"c1"});
}

TEST_CASE("CSV ingestion keeps input order for tied order keys") {
  std::istringstream in(
      "student_id,question_id,concept_ids,correct,order\n"
      "s1,first,c1,1,7\n"
      "s1,second,c1,1,7\n"
      "s1,earlier,c1,1,3\n");
  const auto log = ingest_interactions(in);
  REQUIRE(log.students[0].interactions.size() == 3);
  CHECK(log.students[0].interactions[0].question_id == "earlier");
  CHECK(log.students[0].interactions[1].question_id == "first");
  CHECK(log.students[0].interactions[2].question_id == "second");
}

TEST_CASE("CSV ingestion rejects a missing required column") {
  std::istringstream in("student_id,question_id,concept_ids,correct\ns,q,c,1\n");
  CHECK_THROWS_AS(ingest_interactions(in), InputError);
  std::istringstream empty("");
  CHECK_THROWS_AS(ingest_interactions(empty), InputError);
}

TEST_CASE("CSV ingestion handles windows line endings and padding") {
  std::istringstream in(
      "student_id, question_id ,concept_ids,correct,order\r\n"
      " s1 , q1 , c1 ; c2 , 1 , 10 \r\n");
  const auto log = ingest_interactions(in);
  REQUIRE(log.students.size() == 1);
  CHECK(log.students[0].id == "s1");
  CHECK(log.students[0].interactions[0].question_id == "q1");
  CHECK(log.students[0].interactions[0].concept_ids ==
        std::vector<std::string>{"c1", "c2"});
}
