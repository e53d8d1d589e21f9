// Command-line frontend: prepare a dataset cache from an interaction CSV,
// train models, evaluate checkpoints, export the practice-count similarity
// diagnostic, and run the library's self-verification suite.
//
// Exit codes: 0 success, 1 verification or metric failure, 2 input error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfkt/sfkt.hpp"

namespace {

using nlohmann::json;

struct Settings {
  std::string config_path;
  std::string data_csv;
  std::string cache_path;
  std::string out_dir = ".";
  std::string report_path;
  std::string checkpoint_out;
  std::vector<std::string> checkpoints;
  std::string side = "success";
  std::size_t max_count = 50;

  std::size_t max_len = 200;
  double train_frac = 0.8;
  double val_frac = 0.1;

  std::size_t dim = 64;
  std::size_t buckets = 100;
  std::size_t meta_numbers = 100;
  bool relu_head = false;
  bool cosine_similarity = false;
  bool scale_attention = false;

  double lambda_cl = 0.5;
  double lambda_pert = 1.0;
  double tau = 1.0;
  double dropout = 0.2;

  double learning_rate = 0.001;
  std::size_t batch_size = 24;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double grad_clip = 5.0;
  std::vector<std::uint64_t> seeds = {1};
  std::string precision = "f64";

  bool inject_fault = false;
};

sfkt::TrainConfig train_config(const Settings& s) {
  sfkt::TrainConfig cfg;
  cfg.model.dim = s.dim;
  cfg.model.buckets = s.buckets;
  cfg.model.meta_numbers = s.meta_numbers;
  cfg.model.max_len = s.max_len;
  cfg.model.relu_head = s.relu_head;
  cfg.model.cosine_similarity = s.cosine_similarity;
  cfg.model.scale_attention = s.scale_attention;
  cfg.weights.lambda_cl = s.lambda_cl;
  cfg.weights.lambda_pert = s.lambda_pert;
  cfg.weights.tau = s.tau;
  cfg.weights.dropout_rate = s.dropout;
  cfg.learning_rate = s.learning_rate;
  cfg.batch_size = s.batch_size;
  cfg.max_epochs = s.max_epochs;
  cfg.patience = s.patience;
  cfg.grad_clip_norm = s.grad_clip;
  return cfg;
}

json config_json(const sfkt::TrainConfig& cfg, std::uint64_t seed,
                 const std::string& precision) {
  return json{{"dim", cfg.model.dim},
              {"buckets", cfg.model.buckets},
              {"meta_numbers", cfg.model.meta_numbers},
              {"max_len", cfg.model.max_len},
              {"relu_head", cfg.model.relu_head},
              {"cosine_similarity", cfg.model.cosine_similarity},
              {"scale_attention", cfg.model.scale_attention},
              {"lambda_cl", cfg.weights.lambda_cl},
              {"lambda_pert", cfg.weights.lambda_pert},
              {"tau", cfg.weights.tau},
              {"dropout", cfg.weights.dropout_rate},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"grad_clip", cfg.grad_clip_norm},
              {"seed", seed},
              {"precision", precision}};
}

sfkt::TrainConfig config_from_json(const json& j) {
  sfkt::TrainConfig cfg;
  cfg.model.dim = j.at("dim").get<std::size_t>();
  cfg.model.buckets = j.at("buckets").get<std::size_t>();
  cfg.model.meta_numbers = j.at("meta_numbers").get<std::size_t>();
  cfg.model.max_len = j.at("max_len").get<std::size_t>();
  cfg.model.relu_head = j.at("relu_head").get<bool>();
  cfg.model.cosine_similarity = j.at("cosine_similarity").get<bool>();
  cfg.model.scale_attention = j.at("scale_attention").get<bool>();
  cfg.weights.lambda_cl = j.at("lambda_cl").get<double>();
  cfg.weights.lambda_pert = j.at("lambda_pert").get<double>();
  cfg.weights.tau = j.at("tau").get<double>();
  cfg.weights.dropout_rate = j.at("dropout").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.max_epochs = j.at("max_epochs").get<std::size_t>();
  cfg.patience = j.at("patience").get<std::size_t>();
  cfg.grad_clip_norm = j.at("grad_clip").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

/// Applies values from the declarative config file for every option the user
/// did not pass explicitly on the command line.
void merge_config_file(Settings& s, const CLI::App& cmd) {
  if (s.config_path.empty()) return;
  std::ifstream in(s.config_path);
  if (!in) throw sfkt::InputError("cannot open config file: " + s.config_path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw sfkt::InputError(std::string("config file is not valid JSON: ") +
                           e.what());
  }
  const auto overridden = [&](const std::string& flag) {
    const auto* opt = cmd.get_option_no_throw("--" + flag);
    return opt != nullptr && opt->count() > 0;
  };
  const auto load = [&](const char* key, auto& out) {
    if (j.contains(key) && !overridden(key)) {
      j.at(key).get_to(out);
    }
  };
  load("data", s.data_csv);
  load("cache", s.cache_path);
  load("out-dir", s.out_dir);
  load("max-len", s.max_len);
  load("train-frac", s.train_frac);
  load("val-frac", s.val_frac);
  load("dim", s.dim);
  load("buckets", s.buckets);
  load("meta-numbers", s.meta_numbers);
  load("relu-head", s.relu_head);
  load("cosine-similarity", s.cosine_similarity);
  load("scale-attention", s.scale_attention);
  load("lambda-cl", s.lambda_cl);
  load("lambda-pert", s.lambda_pert);
  load("tau", s.tau);
  load("dropout", s.dropout);
  load("learning-rate", s.learning_rate);
  load("batch-size", s.batch_size);
  load("max-epochs", s.max_epochs);
  load("patience", s.patience);
  load("grad-clip", s.grad_clip);
  load("precision", s.precision);
  if (j.contains("seeds") && !overridden("seeds")) {
    j.at("seeds").get_to(s.seeds);
  }
}

void add_model_flags(CLI::App* cmd, Settings& s) {
  cmd->add_option("--max-len", s.max_len, "Window length L");
  cmd->add_option("--dim", s.dim, "Embedding width d");
  cmd->add_option("--buckets", s.buckets, "Count buckets per side");
  cmd->add_option("--meta-numbers", s.meta_numbers, "Meta numbers per side");
  cmd->add_flag("--relu-head", s.relu_head,
                "ReLU between the two prediction layers");
  cmd->add_flag("--cosine-similarity", s.cosine_similarity,
                "Cosine similarity in the contrastive loss");
  cmd->add_flag("--scale-attention", s.scale_attention,
                "Scale attention logits by 1/sqrt(dim)");
}

void add_train_flags(CLI::App* cmd, Settings& s) {
  cmd->add_option("--lambda-cl", s.lambda_cl, "Contrastive loss weight");
  cmd->add_option("--lambda-pert", s.lambda_pert, "Perturbation loss weight");
  cmd->add_option("--tau", s.tau, "Contrastive temperature");
  cmd->add_option("--dropout", s.dropout, "Perturbation dropout rate");
  cmd->add_option("--learning-rate", s.learning_rate, "Adam learning rate");
  cmd->add_option("--batch-size", s.batch_size, "Records per batch");
  cmd->add_option("--max-epochs", s.max_epochs, "Epoch cap");
  cmd->add_option("--patience", s.patience, "Early-stopping patience");
  cmd->add_option("--grad-clip", s.grad_clip, "Global gradient norm clip");
  cmd->add_option("--seeds", s.seeds, "Run seeds (repeat or comma-separate)")
      ->delimiter(',');
  cmd->add_option("--precision", s.precision, "Float width: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
}

int cmd_prepare(Settings& s) {
  if (s.data_csv.empty()) throw sfkt::InputError("prepare needs --data");
  if (s.cache_path.empty()) throw sfkt::InputError("prepare needs --cache");
  sfkt::IngestReport report;
  const auto log = sfkt::ingest_interactions_file(s.data_csv, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (report.rows_skipped > report.warnings.size()) {
    std::cerr << "warning: " << report.rows_skipped
              << " rows skipped in total\n";
  }

  sfkt::DatasetConfig dc;
  dc.max_len = s.max_len;
  dc.train_frac = s.train_frac;
  dc.val_frac = s.val_frac;
  const auto data = sfkt::build_dataset(log, dc);
  sfkt::save_dataset_cache(s.cache_path, data);

  std::cout << "rows kept " << report.rows_kept << ", skipped "
            << report.rows_skipped << "\n"
            << "students " << data.vocab.students.observed() << ", questions "
            << data.vocab.questions.observed() << ", concepts "
            << data.vocab.concepts.observed() << "\n"
            << "records train " << data.train_records.size() << ", val "
            << data.val_records.size() << ", test " << data.test_records.size()
            << ", windows " << data.windows.size() << "\n"
            << "content hash " << std::hex << sfkt::dataset_content_hash(data)
            << std::dec << "\n";
  return 0;
}

json epoch_json(const sfkt::EpochLog& log) {
  json j{{"epoch", log.epoch},
         {"loss_pred", log.loss_pred},
         {"phi_cl", log.phi_cl},
         {"phi_pert", log.phi_pert},
         {"loss_total", log.loss_total},
         {"improved", log.improved}};
  if (log.val_auc) {
    j["val_auc"] = *log.val_auc;
  } else {
    j["val_auc"] = nullptr;
  }
  return j;
}

template <typename Real>
std::optional<double> run_train_seed(const sfkt::Dataset& data,
                                     const sfkt::TrainConfig& cfg,
                                     const Settings& s, std::uint64_t seed) {
  auto model = sfkt::make_model<Real>(cfg.model, data);
  sfkt::Rng init_rng(sfkt::derive_seed(seed, 0));
  sfkt::init_model(model, init_rng);

  sfkt::TrainConfig seeded = cfg;
  seeded.seed = seed;
  const auto result = sfkt::fit(model, data, seeded, &std::cout);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  const auto dir = std::filesystem::path(s.out_dir);
  std::filesystem::create_directories(dir);
  const auto log_path = dir / ("train_log_seed" + std::to_string(seed) + ".jsonl");
  {
    std::ofstream out(log_path);
    if (!out) {
      throw sfkt::InputError("cannot write training log: " + log_path.string());
    }
    for (const auto& e : result.epochs) out << epoch_json(e).dump() << "\n";
    json summary{{"summary", true},
                 {"config", config_json(seeded, seed, s.precision)},
                 {"data_hash", sfkt::dataset_content_hash(data)},
                 {"vocab_hash", sfkt::vocab_hash(data.vocab)},
                 {"epochs_run", result.epochs.size()},
                 {"best_epoch", result.best_epoch},
                 {"aborted", result.aborted}};
    summary["best_val_auc"] =
        result.best_val_auc ? json(*result.best_val_auc) : json(nullptr);
    out << summary.dump() << "\n";
  }

  const auto ckpt_path =
      dir / ("checkpoint_seed" + std::to_string(seed) + ".bin");
  const auto ckpt = sfkt::checkpoint_from_model(
      model, sfkt::vocab_hash(data.vocab),
      config_json(seeded, seed, s.precision).dump());
  sfkt::save_checkpoint(ckpt_path.string(), ckpt);

  std::cout << "seed " << seed << ": " << result.epochs.size() << " epochs";
  if (result.best_val_auc) {
    std::cout << ", best val AUC " << *result.best_val_auc << " at epoch "
              << result.best_epoch;
  }
  std::cout << "\nwrote " << log_path.string() << "\nwrote "
            << ckpt_path.string() << "\n";
  return result.best_val_auc;
}

int cmd_train(Settings& s, bool max_len_overridden) {
  if (s.cache_path.empty()) throw sfkt::InputError("train needs --cache");
  const auto data = sfkt::load_dataset_cache(s.cache_path);
  if (max_len_overridden && s.max_len != data.max_len) {
    throw sfkt::InputError(
        "cache was prepared with --max-len " + std::to_string(data.max_len) +
        " but the command requests " + std::to_string(s.max_len) +
        "; re-run prepare to change the window length");
  }
  s.max_len = data.max_len;
  const auto cfg = train_config(s);
  cfg.check();

  std::vector<double> best;
  for (const auto seed : s.seeds) {
    std::optional<double> auc;
    if (s.precision == "f32") {
      auc = run_train_seed<float>(data, cfg, s, seed);
    } else {
      auc = run_train_seed<double>(data, cfg, s, seed);
    }
    if (auc) best.push_back(*auc);
  }
  if (best.size() > 1) {
    double sum = 0.0;
    for (const auto a : best) sum += a;
    std::cout << "mean best val AUC over " << best.size() << " seeds: "
              << sum / static_cast<double>(best.size()) << "\n";
  }
  return 0;
}

json report_json(const sfkt::EvalReport& report) {
  json buckets = json::array();
  for (const auto& b : report.buckets) {
    json jb{{"range", b.range}, {"count", b.count}};
    jb["acc"] = b.acc ? json(*b.acc) : json(nullptr);
    jb["auc"] = b.auc ? json(*b.auc) : json(nullptr);
    buckets.push_back(std::move(jb));
  }
  json j{{"count", report.count}, {"buckets", std::move(buckets)}};
  j["acc"] = report.acc ? json(*report.acc) : json(nullptr);
  j["auc"] = report.auc ? json(*report.auc) : json(nullptr);
  return j;
}

template <typename Real>
sfkt::EvalReport evaluate_checkpoint(const sfkt::Checkpoint& ckpt,
                                     const sfkt::TrainConfig& cfg,
                                     const sfkt::Dataset& data) {
  sfkt::SfktModel<Real> model(cfg.model, ckpt.student_rows, ckpt.question_rows,
                              ckpt.concept_rows);
  sfkt::load_into_model(ckpt, model);
  const auto preds = sfkt::collect_predictions(
      model, data,
      std::span<const std::uint32_t>(data.test_records.data(),
                                     data.test_records.size()));
  return sfkt::bucketed_report(preds);
}

void print_report(const sfkt::EvalReport& report) {
  const auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("   --  ");
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << *v;
    return os.str();
  };
  std::cout << "bucket        count     acc     auc\n";
  for (const auto& b : report.buckets) {
    std::cout << b.range;
    for (std::size_t pad = b.range.size(); pad < 12; ++pad) std::cout << ' ';
    std::cout << ' ';
    std::ostringstream cnt;
    cnt << b.count;
    for (std::size_t pad = cnt.str().size(); pad < 6; ++pad) std::cout << ' ';
    std::cout << cnt.str() << "  " << fmt(b.acc) << "  " << fmt(b.auc) << "\n";
  }
  std::cout << "overall";
  for (std::size_t pad = 7; pad < 12; ++pad) std::cout << ' ';
  std::cout << ' ';
  std::ostringstream cnt;
  cnt << report.count;
  for (std::size_t pad = cnt.str().size(); pad < 6; ++pad) std::cout << ' ';
  std::cout << cnt.str() << "  " << fmt(report.acc) << "  " << fmt(report.auc)
            << "\n";
}

int cmd_evaluate(Settings& s) {
  if (s.cache_path.empty()) throw sfkt::InputError("evaluate needs --cache");
  if (s.checkpoints.empty()) {
    throw sfkt::InputError("evaluate needs at least one --checkpoint");
  }
  const auto data = sfkt::load_dataset_cache(s.cache_path);
  if (data.test_records.empty()) {
    throw sfkt::InputError("dataset has no test records to evaluate");
  }
  const auto expected_vocab = sfkt::vocab_hash(data.vocab);

  json out;
  out["data_hash"] = sfkt::dataset_content_hash(data);
  out["vocab_hash"] = expected_vocab;
  json runs = json::array();
  std::vector<sfkt::EvalReport> reports;
  for (const auto& path : s.checkpoints) {
    const auto ckpt = sfkt::load_checkpoint(path);
    if (ckpt.vocab_hash != expected_vocab) {
      throw sfkt::InputError(
          "checkpoint " + path +
          " was trained against a different vocabulary; refusing to evaluate");
    }
    json cfg_json;
    try {
      cfg_json = json::parse(ckpt.config_json);
    } catch (const json::parse_error&) {
      throw sfkt::InputError("checkpoint " + path + " has a corrupt config");
    }
    const auto cfg = config_from_json(cfg_json);
    const std::string precision =
        cfg_json.value("precision", std::string("f64"));
    sfkt::EvalReport report;
    if (precision == "f32") {
      report = evaluate_checkpoint<float>(ckpt, cfg, data);
    } else {
      report = evaluate_checkpoint<double>(ckpt, cfg, data);
    }
    std::cout << "checkpoint " << path << "\n";
    print_report(report);
    json run{{"checkpoint", path}, {"config", cfg_json},
             {"report", report_json(report)}};
    runs.push_back(std::move(run));
    reports.push_back(std::move(report));
  }
  out["runs"] = std::move(runs);

  if (reports.size() > 1) {
    const auto mean_of = [&](auto&& getter) -> json {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : reports) {
        const auto v = getter(r);
        if (v) {
          sum += *v;
          ++n;
        }
      }
      return n == reports.size() ? json(sum / static_cast<double>(n))
                                 : json(nullptr);
    };
    json mean;
    mean["acc"] = mean_of([](const sfkt::EvalReport& r) { return r.acc; });
    mean["auc"] = mean_of([](const sfkt::EvalReport& r) { return r.auc; });
    out["mean"] = std::move(mean);
    if (!out["mean"]["auc"].is_null()) {
      std::cout << "mean AUC over " << reports.size()
                << " checkpoints: " << out["mean"]["auc"].get<double>() << "\n";
    }
  }

  if (!s.report_path.empty()) {
    std::ofstream file(s.report_path);
    if (!file) {
      throw sfkt::InputError("cannot write report: " + s.report_path);
    }
    file << out.dump(2) << "\n";
    std::cout << "wrote " << s.report_path << "\n";
  }
  return 0;
}

template <typename Real>
int export_similarity(const sfkt::Checkpoint& ckpt,
                      const sfkt::TrainConfig& cfg, Settings& s) {
  sfkt::SfktModel<Real> model(cfg.model, ckpt.student_rows, ckpt.question_rows,
                              ckpt.concept_rows);
  sfkt::load_into_model(ckpt, model);
  auto& projector = s.side == "failure" ? model.total_term.failure
                                        : model.total_term.success;
  const auto sim = sfkt::practice_number_similarity(projector, s.max_count);

  if (s.report_path.empty()) {
    throw sfkt::InputError("export-similarity needs --out");
  }
  std::ofstream out(s.report_path);
  if (!out) {
    throw sfkt::InputError("cannot write similarity CSV: " + s.report_path);
  }
  sfkt::write_similarity_csv(out, sim);
  std::cout << "wrote " << s.report_path << " (" << sim.n << "x" << sim.n
            << ", side " << s.side << ")\n";
  if (sim.degenerate) {
    std::cout << "note: some projected vectors had zero norm; their "
                 "similarities are recorded as 0\n";
  }
  std::cout << "distance-similarity Spearman trend: "
            << sfkt::similarity_distance_trend(sim) << "\n";
  return 0;
}

int cmd_export_similarity(Settings& s) {
  if (s.checkpoints.empty()) {
    throw sfkt::InputError("export-similarity needs --checkpoint");
  }
  const auto ckpt = sfkt::load_checkpoint(s.checkpoints.front());
  json cfg_json;
  try {
    cfg_json = json::parse(ckpt.config_json);
  } catch (const json::parse_error&) {
    throw sfkt::InputError("checkpoint has a corrupt config");
  }
  const auto cfg = config_from_json(cfg_json);
  const std::string precision = cfg_json.value("precision", std::string("f64"));
  if (precision == "f32") {
    return export_similarity<float>(ckpt, cfg, s);
  }
  return export_similarity<double>(ckpt, cfg, s);
}

int cmd_verify(const Settings& s) {
  const auto results = sfkt::run_verification(s.inject_fault);
  for (const auto& r : results) {
    std::cout << (r.passed ? "[ok]   " : "[FAIL] ") << r.name << ": "
              << r.detail << "\n";
  }
  if (!sfkt::all_passed(results)) {
    std::cout << "verification FAILED\n";
    return 1;
  }
  std::cout << "verification passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence-flexible knowledge tracing"};
  app.require_subcommand(1);
  Settings s;

  auto* prepare = app.add_subcommand(
      "prepare", "Build a dataset cache from an interaction CSV");
  prepare->add_option("--config", s.config_path, "JSON config file");
  prepare->add_option("--data", s.data_csv, "Interaction CSV path");
  prepare->add_option("--cache", s.cache_path, "Cache file to write");
  prepare->add_option("--max-len", s.max_len, "Window length L");
  prepare->add_option("--train-frac", s.train_frac,
                      "Leading fraction per student for train+val");
  prepare->add_option("--val-frac", s.val_frac,
                      "Trailing fraction of train+val used for validation");

  auto* train =
      app.add_subcommand("train", "Train one model per seed from a cache");
  train->add_option("--config", s.config_path, "JSON config file");
  train->add_option("--cache", s.cache_path, "Dataset cache from prepare");
  train->add_option("--out-dir", s.out_dir, "Directory for logs/checkpoints");
  add_model_flags(train, s);
  add_train_flags(train, s);

  auto* evaluate =
      app.add_subcommand("evaluate", "Score checkpoints on the test split");
  evaluate->add_option("--config", s.config_path, "JSON config file");
  evaluate->add_option("--cache", s.cache_path, "Dataset cache from prepare");
  evaluate->add_option("--checkpoint", s.checkpoints, "Checkpoint file(s)")
      ->expected(-1);
  evaluate->add_option("--out", s.report_path, "Report JSON path");

  auto* simcmd = app.add_subcommand(
      "export-similarity", "Export practice-count similarity matrix as CSV");
  simcmd->add_option("--checkpoint", s.checkpoints, "Checkpoint file");
  simcmd->add_option("--side", s.side, "Count side: success or failure")
      ->check(CLI::IsMember({"success", "failure"}));
  simcmd->add_option("--max-count", s.max_count, "Largest raw count compared");
  simcmd->add_option("--out", s.report_path, "CSV output path");

  auto* verify =
      app.add_subcommand("verify", "Run the library self-check suite");
  verify->add_flag("--inject-fault", s.inject_fault,
                   "Corrupt one analytic gradient to prove checks can fail")
      ->group("");  // hidden from help

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      merge_config_file(s, *prepare);
      return cmd_prepare(s);
    }
    if (*train) {
      merge_config_file(s, *train);
      const auto* opt = train->get_option_no_throw("--max-len");
      return cmd_train(s, opt != nullptr && opt->count() > 0);
    }
    if (*evaluate) {
      merge_config_file(s, *evaluate);
      return cmd_evaluate(s);
    }
    if (*simcmd) {
      merge_config_file(s, *simcmd);
      return cmd_export_similarity(s);
    }
    if (*verify) return cmd_verify(s);
  } catch (const sfkt::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
