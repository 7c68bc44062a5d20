#include "dlava/eval_harness.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dlava/error.hpp"
#include "dlava/hashing.hpp"

namespace dlava::eval {

namespace fs = std::filesystem;
using json_io::Json;
using json_io::OrderedJson;

std::string cache_key(const std::string& backend_id, const std::string& model_id, const std::string& body) {
  return sha256_hex(backend_id + '\n' + model_id + '\n' + body);
}

CachingBackend::CachingBackend(std::shared_ptr<model::ModelBackend> inner, fs::path dir, std::string prompt_version)
    : inner_(std::move(inner)), dir_(std::move(dir)), prompt_version_(std::move(prompt_version)) {
  if (!inner_) fail(ErrorKind::kUsage, "caching backend needs an inner backend");
  fs::create_directories(dir_);
}

std::string CachingBackend::backend_id() const { return inner_->backend_id() + "+prompts=" + prompt_version_; }

model::ModelResponse CachingBackend::complete(const model::ModelRequest& req) {
  const auto id = backend_id();
  const auto key = cache_key(id, req.model_id, model::request_body(req));
  const auto path = dir_ / key.substr(0, 2) / (key + ".json");
  std::error_code ec;
  if (fs::exists(path, ec)) {
    const auto j = json_io::parse_or_throw(json_io::read_text(path), path.string());
    model::ModelResponse out;
    out.raw_text = j.at("raw_text").get<std::string>();
    out.backend_id = inner_->backend_id();
    if (j.contains("token_usage") && j["token_usage"].is_object()) {
      out.token_usage = model::TokenUsage{j["token_usage"].value("prompt_tokens", std::int64_t{0}),
                                          j["token_usage"].value("completion_tokens", std::int64_t{0})};
    }
    ++hits_;
    return out;
  }
  auto response = inner_->complete(req);
  ++misses_;
  OrderedJson j;
  j["backend_id"] = id;
  j["model_id"] = req.model_id;
  j["raw_text"] = response.raw_text;
  if (response.token_usage) {
    j["token_usage"] = {{"prompt_tokens", response.token_usage->prompt_tokens},
                        {"completion_tokens", response.token_usage->completion_tokens}};
  }
  fs::create_directories(path.parent_path());
  json_io::write_atomic(path, j.dump());
  return response;
}

// ---------------------------------------------------------- predictions file

std::string prediction_to_line(const Prediction& p) {
  OrderedJson j;
  j["question_id"] = p.question_id;
  j["answer"] = p.answer;
  j["answer_box"] = json_io::box_to_json(p.answer_box);
  j["matched_region_ids"] = p.matched_region_ids;
  j["raw_model_output"] = p.raw_model_output;
  j["wall_time_ms"] = p.wall_time_ms;
  j["error"] = p.error ? OrderedJson(*p.error) : OrderedJson(nullptr);
  return j.dump();
}

Prediction parse_prediction(std::string_view line) {
  const auto j = json_io::parse_or_throw(line, "prediction");
  auto bad = [](const std::string& why) { fail(ErrorKind::kValidation, "prediction: " + why); };
  if (!j.is_object()) bad("expected an object");
  for (const char* key : {"question_id", "answer", "answer_box", "matched_region_ids", "raw_model_output",
                          "wall_time_ms", "error"}) {
    if (!j.contains(key)) bad(std::string("missing field '") + key + "'");
  }
  Prediction p;
  if (!j["question_id"].is_string() || j["question_id"].get<std::string>().empty()) {
    bad("question_id must be a non-empty string");
  }
  p.question_id = j["question_id"].get<std::string>();
  if (!j["answer"].is_string()) bad("answer must be a string");
  p.answer = j["answer"].get<std::string>();
  p.answer_box = json_io::optional_box_from_json(j["answer_box"], "prediction answer_box");
  if (!j["matched_region_ids"].is_array()) bad("matched_region_ids must be a list");
  for (const auto& id : j["matched_region_ids"]) {
    if (!id.is_number_integer() || id.get<std::int64_t>() < 0) bad("matched_region_ids must hold non-negative integers");
    p.matched_region_ids.push_back(id.get<std::int32_t>());
  }
  if (!j["raw_model_output"].is_string()) bad("raw_model_output must be a string");
  p.raw_model_output = j["raw_model_output"].get<std::string>();
  if (!j["wall_time_ms"].is_number_integer()) bad("wall_time_ms must be an integer");
  p.wall_time_ms = j["wall_time_ms"].get<std::int64_t>();
  if (!j["error"].is_null() && !j["error"].is_string()) bad("error must be null or a string");
  if (j["error"].is_string()) p.error = j["error"].get<std::string>();
  return p;
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kValidation, "predictions file not found: " + path.string());
  std::vector<Prediction> out;
  const auto lines = json_io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse_prediction(lines[i]));
    } catch (const Error& e) {
      throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

// ------------------------------------------------------------------ reports

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string threshold_label(int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%d.%02d", t / 100, t % 100);
  return buf;
}

}  // namespace

std::string report_json(const metrics::EvalReport& r, const dataset::Corpus& corpus) {
  OrderedJson j;
  j["dataset"] = dataset::to_string(corpus.provenance);
  j["corpus"] = corpus.name;
  j["total"] = r.total;
  j["with_gold_box"] = r.with_gold_box;
  j["with_predicted_box"] = r.with_predicted_box;
  j["gated"] = r.gated;
  j["aggregate_anls"] = r.aggregate_anls;
  j["map_iou"] = r.map_iou;
  OrderedJson per_t = OrderedJson::object();
  for (std::size_t i = 0; i < metrics::kIouThresholds.size(); ++i) {
    per_t[threshold_label(metrics::kIouThresholds[i])] = r.per_threshold_accuracy[i];
  }
  j["per_threshold_accuracy"] = per_t;
  OrderedJson rows = OrderedJson::array();
  for (const auto& q : r.per_question) {
    rows.push_back({{"question_id", q.question_id}, {"anls", q.anls}, {"iou", q.iou ? OrderedJson(*q.iou) : OrderedJson(nullptr)}});
  }
  j["per_question"] = rows;
  return j.dump(2) + "\n";
}

std::string report_table(const metrics::EvalReport& r, const dataset::Corpus& corpus) {
  static const std::vector<std::pair<dataset::Provenance, std::string>> kColumns{
      {dataset::Provenance::kDocvqa, "DocVQA"}, {dataset::Provenance::kFunsd, "FUNSD"},
      {dataset::Provenance::kCord, "CORD"},     {dataset::Provenance::kSroie, "SROIE"},
      {dataset::Provenance::kSynthetic, "Synthetic"}};
  std::ostringstream out;
  char buf[256];
  auto row = [&](const std::string& label, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-16s", label.c_str());
    out << buf;
    for (const auto& [prov, _] : kColumns) {
      std::snprintf(buf, sizeof buf, " %10s", prov == corpus.provenance ? value.c_str() : "-");
      out << buf;
    }
    out << '\n';
  };
  std::snprintf(buf, sizeof buf, "%-16s", "metric");
  out << buf;
  for (const auto& [_, name] : kColumns) {
    std::snprintf(buf, sizeof buf, " %10s", name.c_str());
    out << buf;
  }
  out << '\n';
  row("ANLS", fixed(r.aggregate_anls * 100, 2));
  row("mAP@[.50:.95]", fixed(r.map_iou * 100, 2));
  for (std::size_t i = 0; i < metrics::kIouThresholds.size(); ++i) {
    row("AP@" + threshold_label(metrics::kIouThresholds[i]), fixed(r.per_threshold_accuracy[i] * 100, 2));
  }
  out << "\ncorpus " << corpus.name << ": " << r.total << " questions, " << r.with_gold_box << " with gold box, "
      << r.with_predicted_box << " with predicted box" << (r.gated ? ", IoU gated on answer" : "") << '\n';
  return out.str();
}

metrics::EvalReport score_offline(const fs::path& predictions, const dataset::Corpus& corpus,
                                  const metrics::ScoreOptions& options) {
  const auto preds = read_predictions(predictions);
  return metrics::score_run(preds, corpus.records, options);
}

// --------------------------------------------------------------- evaluation

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_run_id() {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  std::random_device rd;
  char buf[64];
  std::snprintf(buf, sizeof buf, "run-%lld-%08x",
                static_cast<long long>(std::chrono::duration_cast<std::chrono::milliseconds>(now).count()), rd());
  return buf;
}

// Drops a trailing partial line left by an interrupted writer.
void truncate_torn_tail(const fs::path& path) {
  const auto text = json_io::read_text(path);
  if (text.empty() || text.back() == '\n') return;
  const auto last = text.rfind('\n');
  fs::resize_file(path, last == std::string::npos ? 0 : last + 1);
}

void log(const EvalOptions& opts, const std::string& message) {
  if (opts.log) opts.log(message);
}

}  // namespace

EvalOutcome evaluate(const dataset::Corpus& corpus, const pipeline::PipelineConfig& cfg, const EvalOptions& opts) {
  pipeline::validate(cfg);
  dataset::validate(corpus);
  if (opts.workers < 1) fail(ErrorKind::kUsage, "workers must be at least 1");
  fs::create_directories(opts.out_dir);
  const auto pred_path = opts.out_dir / "predictions.jsonl";
  const auto manifest_path = opts.out_dir / "manifest.json";
  const auto corpus_hash = dataset::content_hash(corpus);
  const auto snapshot = pipeline::config_snapshot(cfg);

  EvalOutcome outcome;
  outcome.run_id = new_run_id();
  OrderedJson manifest;
  std::set<std::string> done;
  if (opts.resume && fs::exists(pred_path)) {
    if (fs::exists(manifest_path)) {
      const auto previous = OrderedJson::parse(json_io::read_text(manifest_path), nullptr, false);
      if (previous.is_discarded() || previous.value("corpus_hash", "") != corpus_hash ||
          previous.value("config", OrderedJson{}) != snapshot) {
        fail(ErrorKind::kValidation, "cannot resume " + opts.out_dir.string() + ": corpus or configuration changed");
      }
      manifest["resumed_from"] = previous.value("run_id", "");
    }
    truncate_torn_tail(pred_path);
    for (const auto& p : read_predictions(pred_path)) {
      if (!corpus.find(p.question_id)) {
        fail(ErrorKind::kValidation, pred_path.string() + ": unknown question_id '" + p.question_id + "'");
      }
      done.insert(p.question_id);
    }
  } else {
    std::ofstream(pred_path, std::ios::trunc | std::ios::binary);
  }
  outcome.skipped = done.size();

  manifest["run_id"] = outcome.run_id;
  manifest["corpus"] = corpus.name;
  manifest["dataset"] = dataset::to_string(corpus.provenance);
  manifest["corpus_hash"] = corpus_hash;
  manifest["split"] = opts.split;
  manifest["config"] = snapshot;
  manifest["prompt_set"] = cfg.prompts.version;
  manifest["workers"] = opts.workers;
  manifest["started_at"] = utc_now();
  manifest["status"] = "running";
  json_io::write_atomic(manifest_path, manifest.dump(2) + "\n");

  auto counting = std::make_shared<CountingBackend>(cfg.model);
  std::shared_ptr<model::ModelBackend> inner = counting;
  if (opts.cache_dir) inner = std::make_shared<CachingBackend>(counting, *opts.cache_dir, cfg.prompts.version);
  auto requests = std::make_shared<CountingBackend>(inner);
  pipeline::PipelineConfig run_cfg = cfg;
  run_cfg.model = requests;

  std::vector<const QARecord*> pending;
  for (const auto& r : corpus.records) {
    if (!done.count(r.question_id)) pending.push_back(&r);
  }

  pipeline::DetectionMemo memo;
  std::vector<std::optional<Prediction>> results(pending.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex commit_mutex;
  std::size_t committed = 0;
  std::ofstream out(pred_path, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorKind::kValidation, "cannot append to " + pred_path.string());

  auto run_one = [&](const QARecord& rec) {
    Prediction p;
    try {
      const auto image = corpus.image(rec.doc_id);
      p = pipeline::run(image, rec.question, run_cfg, {rec.question_id, &memo});
    } catch (const Error& e) {
      p = Prediction{};
      p.error = (e.stage().empty() ? std::string(to_string(e.kind())) : e.stage()) + ": " + e.what();
    } catch (const std::exception& e) {
      p = Prediction{};
      p.error = std::string("pipeline: ") + e.what();
    }
    p.question_id = rec.question_id;
    if (!opts.record_wall_time) p.wall_time_ms = 0;
    if (p.error) log(opts, rec.question_id + ": " + *p.error);
    return p;
  };

  auto commit_ready = [&] {
    while (committed < results.size() && results[committed]) {
      out << prediction_to_line(*results[committed]) << '\n';
      out.flush();
      ++committed;
    }
  };

  auto worker = [&] {
    while (!stop) {
      const auto i = next++;
      if (i >= pending.size()) return;
      auto p = run_one(*pending[i]);
      std::lock_guard lock(commit_mutex);
      results[i] = std::move(p);
      commit_ready();
      if (opts.stop_after && committed >= *opts.stop_after) stop = true;
    }
  };

  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(opts.workers), std::max<std::size_t>(1, pending.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  commit_ready();
  out.close();

  outcome.predicted = committed;
  outcome.model_requests = requests->count();
  outcome.backend_calls = counting->count();
  outcome.complete = committed == pending.size();

  manifest["finished_at"] = utc_now();
  manifest["model_requests"] = outcome.model_requests;
  manifest["backend_calls"] = outcome.backend_calls;
  if (outcome.complete) {
    const auto all = read_predictions(pred_path);
    for (const auto& p : all) outcome.failures += p.error ? 1 : 0;
    outcome.degraded = 2 * outcome.failures > corpus.records.size();
    outcome.report = score_offline(pred_path, corpus, opts.score);
    json_io::write_atomic(opts.out_dir / "report.json", report_json(outcome.report, corpus));
    json_io::write_atomic(opts.out_dir / "report.txt", report_table(outcome.report, corpus));
    manifest["failures"] = outcome.failures;
    manifest["status"] = outcome.degraded ? "degraded" : "complete";
  } else {
    manifest["status"] = "interrupted";
  }
  json_io::write_atomic(manifest_path, manifest.dump(2) + "\n");
  return outcome;
}

std::map<std::string, EvalOutcome> ablation_suite(const dataset::Corpus& corpus,
                                                  const pipeline::PipelineConfig& base_cfg, const EvalOptions& opts) {
  if (base_cfg.mode != pipeline::Mode::kOcrFree) fail(ErrorKind::kUsage, "ablation suite needs ocr_free mode");
  static const std::map<std::string, pipeline::Ablation> kVariant{{"default", pipeline::Ablation::kNone},
                                                                  {"ablation1", pipeline::Ablation::kOriginalImage},
                                                                  {"ablation2", pipeline::Ablation::kNoExtraction}};
  std::map<std::string, EvalOutcome> results;
  OrderedJson summary = OrderedJson::array();
  std::ostringstream table;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %12s\n", "variant", "ANLS", "mAP", "model_calls");
  table << buf;
  for (const auto& name : kAblationVariants) {
    auto cfg = base_cfg;
    cfg.ablation = kVariant.at(name);
    auto variant_opts = opts;
    variant_opts.out_dir = opts.out_dir / name;
    auto outcome = evaluate(corpus, cfg, variant_opts);
    std::snprintf(buf, sizeof buf, "%-10s %10s %10s %12zu\n", name.c_str(),
                  fixed(outcome.report.aggregate_anls * 100, 2).c_str(), fixed(outcome.report.map_iou * 100, 2).c_str(),
                  outcome.model_requests);
    table << buf;
    summary.push_back({{"variant", name},
                       {"aggregate_anls", outcome.report.aggregate_anls},
                       {"map_iou", outcome.report.map_iou},
                       {"model_calls", outcome.model_requests},
                       {"complete", outcome.complete},
                       {"degraded", outcome.degraded}});
    results.emplace(name, std::move(outcome));
  }
  json_io::write_atomic(opts.out_dir / "ablation_table.txt", table.str());
  json_io::write_atomic(opts.out_dir / "ablation.json", summary.dump(2) + "\n");
  return results;
}

}  // namespace dlava::eval
