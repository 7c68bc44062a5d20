#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dlava/dataset.hpp"
#include "dlava/json_io.hpp"
#include "dlava/metrics.hpp"
#include "dlava/model_client.hpp"
#include "dlava/pipeline.hpp"

namespace dlava::eval {

// sha256 over backend id, model id and request body.
std::string cache_key(const std::string& backend_id, const std::string& model_id, const std::string& body);

// Stores raw responses under dir/<key[0:2]>/<key>.json. The prompt-set version
// is folded into the backend id so prompt edits miss the cache.
class CachingBackend : public model::ModelBackend {
 public:
  CachingBackend(std::shared_ptr<model::ModelBackend> inner, std::filesystem::path dir, std::string prompt_version);

  std::string backend_id() const override;
  model::ModelResponse complete(const model::ModelRequest& req) override;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<model::ModelBackend> inner_;
  std::filesystem::path dir_;
  std::string prompt_version_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

class CountingBackend : public model::ModelBackend {
 public:
  explicit CountingBackend(std::shared_ptr<model::ModelBackend> inner) : inner_(std::move(inner)) {}
  std::string backend_id() const override { return inner_->backend_id(); }
  model::ModelResponse complete(const model::ModelRequest& req) override {
    ++count_;
    return inner_->complete(req);
  }
  std::size_t count() const { return count_; }

 private:
  std::shared_ptr<model::ModelBackend> inner_;
  std::atomic<std::size_t> count_{0};
};

// One predictions-file line (no newline) and its inverse; parse errors are
// validation errors.
std::string prediction_to_line(const Prediction& p);
Prediction parse_prediction(std::string_view line);
// Schema violations name the file and line.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

struct EvalOptions {
  std::int32_t workers = 4;
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path out_dir = "out";
  bool resume = false;
  metrics::ScoreOptions score;
  // Off by default so that reruns produce identical predictions files.
  bool record_wall_time = false;
  // No new questions are started once this many predictions are committed;
  // questions already in flight are still written.
  std::optional<std::size_t> stop_after;
  std::string split;
  std::function<void(const std::string&)> log;
};

struct EvalOutcome {
  metrics::EvalReport report;
  // Present once every record has a prediction.
  bool complete = false;
  bool degraded = false;
  std::size_t failures = 0;
  std::size_t skipped = 0;
  std::size_t predicted = 0;
  // Requests issued by the pipeline, and those that reached the backend.
  std::size_t model_requests = 0;
  std::size_t backend_calls = 0;
  std::string run_id;
};

// Writes predictions.jsonl (appended in corpus order), manifest.json and,
// when complete, report.json and report.txt under out_dir. More than half of
// the questions failing marks the run degraded.
EvalOutcome evaluate(const dataset::Corpus& corpus, const pipeline::PipelineConfig& cfg, const EvalOptions& opts);

metrics::EvalReport score_offline(const std::filesystem::path& predictions, const dataset::Corpus& corpus,
                                  const metrics::ScoreOptions& options = {});

std::string report_json(const metrics::EvalReport& report, const dataset::Corpus& corpus);
// Dataset columns: DocVQA, FUNSD, CORD, SROIE, Synthetic.
std::string report_table(const metrics::EvalReport& report, const dataset::Corpus& corpus);

// Runs default, ablation1 and ablation2 into out_dir/<variant>/ and writes
// ablation_table.txt and ablation.json beside them.
std::map<std::string, EvalOutcome> ablation_suite(const dataset::Corpus& corpus,
                                                  const pipeline::PipelineConfig& base_cfg, const EvalOptions& opts);

inline const std::vector<std::string> kAblationVariants{"default", "ablation1", "ablation2"};

}  // namespace dlava::eval
