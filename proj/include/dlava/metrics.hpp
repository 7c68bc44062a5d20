#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dlava/geometry.hpp"
#include "dlava/types.hpp"

namespace dlava::metrics {

struct AnlsConfig {
  // Similarities strictly below the threshold score zero. 0 disables it.
  double threshold = 0.5;
  bool case_fold = true;
  bool trim_whitespace = true;
};

void validate(const AnlsConfig& cfg);

// IoU thresholds 0.50, 0.55, ..., 0.95 held as integer hundredths.
inline constexpr std::array<int, 10> kIouThresholds{50, 55, 60, 65, 70, 75, 80, 85, 90, 95};

// Edit distance over Unicode code points.
std::size_t levenshtein_distance(std::string_view a, std::string_view b);

// 1 - distance / max(|a|, |b|); 1 when both are empty.
double normalized_similarity(std::string_view a, std::string_view b);

// Applies the config's case folding, trimming and whitespace collapsing.
std::string normalize_answer(std::string_view s, const AnlsConfig& cfg);

double anls_score(std::string_view prediction, std::span<const std::string> golds, const AnlsConfig& cfg = {});

double iou(const BBox& a, const BBox& b);

// True when iou, rounded to six decimals, reaches threshold/100.
bool passes_threshold(double iou_value, int threshold_hundredths);

struct MapResult {
  std::array<double, kIouThresholds.size()> per_threshold_accuracy{};
  double map_iou = 0;
};

// One predicted box per gold box; a missing prediction misses every
// threshold. Average precision at a threshold is the hit fraction.
MapResult map_at_iou(std::span<const std::pair<std::optional<BBox>, BBox>> pairs);

struct ScoreOptions {
  AnlsConfig anls;
  // When set, a box only counts as a hit if the answer also scored above zero.
  bool gate_iou_on_answer = false;
};

struct QuestionScore {
  std::string question_id;
  double anls = 0;
  // Absent when the question has no gold box.
  std::optional<double> iou;

  friend bool operator==(const QuestionScore&, const QuestionScore&) = default;
};

struct EvalReport {
  std::vector<QuestionScore> per_question;
  double aggregate_anls = 0;
  std::array<double, kIouThresholds.size()> per_threshold_accuracy{};
  double map_iou = 0;
  std::size_t total = 0;
  std::size_t with_gold_box = 0;
  std::size_t with_predicted_box = 0;
  bool gated = false;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Scores a run. Questions without a prediction score zero and miss every IoU
// threshold; questions without a gold box only count towards ANLS.
EvalReport score_run(std::span<const Prediction> predictions, std::span<const QARecord> gold,
                     const ScoreOptions& options = {});

}  // namespace dlava::metrics
