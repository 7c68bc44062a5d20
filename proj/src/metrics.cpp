#include "dlava/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dlava/error.hpp"
#include "dlava/text.hpp"

namespace dlava::metrics {

void validate(const AnlsConfig& cfg) {
  if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0)) fail(ErrorKind::kUsage, "ANLS threshold must lie in [0,1]");
}

namespace {

std::size_t edit_distance(const std::u32string& a, const std::u32string& b) {
  if (a.size() < b.size()) return edit_distance(b, a);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double similarity(const std::u32string& a, const std::u32string& b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

}  // namespace

std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
  return edit_distance(text::decode_utf8(a), text::decode_utf8(b));
}

double normalized_similarity(std::string_view a, std::string_view b) {
  return similarity(text::decode_utf8(a), text::decode_utf8(b));
}

std::string normalize_answer(std::string_view s, const AnlsConfig& cfg) {
  std::string out(s);
  if (cfg.trim_whitespace) out = text::trim(text::collapse_whitespace(out));
  if (cfg.case_fold) out = text::to_lower_ascii(out);
  return out;
}

double anls_score(std::string_view prediction, std::span<const std::string> golds, const AnlsConfig& cfg) {
  validate(cfg);
  if (golds.empty()) fail(ErrorKind::kUsage, "anls_score needs at least one gold answer");
  const auto pred = text::decode_utf8(normalize_answer(prediction, cfg));
  double best = 0.0;
  for (const auto& gold : golds) best = std::max(best, similarity(pred, text::decode_utf8(normalize_answer(gold, cfg))));
  return best < cfg.threshold ? 0.0 : best;
}

double iou(const BBox& a, const BBox& b) {
  const std::int64_t ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const std::int64_t iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const std::int64_t inter = ix * iy;
  const std::int64_t uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool passes_threshold(double iou_value, int threshold_hundredths) {
  return std::llround(iou_value * 1e6) >= static_cast<long long>(threshold_hundredths) * 10000;
}

MapResult map_at_iou(std::span<const std::pair<std::optional<BBox>, BBox>> pairs) {
  if (pairs.empty()) fail(ErrorKind::kUsage, "map_at_iou over an empty pair list");
  MapResult out;
  for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
    std::size_t hits = 0;
    for (const auto& [predicted, gold] : pairs) {
      if (predicted && passes_threshold(iou(*predicted, gold), kIouThresholds[t])) ++hits;
    }
    out.per_threshold_accuracy[t] = static_cast<double>(hits) / static_cast<double>(pairs.size());
  }
  out.map_iou = std::accumulate(out.per_threshold_accuracy.begin(), out.per_threshold_accuracy.end(), 0.0) /
                static_cast<double>(kIouThresholds.size());
  return out;
}

EvalReport score_run(std::span<const Prediction> predictions, std::span<const QARecord> gold,
                     const ScoreOptions& options) {
  validate(options.anls);
  std::map<std::string, const QARecord*> by_id;
  for (const auto& record : gold) by_id.emplace(record.question_id, &record);

  std::map<std::string, const Prediction*> predicted;
  std::vector<std::string> unknown;
  for (const auto& p : predictions) {
    if (!by_id.count(p.question_id)) {
      unknown.push_back(p.question_id);
      continue;
    }
    if (!predicted.emplace(p.question_id, &p).second) {
      fail(ErrorKind::kValidation, "more than one prediction for question " + p.question_id);
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
    fail(ErrorKind::kValidation, "predictions reference unknown question ids: " + list);
  }

  EvalReport report;
  report.gated = options.gate_iou_on_answer;
  std::vector<std::pair<std::optional<BBox>, BBox>> pairs;
  double anls_sum = 0;
  for (const auto& record : gold) {
    QuestionScore row{record.question_id, 0.0, std::nullopt};
    const auto it = predicted.find(record.question_id);
    const Prediction* p = it == predicted.end() ? nullptr : it->second;
    if (p) row.anls = anls_score(p->answer, record.gold_answers, options.anls);
    if (record.gold_box) {
      std::optional<BBox> box = p ? p->answer_box : std::nullopt;
      if (box) ++report.with_predicted_box;
      row.iou = box ? iou(*box, *record.gold_box) : 0.0;
      if (options.gate_iou_on_answer && row.anls <= 0.0) box.reset();
      pairs.emplace_back(box, *record.gold_box);
    }
    anls_sum += row.anls;
    report.per_question.push_back(std::move(row));
  }
  report.total = gold.size();
  report.with_gold_box = pairs.size();
  report.aggregate_anls = gold.empty() ? 0.0 : anls_sum / static_cast<double>(gold.size());
  if (!pairs.empty()) {
    const auto m = map_at_iou(pairs);
    report.per_threshold_accuracy = m.per_threshold_accuracy;
    report.map_iou = m.map_iou;
  }
  return report;
}

}  // namespace dlava::metrics
