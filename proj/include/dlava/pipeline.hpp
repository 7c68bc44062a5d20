#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlava/constructed_image.hpp"
#include "dlava/dataset.hpp"
#include "dlava/detection.hpp"
#include "dlava/json_io.hpp"
#include "dlava/model_client.hpp"
#include "dlava/recognition.hpp"

namespace dlava::pipeline {

enum class Mode { kOcrDependent, kOcrFree };
// kOriginalImage adds the document image to the grounding call; kNoExtraction
// drops the extraction call and asks the grounding call for the answer too.
enum class Ablation { kNone, kOriginalImage, kNoExtraction };

std::string_view to_string(Mode m);
std::string_view to_string(Ablation a);
// Accepts "ocr_dependent", "ocr-dep", "ocr-dependent", "ocr_free", "ocr-free".
Mode mode_from_string(std::string_view s);
// Accepts "none", "1", "ablation1", "2", "ablation2".
Ablation ablation_from_string(std::string_view s);

struct PipelineConfig {
  Mode mode = Mode::kOcrFree;
  Ablation ablation = Ablation::kNone;
  std::shared_ptr<const detection::DetectorBackend> detector;
  std::shared_ptr<const recognition::RecognizerBackend> recognizer;
  std::shared_ptr<model::ModelBackend> model;
  constructed::LayoutConfig layout;
  model::PromptSet prompts = model::default_prompt_set();
  model::PromptOptions prompt_options;
  // Returned coordinates snap to detected regions at or above this IoU.
  double snap_iou = 0.5;
  // Receives non-fatal notes; stderr when unset.
  std::function<void(const std::string&)> warn;
};

// Usage error on a broken invariant: missing backends, ocr_dependent without a
// recognizer, ablations outside ocr_free.
void validate(const PipelineConfig& cfg);

// Everything needed to re-create the run, with backends named by id.
json_io::OrderedJson config_snapshot(const PipelineConfig& cfg);

// Per-document detection results shared by the questions of one run.
class DetectionMemo {
 public:
  std::shared_ptr<const std::vector<DetectedRegion>> get(const DocumentImage& image,
                                                         const detection::DetectorBackend& detector);

 private:
  using Entry = std::shared_future<std::shared_ptr<const std::vector<DetectedRegion>>>;
  std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

struct RunContext {
  std::string question_id = "q";
  DetectionMemo* memo = nullptr;
};

// Request tags are "<stage>:<doc_id>:<question_id>" with stage one of these.
inline constexpr std::string_view kStageOcrDependent = "ocr_dependent";
inline constexpr std::string_view kStageExtract = "extract";
inline constexpr std::string_view kStageGround = "ground";
inline constexpr std::string_view kStageCombined = "combined";
std::string request_tag(std::string_view stage, std::string_view doc_id, std::string_view question_id);

// Stage failures throw dlava::Error with stage() set (detection, recognition,
// layout, extraction, grounding, model). Unparseable model output does not
// throw: the prediction keeps the raw text and an error note.
Prediction run_ocr_dependent(const DocumentImage& image, const std::string& question, const PipelineConfig& cfg,
                             const RunContext& ctx = {});
Prediction run_ocr_free(const DocumentImage& image, const std::string& question, const PipelineConfig& cfg,
                        const RunContext& ctx = {});
// Dispatches on cfg.mode.
Prediction run(const DocumentImage& image, const std::string& question, const PipelineConfig& cfg,
               const RunContext& ctx = {});

struct AnnotationStyle {
  Rgb color{255, 0, 0};
  std::int32_t thickness = 3;
};

// Copy of the image with the box outlined inside its edges.
DocumentImage annotate(const DocumentImage& image, const BBox& box, const AnnotationStyle& style = {});

// Mock rules answering every stage of every record from ground truth: the gold
// answer, the detected regions lying inside the gold box, and the gold box.
std::vector<model::MockRule> oracle_rules(const dataset::Corpus& corpus, const detection::DetectorBackend& detector);

// OCR-dependent rule that reads the prompt's region lines and answers with the
// recognized text of the regions inside each record's gold box.
std::vector<model::MockRule> echo_rules(const dataset::Corpus& corpus);

}  // namespace dlava::pipeline
