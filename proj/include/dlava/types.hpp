#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlava/geometry.hpp"
#include "dlava/image.hpp"

namespace dlava {

// One detected text segment. region_id is its reading-order index within the
// document; crop holds the pixels under box.
struct DetectedRegion {
  std::int32_t region_id = 0;
  BBox box;
  Raster crop;
};

// A detected region paired with its recognized text. Empty text means the
// recognizer produced nothing, which is not an error.
struct RecognizedRegion {
  DetectedRegion region;
  std::string text;
};

struct QARecord {
  std::string doc_id;
  std::string question_id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::optional<BBox> gold_box;
  std::optional<std::string> source_field_key;

  friend bool operator==(const QARecord&, const QARecord&) = default;
};

struct Prediction {
  std::string question_id;
  std::string answer;
  std::optional<BBox> answer_box;
  std::vector<std::int32_t> matched_region_ids;
  std::string raw_model_output;
  std::int64_t wall_time_ms = 0;
  // Set when the question failed; the answer is then empty and the box absent.
  std::optional<std::string> error;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

}  // namespace dlava
