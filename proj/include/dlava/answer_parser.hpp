#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dlava/geometry.hpp"

namespace dlava::model {

struct GroundedAnswer {
  std::string answer;
  std::optional<std::vector<std::int32_t>> region_ids;
  std::optional<BBox> box;
  std::optional<std::string> confidence_note;
  // The model said the document does not contain the answer.
  bool not_found = false;

  friend bool operator==(const GroundedAnswer&, const GroundedAnswer&) = default;
};

struct ParseContext {
  bool expects_box = false;
  // When set, region ids outside this set are dropped.
  std::optional<std::set<std::int32_t>> valid_ids;
};

// Recovers an answer from model output. In order: strips code fences and
// surrounding prose, parses the object, falls back to the first balanced
// brace span, then to a lenient rewrite (single quotes, unquoted keys,
// trailing commas, comments, Python literals, missing closers). Synonym keys
// are searched through nested objects; boxes may be 4-number arrays, point
// pairs or coordinate objects; ids may be integers or "B<i>" strings.
// "not found", "N/A" and empty answers become not_found. Output that yields
// nothing usable is a parse error carrying the raw text.
GroundedAnswer parse_grounded_answer(std::string_view raw, const ParseContext& context = {});

// Canonical JSON form; parsing it returns an equal value.
std::string to_json(const GroundedAnswer& answer);

// Lenient rewrite into strict JSON text; exposed for tests.
std::string repair_json_text(std::string_view text);

}  // namespace dlava::model
