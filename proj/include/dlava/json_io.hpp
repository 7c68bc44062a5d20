#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dlava/geometry.hpp"

namespace dlava::json_io {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

OrderedJson box_to_json(const BBox& box);
OrderedJson box_to_json(const std::optional<BBox>& box);

// Accepts [x1,y1,x2,y2] with integer or fractional numbers (fractions round
// outward). Throws a validation error naming `what` otherwise.
BBox box_from_json(const Json& value, std::string_view what);
std::optional<BBox> optional_box_from_json(const Json& value, std::string_view what);

std::string read_text(const std::filesystem::path& path);
// Lines without their terminators; a trailing empty line is dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes via a temporary sibling and rename, so readers never observe a
// partially written file.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

Json parse_or_throw(std::string_view text, std::string_view what);

}  // namespace dlava::json_io
