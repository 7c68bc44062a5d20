#include "dlava/json_io.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "dlava/error.hpp"

namespace dlava::json_io {

OrderedJson box_to_json(const BBox& box) { return OrderedJson::array({box.x1, box.y1, box.x2, box.y2}); }

OrderedJson box_to_json(const std::optional<BBox>& box) { return box ? box_to_json(*box) : OrderedJson(nullptr); }

BBox box_from_json(const Json& value, std::string_view what) {
  if (!value.is_array() || value.size() != 4) {
    fail(ErrorKind::kValidation, std::string(what) + ": box must be an array of 4 numbers");
  }
  double v[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!value[i].is_number()) fail(ErrorKind::kValidation, std::string(what) + ": box entries must be numbers");
    v[i] = value[i].get<double>();
    if (v[i] < 0) fail(ErrorKind::kValidation, std::string(what) + ": negative box coordinate");
  }
  if (v[0] > v[2] || v[1] > v[3]) fail(ErrorKind::kValidation, std::string(what) + ": box corners out of order");
  return round_outward(v[0], v[1], v[2], v[3]);
}

std::optional<BBox> optional_box_from_json(const Json& value, std::string_view what) {
  if (value.is_null()) return std::nullopt;
  return box_from_json(value, what);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kValidation, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const auto contents = read_text(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string::npos) end = contents.size();
    std::string line = contents.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

void write_atomic(const std::filesystem::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "." +
         std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kValidation, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::kValidation, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Json parse_or_throw(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::kValidation, std::string(what) + ": malformed JSON (" + e.what() + ")");
  }
}

}  // namespace dlava::json_io
