#include "dlava/detection.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "dlava/error.hpp"
#include "dlava/json_io.hpp"
#include "dlava/text.hpp"

namespace dlava::detection {

std::vector<BBox> sort_reading_order(std::vector<BBox> boxes) {
  if (boxes.size() < 2) return boxes;
  std::vector<std::int32_t> heights;
  for (const auto& b : boxes) heights.push_back(b.height());
  std::nth_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>((heights.size() - 1) / 2),
                   heights.end());
  const std::int32_t median_height = heights[(heights.size() - 1) / 2];

  // Doubled centres keep the band test in integers: |c_a - c_b| < h / 2.
  auto centre2 = [](const BBox& b) { return b.y1 + b.y2; };
  std::sort(boxes.begin(), boxes.end(), [&](const BBox& a, const BBox& b) {
    return std::make_tuple(centre2(a), a.x1, a.y1, a.x2, a.y2) < std::make_tuple(centre2(b), b.x1, b.y1, b.x2, b.y2);
  });
  std::vector<BBox> out;
  out.reserve(boxes.size());
  std::size_t band_start = 0;
  for (std::size_t i = 1; i <= boxes.size(); ++i) {
    if (i == boxes.size() || centre2(boxes[i]) - centre2(boxes[band_start]) >= median_height) {
      std::sort(boxes.begin() + static_cast<std::ptrdiff_t>(band_start), boxes.begin() + static_cast<std::ptrdiff_t>(i),
                [](const BBox& a, const BBox& b) {
                  return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
                });
      out.insert(out.end(), boxes.begin() + static_cast<std::ptrdiff_t>(band_start),
                 boxes.begin() + static_cast<std::ptrdiff_t>(i));
      band_start = i;
    }
  }
  return out;
}

std::vector<DetectedRegion> DetectorBackend::detect(const DocumentImage& image) const {
  validate_image(image);
  std::vector<BBox> proposals;
  try {
    std::unique_lock<std::mutex> lock(single_flight_mutex_, std::defer_lock);
    if (single_flight()) lock.lock();
    proposals = propose(image);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kDetection) throw;
    throw Error(ErrorKind::kDetection, "detector '" + backend_id() + "' failed: " + e.what(), "detection");
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kDetection, "detector '" + backend_id() + "' failed: " + e.what(), "detection");
  }
  std::vector<BBox> kept;
  for (auto b : proposals) {
    b.x1 = std::clamp(b.x1, 0, image.width());
    b.x2 = std::clamp(b.x2, 0, image.width());
    b.y1 = std::clamp(b.y1, 0, image.height());
    b.y2 = std::clamp(b.y2, 0, image.height());
    if (b.valid() && b.area() > 0) kept.push_back(b);
  }
  kept = sort_reading_order(std::move(kept));
  std::vector<DetectedRegion> regions;
  regions.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    regions.push_back({static_cast<std::int32_t>(i), kept[i], crop(image, kept[i])});
  }
  return regions;
}

namespace {

struct Component {
  BBox box;
};

std::vector<Component> connected_components(const std::vector<std::uint8_t>& ink, std::int32_t width,
                                             std::int32_t height) {
  std::vector<Component> out;
  std::vector<std::uint8_t> seen(ink.size(), 0);
  std::vector<std::int32_t> stack;
  for (std::int32_t y = 0; y < height; ++y) {
    for (std::int32_t x = 0; x < width; ++x) {
      const auto start = static_cast<std::size_t>(y) * width + x;
      if (!ink[start] || seen[start]) continue;
      BBox box{x, y, x + 1, y + 1};
      seen[start] = 1;
      stack.assign(1, static_cast<std::int32_t>(start));
      while (!stack.empty()) {
        const auto idx = stack.back();
        stack.pop_back();
        const std::int32_t cx = idx % width, cy = idx / width;
        box.x1 = std::min(box.x1, cx);
        box.y1 = std::min(box.y1, cy);
        box.x2 = std::max(box.x2, cx + 1);
        box.y2 = std::max(box.y2, cy + 1);
        for (std::int32_t dy = -1; dy <= 1; ++dy) {
          for (std::int32_t dx = -1; dx <= 1; ++dx) {
            const std::int32_t nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
            const auto n = static_cast<std::size_t>(ny) * width + nx;
            if (ink[n] && !seen[n]) {
              seen[n] = 1;
              stack.push_back(static_cast<std::int32_t>(n));
            }
          }
        }
      }
      out.push_back({box});
    }
  }
  return out;
}

bool same_word(const BBox& a, const BBox& b, const ReferenceParams& params) {
  const std::int32_t vertical_overlap = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (vertical_overlap <= 0) return false;
  const std::int32_t gap = std::max(a.x1, b.x1) - std::min(a.x2, b.x2);
  const double height = std::max(a.y2 - a.y1, b.y2 - b.y1);
  return gap < std::max<double>(params.merge_gap, params.merge_gap_height_ratio * height);
}

}  // namespace

std::vector<BBox> reference_boxes(const DocumentImage& image, const ReferenceParams& params) {
  validate_image(image);
  const auto gray = to_grayscale(image.raster);
  std::vector<std::uint8_t> ink(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) ink[i] = gray[i] < params.binarize_threshold ? 1 : 0;
  const auto components = connected_components(ink, image.width(), image.height());

  std::vector<BBox> boxes;
  boxes.reserve(components.size());
  for (const auto& c : components) boxes.push_back(c.box);
  // Merge until no pair qualifies; merged boxes can reach new neighbours.
  bool merged = true;
  while (merged) {
    merged = false;
    std::sort(boxes.begin(), boxes.end(), [](const BBox& a, const BBox& b) {
      return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
    });
    std::vector<BBox> next;
    std::vector<bool> used(boxes.size(), false);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (used[i]) continue;
      BBox acc = boxes[i];
      bool grew = true;
      while (grew) {
        grew = false;
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
          if (used[j] || !same_word(acc, boxes[j], params)) continue;
          used[j] = true;
          acc = {std::min(acc.x1, boxes[j].x1), std::min(acc.y1, boxes[j].y1), std::max(acc.x2, boxes[j].x2),
                 std::max(acc.y2, boxes[j].y2)};
          grew = merged = true;
        }
      }
      next.push_back(acc);
    }
    boxes = std::move(next);
  }
  std::erase_if(boxes, [&](const BBox& b) { return b.area() < params.min_area; });
  return sort_reading_order(std::move(boxes));
}

std::vector<DetectedRegion> reference_detect(const DocumentImage& image, const ReferenceParams& params) {
  return ReferenceDetector(params).detect(image);
}

std::vector<BBox> PrecomputedDetector::propose(const DocumentImage& image) const {
  const auto it = boxes_.find(image.doc_id);
  if (it == boxes_.end()) {
    throw Error(ErrorKind::kDetection, "detector '" + id_ + "' has no detections for document '" + image.doc_id + "'",
                "detection");
  }
  return it->second;
}

std::shared_ptr<PrecomputedDetector> load_precomputed(const std::filesystem::path& path) {
  std::map<std::string, std::vector<BBox>> boxes;
  const auto lines = json_io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto j = json_io::parse_or_throw(lines[i], where);
    if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string() || !j.contains("regions") ||
        !j["regions"].is_array()) {
      fail(ErrorKind::kValidation, where + ": expected {doc_id: string, regions: list}");
    }
    auto& out = boxes[j["doc_id"].get<std::string>()];
    for (const auto& r : j["regions"]) {
      if (r.is_array() && r.size() == 8) {
        Quad q;
        for (std::size_t k = 0; k < 4; ++k) {
          if (!r[2 * k].is_number() || !r[2 * k + 1].is_number()) fail(ErrorKind::kValidation, where + ": quad entries must be numbers");
          q.corners[k] = {r[2 * k].get<double>(), r[2 * k + 1].get<double>()};
        }
        try {
          out.push_back(quad_to_bbox(q));
        } catch (const Error& e) {
          fail(ErrorKind::kValidation, where + ": " + e.what());
        }
      } else {
        out.push_back(json_io::box_from_json(r, where));
      }
    }
  }
  return std::make_shared<PrecomputedDetector>(std::move(boxes));
}

void save_precomputed(const std::filesystem::path& path, const std::map<std::string, std::vector<BBox>>& boxes) {
  std::string out;
  for (const auto& [doc_id, list] : boxes) {
    json_io::OrderedJson j;
    j["doc_id"] = doc_id;
    j["regions"] = json_io::OrderedJson::array();
    for (const auto& b : list) j["regions"].push_back(json_io::box_to_json(b));
    out += j.dump() + "\n";
  }
  json_io::write_atomic(path, out);
}

}  // namespace dlava::detection
