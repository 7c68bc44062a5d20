#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dlava/image.hpp"
#include "dlava/types.hpp"

namespace dlava::detection {

// Text detector. Implementations only propose boxes; detect() turns them into
// regions with reading-order ids and crops. Identical image bytes must give
// identical proposals.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;

  virtual std::string backend_id() const = 0;
  virtual bool needs_network() const { return false; }
  // Backends that cannot take concurrent calls return true; detect() then
  // serializes them.
  virtual bool single_flight() const { return false; }

  // Regions sorted in reading order with ids 0..n-1. Proposals are clipped to
  // the image; empty ones are dropped. Backend failures surface as detection
  // errors naming the backend.
  std::vector<DetectedRegion> detect(const DocumentImage& image) const;

 protected:
  virtual std::vector<BBox> propose(const DocumentImage& image) const = 0;

 private:
  mutable std::mutex single_flight_mutex_;
};

// Reading order: boxes whose vertical centres differ by less than half the
// median box height share a band; bands go top to bottom, boxes within a band
// left to right.
std::vector<BBox> sort_reading_order(std::vector<BBox> boxes);

struct ReferenceParams {
  std::uint8_t binarize_threshold = 128;
  std::int64_t min_area = 9;
  std::int32_t merge_gap = 6;
  // Gap limit grows with the taller of the two boxes being merged.
  double merge_gap_height_ratio = 0.8;
};

// Fixed-threshold binarization, 8-connected components, merging of components
// on a shared baseline whose horizontal gap is below
// max(merge_gap, merge_gap_height_ratio x box height), then an area filter. Boxes are returned in reading order.
std::vector<BBox> reference_boxes(const DocumentImage& image, const ReferenceParams& params = {});
std::vector<DetectedRegion> reference_detect(const DocumentImage& image, const ReferenceParams& params = {});

class ReferenceDetector : public DetectorBackend {
 public:
  explicit ReferenceDetector(ReferenceParams params = {}) : params_(params) {}
  std::string backend_id() const override { return "reference"; }
  const ReferenceParams& params() const { return params_; }

 protected:
  std::vector<BBox> propose(const DocumentImage& image) const override { return reference_boxes(image, params_); }

 private:
  ReferenceParams params_;
};

// Replays stored detections keyed by doc_id.
class PrecomputedDetector : public DetectorBackend {
 public:
  explicit PrecomputedDetector(std::map<std::string, std::vector<BBox>> boxes, std::string id = "precomputed")
      : boxes_(std::move(boxes)), id_(std::move(id)) {}
  std::string backend_id() const override { return id_; }
  const std::map<std::string, std::vector<BBox>>& boxes() const { return boxes_; }

 protected:
  std::vector<BBox> propose(const DocumentImage& image) const override;

 private:
  std::map<std::string, std::vector<BBox>> boxes_;
  std::string id_;
};

// One line per document: {"doc_id": ..., "regions": [[x1,y1,x2,y2] or
// [8-number quad], ...]}. Malformed files are a validation error.
std::shared_ptr<PrecomputedDetector> load_precomputed(const std::filesystem::path& path);
void save_precomputed(const std::filesystem::path& path, const std::map<std::string, std::vector<BBox>>& boxes);

}  // namespace dlava::detection
