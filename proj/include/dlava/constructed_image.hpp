#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dlava/image.hpp"
#include "dlava/types.hpp"

namespace dlava::constructed {

struct LayoutConfig {
  std::int32_t row_padding = 8;
  std::int32_t label_gap = 12;
  // Taller crops are scaled down, keeping their aspect ratio.
  std::int32_t max_crop_height = 48;
  // "{i}" is replaced by the region id.
  std::string label_template = "(B{i})";
  std::int32_t canvas_width = 1024;
  Rgb background = kWhite;
  // Rows that would push a page past this height start a new page.
  std::int32_t max_canvas_height = 8192;
  std::int32_t label_scale = 2;
};

void validate(const LayoutConfig& cfg);
std::string format_label(const LayoutConfig& cfg, std::int32_t region_id);

struct Row {
  std::int32_t region_id = 0;
  // In the original document.
  BBox source_box;
  // Where the (possibly scaled) crop sits on the constructed page.
  BBox row_box;
  friend bool operator==(const Row&, const Row&) = default;
};

// One page of the constructed image: every row shows one crop followed by its
// id label.
struct ConstructedImageMap {
  DocumentImage image;
  std::vector<Row> rows;
  LayoutConfig layout;
  std::int32_t page = 0;
};

// Rows appear in region_id order. Region ids must be dense from 0. An empty
// region list is a usage error; a crop that cannot fit the canvas width is a
// layout error.
std::vector<ConstructedImageMap> build_constructed_image(std::span<const DetectedRegion> regions,
                                                         const LayoutConfig& cfg, const std::string& doc_id = "doc");

// Envelope of the referenced regions' source boxes. Unknown ids are a
// grounding error listing them.
BBox resolve_region_ids(std::span<const std::int32_t> ids, std::span<const ConstructedImageMap> pages);

// Writes <stem>_page<k>.png for each page and <stem>_constructed.json with
// {region_id, source_box, row_box, page} rows.
void dump_constructed(std::span<const ConstructedImageMap> pages, const std::filesystem::path& dir,
                      const std::string& stem);

}  // namespace dlava::constructed
