#include "dlava/constructed_image.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dlava/error.hpp"
#include "dlava/glyph_atlas.hpp"
#include "dlava/json_io.hpp"
#include "dlava/png_io.hpp"

namespace dlava::constructed {

void validate(const LayoutConfig& cfg) {
  if (cfg.row_padding <= 0 || cfg.label_gap <= 0 || cfg.max_crop_height <= 0 || cfg.canvas_width <= 0 ||
      cfg.max_canvas_height <= 0 || cfg.label_scale <= 0) {
    fail(ErrorKind::kUsage, "layout pixel values must be positive");
  }
  if (cfg.label_template.find("{i}") == std::string::npos) {
    fail(ErrorKind::kUsage, "label template must contain the {i} placeholder");
  }
}

std::string format_label(const LayoutConfig& cfg, std::int32_t region_id) {
  std::string out = cfg.label_template;
  const auto at = out.find("{i}");
  if (at != std::string::npos) out.replace(at, 3, std::to_string(region_id));
  return out;
}

namespace {

struct PendingRow {
  const DetectedRegion* region;
  Raster crop;
  std::string label;
  std::int32_t height;
};

ConstructedImageMap render_page(const std::vector<PendingRow>& rows, const LayoutConfig& cfg, const std::string& doc_id,
                                std::int32_t page) {
  std::int32_t height = 0;
  for (const auto& r : rows) height += r.height + cfg.row_padding;
  Canvas canvas(cfg.canvas_width, height, cfg.background);
  ConstructedImageMap out;
  out.layout = cfg;
  out.page = page;
  std::int32_t cursor = 0;
  for (const auto& r : rows) {
    const std::int32_t top = cursor + cfg.row_padding;
    const std::int32_t x = cfg.row_padding;
    const std::int32_t y = top + (r.height - r.crop.height()) / 2;
    canvas.paste(r.crop, x, y);
    const std::int32_t label_x = x + r.crop.width() + cfg.label_gap;
    const std::int32_t label_y = top + (r.height - glyphs::text_height(cfg.label_scale)) / 2;
    glyphs::draw_text(canvas, r.label, label_x, label_y, cfg.label_scale);
    out.rows.push_back({r.region->region_id, r.region->box, BBox{x, y, x + r.crop.width(), y + r.crop.height()}});
    cursor = top + r.height;
  }
  out.image = {doc_id + "#constructed" + std::to_string(page), std::move(canvas).freeze()};
  return out;
}

}  // namespace

std::vector<ConstructedImageMap> build_constructed_image(std::span<const DetectedRegion> regions,
                                                         const LayoutConfig& cfg, const std::string& doc_id) {
  validate(cfg);
  if (regions.empty()) fail(ErrorKind::kUsage, "constructed image needs at least one region");
  std::vector<const DetectedRegion*> ordered;
  for (const auto& r : regions) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->region_id < b->region_id; });
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (ordered[i]->region_id != static_cast<std::int32_t>(i)) {
      fail(ErrorKind::kUsage, "region ids must be dense from 0; found " + std::to_string(ordered[i]->region_id) +
                                  " at position " + std::to_string(i));
    }
  }

  const std::int32_t label_height = glyphs::text_height(cfg.label_scale);
  std::vector<std::vector<PendingRow>> pages(1);
  std::int32_t page_height = 0;
  for (const auto* region : ordered) {
    Raster crop = region->crop;
    if (crop.empty()) fail(ErrorKind::kLayout, "region " + std::to_string(region->region_id) + " has an empty crop");
    if (crop.height() > cfg.max_crop_height) {
      const auto width = std::max<std::int32_t>(
          1, static_cast<std::int32_t>(std::lround(static_cast<double>(crop.width()) * cfg.max_crop_height /
                                                   crop.height())));
      crop = resize_nearest(crop, width, cfg.max_crop_height);
    }
    auto label = format_label(cfg, region->region_id);
    const std::int32_t needed =
        cfg.row_padding + crop.width() + cfg.label_gap + glyphs::text_width(label, cfg.label_scale) + cfg.row_padding;
    if (needed > cfg.canvas_width) {
      fail(ErrorKind::kLayout, "region " + std::to_string(region->region_id) + " needs " + std::to_string(needed) +
                                   " px but the canvas is " + std::to_string(cfg.canvas_width) + " px wide");
    }
    const std::int32_t row_height = std::max(crop.height(), label_height);
    if (row_height + cfg.row_padding > cfg.max_canvas_height) {
      fail(ErrorKind::kLayout, "a single row exceeds max_canvas_height");
    }
    if (!pages.back().empty() && page_height + row_height + cfg.row_padding > cfg.max_canvas_height) {
      pages.emplace_back();
      page_height = 0;
    }
    page_height += row_height + cfg.row_padding;
    pages.back().push_back({region, std::move(crop), std::move(label), row_height});
  }

  std::vector<ConstructedImageMap> out;
  for (std::size_t p = 0; p < pages.size(); ++p) {
    out.push_back(render_page(pages[p], cfg, doc_id, static_cast<std::int32_t>(p)));
  }
  return out;
}

BBox resolve_region_ids(std::span<const std::int32_t> ids, std::span<const ConstructedImageMap> pages) {
  if (ids.empty()) fail(ErrorKind::kGrounding, "no region ids to resolve");
  std::map<std::int32_t, BBox> known;
  for (const auto& page : pages) {
    for (const auto& row : page.rows) known.emplace(row.region_id, row.source_box);
  }
  std::vector<BBox> boxes;
  std::string bad;
  for (auto id : ids) {
    const auto it = known.find(id);
    if (it == known.end()) {
      bad += (bad.empty() ? "" : ", ") + std::to_string(id);
      continue;
    }
    boxes.push_back(it->second);
  }
  if (!bad.empty()) fail(ErrorKind::kGrounding, "unknown region ids: " + bad);
  return envelope(boxes);
}

void dump_constructed(std::span<const ConstructedImageMap> pages, const std::filesystem::path& dir,
                      const std::string& stem) {
  std::filesystem::create_directories(dir);
  json_io::OrderedJson rows = json_io::OrderedJson::array();
  for (const auto& page : pages) {
    png::write_file(dir / (stem + "_page" + std::to_string(page.page) + ".png"), page.image.raster);
    for (const auto& row : page.rows) {
      rows.push_back({{"region_id", row.region_id},
                      {"source_box", json_io::box_to_json(row.source_box)},
                      {"row_box", json_io::box_to_json(row.row_box)},
                      {"page", page.page}});
    }
  }
  json_io::write_atomic(dir / (stem + "_constructed.json"), rows.dump(2) + "\n");
}

}  // namespace dlava::constructed
