#include <gtest/gtest.h>

#include "dlava/constructed_image.hpp"
#include "dlava/detection.hpp"
#include "dlava/glyph_atlas.hpp"
#include "dlava/json_io.hpp"
#include "test_util.hpp"

namespace dlava::constructed {
namespace {

using testing::error_kind;

struct Doc {
  DocumentImage image;
  std::vector<BBox> words;
  std::vector<DetectedRegion> regions;
};

Doc texas() {
  Canvas canvas(400, 80);
  std::vector<BBox> words;
  std::int32_t x = 12;
  for (const char* w : {"THE", "STATE", "OF", "TEXAS"}) {
    words.push_back(glyphs::draw_text(canvas, w, x, 20, 2));
    x = words.back().x2 + 24;
  }
  Doc d{{"tx", std::move(canvas).freeze()}, words, {}};
  d.regions = detection::reference_detect(d.image);
  return d;
}

TEST(Label, Template) {
  LayoutConfig cfg;
  EXPECT_EQ(format_label(cfg, 3), "(B3)");
  cfg.label_template = "#{i}";
  EXPECT_EQ(format_label(cfg, 12), "#12");
  cfg.label_template = "B";
  EXPECT_EQ(error_kind([&] { validate(cfg); }), ErrorKind::kUsage);
}

TEST(Build, OneRowPerRegionInIdOrder) {
  const auto d = texas();
  ASSERT_EQ(d.regions.size(), 4u);
  const auto pages = build_constructed_image(d.regions, {}, "tx");
  ASSERT_EQ(pages.size(), 1u);
  const auto& page = pages[0];
  ASSERT_EQ(page.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& row = page.rows[i];
    EXPECT_EQ(row.region_id, static_cast<std::int32_t>(i));
    EXPECT_EQ(row.source_box, d.words[i]);
    EXPECT_EQ(crop(page.image, row.row_box), d.regions[i].crop);
    if (i > 0) {
      EXPECT_GT(row.row_box.y1, page.rows[i - 1].row_box.y2);
    }
    const BBox label_area{row.row_box.x2, row.row_box.y1, page.image.width(), row.row_box.y2};
    EXPECT_FALSE(is_blank(crop(page.image, label_area))) << "label missing on row " << i;
  }
  EXPECT_EQ(page.image.width(), LayoutConfig{}.canvas_width);
}

TEST(Build, Deterministic) {
  const auto d = texas();
  const auto a = build_constructed_image(d.regions, {}, "tx");
  const auto b = build_constructed_image(d.regions, {}, "tx");
  EXPECT_EQ(a[0].image.raster, b[0].image.raster);
  EXPECT_EQ(a[0].rows, b[0].rows);
}

TEST(Build, TallCropsScaleDown) {
  std::vector<DetectedRegion> regions{{0, {0, 0, 50, 100}, Raster::filled(50, 100, kBlack)}};
  const auto pages = build_constructed_image(regions, {});
  EXPECT_EQ(pages[0].rows[0].row_box.height(), 48);
  EXPECT_EQ(pages[0].rows[0].row_box.width(), 24);
}

TEST(Build, PaginatesPastMaxHeight) {
  const auto d = texas();
  LayoutConfig cfg;
  cfg.max_canvas_height = 60;
  const auto pages = build_constructed_image(d.regions, cfg, "tx");
  ASSERT_GT(pages.size(), 1u);
  std::vector<std::int32_t> ids;
  for (const auto& p : pages) {
    EXPECT_LE(p.image.height(), 60);
    for (const auto& r : p.rows) ids.push_back(r.region_id);
  }
  EXPECT_EQ(ids, (std::vector<std::int32_t>{0, 1, 2, 3}));
  const std::vector<std::int32_t> all{0, 3};
  EXPECT_EQ(resolve_region_ids(all, pages), (BBox{d.words[0].x1, d.words[0].y1, d.words[3].x2, d.words[3].y2}));
}

TEST(Build, Errors) {
  EXPECT_EQ(error_kind([] { build_constructed_image({}, {}); }), ErrorKind::kUsage);
  std::vector<DetectedRegion> gap{{1, {0, 0, 5, 5}, Raster::filled(5, 5, kBlack)}};
  EXPECT_EQ(error_kind([&] { build_constructed_image(gap, {}); }), ErrorKind::kUsage);
  std::vector<DetectedRegion> wide{{0, {0, 0, 2000, 10}, Raster::filled(2000, 10, kBlack)}};
  EXPECT_EQ(error_kind([&] { build_constructed_image(wide, {}); }), ErrorKind::kLayout);
}

TEST(Resolve, EnvelopeAndUnknownIds) {
  const auto d = texas();
  const auto pages = build_constructed_image(d.regions, {}, "tx");
  const std::vector<std::int32_t> ids{1, 2};
  EXPECT_EQ(resolve_region_ids(ids, pages), (BBox{d.words[1].x1, d.words[1].y1, d.words[2].x2, d.words[2].y2}));
  const std::vector<std::int32_t> bad{1, 9};
  try {
    resolve_region_ids(bad, pages);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGrounding);
    EXPECT_NE(std::string(e.what()).find("9"), std::string::npos);
  }
  EXPECT_EQ(error_kind([&] { resolve_region_ids({}, pages); }), ErrorKind::kGrounding);
}

TEST(Dump, WritesPagesAndMap) {
  testing::TempDir dir;
  const auto d = texas();
  const auto pages = build_constructed_image(d.regions, {}, "tx");
  dump_constructed(pages, dir.path(), "tx");
  EXPECT_TRUE(std::filesystem::exists(dir / "tx_page0.png"));
  const auto rows = json_io::parse_or_throw(json_io::read_text(dir / "tx_constructed.json"), "dump");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2]["region_id"], 2);
  EXPECT_EQ(rows[2]["page"], 0);
}

}  // namespace
}  // namespace dlava::constructed
