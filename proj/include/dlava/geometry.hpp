#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace dlava {

// Axis-aligned box in pixel coordinates. Width is x2 - x1 and height is
// y2 - y1, so a box covers columns [x1, x2) and rows [y1, y2).
struct BBox {
  std::int32_t x1 = 0;
  std::int32_t y1 = 0;
  std::int32_t x2 = 0;
  std::int32_t y2 = 0;

  std::int32_t width() const { return x2 - x1; }
  std::int32_t height() const { return y2 - y1; }
  std::int64_t area() const { return static_cast<std::int64_t>(width()) * height(); }
  bool valid() const { return x1 >= 0 && y1 >= 0 && x1 <= x2 && y1 <= y2; }
  bool fits(std::int32_t image_width, std::int32_t image_height) const {
    return valid() && x2 <= image_width && y2 <= image_height;
  }
  bool contains(const BBox& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && other.x2 <= x2 && other.y2 <= y2;
  }
  BBox translated(std::int32_t dx, std::int32_t dy) const { return {x1 + dx, y1 + dy, x2 + dx, y2 + dy}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

std::string to_string(const BBox& box);

// Throws a validation error unless box is well formed (and inside the image
// when dimensions are given).
void validate_box(const BBox& box);
void validate_box(const BBox& box, std::int32_t image_width, std::int32_t image_height);

struct Point {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Four corners, clockwise from top-left.
struct Quad {
  std::array<Point, 4> corners;
};

// Minimal box containing every input. Empty input is a usage error.
BBox envelope(std::span<const BBox> boxes);

// Integer box from fractional corners: floor on the low edge, ceil on the high
// edge, so no ink is lost. Negative coordinates clamp to zero.
BBox round_outward(double x1, double y1, double x2, double y2);

// Axis-aligned envelope of the quad's corners. Zero-area or self-intersecting
// quads are a validation error.
BBox quad_to_bbox(const Quad& quad);

double quad_area(const Quad& quad);

}  // namespace dlava
