#include "dlava/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dlava/error.hpp"

namespace dlava {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kDetection: return "detection";
    case ErrorKind::kRecognition: return "recognition";
    case ErrorKind::kLayout: return "layout";
    case ErrorKind::kGrounding: return "grounding";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kPipeline: return "pipeline";
  }
  return "unknown";
}

std::string to_string(const BBox& box) {
  return "[" + std::to_string(box.x1) + "," + std::to_string(box.y1) + "," + std::to_string(box.x2) + "," +
         std::to_string(box.y2) + "]";
}

void validate_box(const BBox& box) {
  if (!box.valid()) fail(ErrorKind::kValidation, "malformed box " + to_string(box));
}

void validate_box(const BBox& box, std::int32_t image_width, std::int32_t image_height) {
  validate_box(box);
  if (!box.fits(image_width, image_height)) {
    fail(ErrorKind::kValidation, "box " + to_string(box) + " exceeds image " + std::to_string(image_width) + "x" +
                                     std::to_string(image_height));
  }
}

BBox envelope(std::span<const BBox> boxes) {
  if (boxes.empty()) fail(ErrorKind::kUsage, "envelope of an empty box list");
  BBox out = boxes.front();
  for (const auto& b : boxes) {
    validate_box(b);
    out.x1 = std::min(out.x1, b.x1);
    out.y1 = std::min(out.y1, b.y1);
    out.x2 = std::max(out.x2, b.x2);
    out.y2 = std::max(out.y2, b.y2);
  }
  return out;
}

BBox round_outward(double x1, double y1, double x2, double y2) {
  auto lo = [](double v) { return static_cast<std::int32_t>(std::max(0.0, std::floor(v))); };
  auto hi = [](double v) { return static_cast<std::int32_t>(std::max(0.0, std::ceil(v))); };
  return {lo(std::min(x1, x2)), lo(std::min(y1, y2)), hi(std::max(x1, x2)), hi(std::max(y1, y2))};
}

double quad_area(const Quad& quad) {
  double twice = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& a = quad.corners[i];
    const auto& b = quad.corners[(i + 1) % 4];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2;
}

namespace {

double cross(const Point& o, const Point& a, const Point& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool segments_cross(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

BBox quad_to_bbox(const Quad& quad) {
  const auto& c = quad.corners;
  if (quad_area(quad) <= 0) fail(ErrorKind::kValidation, "degenerate quad with zero area");
  if (segments_cross(c[0], c[1], c[2], c[3]) || segments_cross(c[1], c[2], c[3], c[0])) {
    fail(ErrorKind::kValidation, "self-intersecting quad");
  }
  double x1 = std::numeric_limits<double>::max(), y1 = x1;
  double x2 = std::numeric_limits<double>::lowest(), y2 = x2;
  for (const auto& p : c) {
    x1 = std::min(x1, p.x);
    y1 = std::min(y1, p.y);
    x2 = std::max(x2, p.x);
    y2 = std::max(y2, p.y);
  }
  return round_outward(x1, y1, x2, y2);
}

}  // namespace dlava
