#include "dlava/image.hpp"

#include <algorithm>

#include "dlava/error.hpp"

namespace dlava {

namespace {

const std::vector<std::uint8_t>& empty_bytes() {
  static const std::vector<std::uint8_t> kEmpty;
  return kEmpty;
}

}  // namespace

Raster::Raster(std::int32_t width, std::int32_t height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) fail(ErrorKind::kValidation, "negative raster dimensions");
  if (pixels.size() != static_cast<std::size_t>(width) * height * 3) {
    fail(ErrorKind::kValidation, "raster buffer length does not match " + std::to_string(width) + "x" +
                                     std::to_string(height) + "x3");
  }
  pixels_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(pixels));
}

Raster Raster::filled(std::int32_t width, std::int32_t height, Rgb color) {
  return Canvas(width, height, color).freeze();
}

const std::vector<std::uint8_t>& Raster::bytes() const { return pixels_ ? *pixels_ : empty_bytes(); }

bool operator==(const Raster& a, const Raster& b) {
  return a.width_ == b.width_ && a.height_ == b.height_ && a.bytes() == b.bytes();
}

Canvas::Canvas(std::int32_t width, std::int32_t height, Rgb background)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3) {
  if (width < 0 || height < 0) fail(ErrorKind::kValidation, "negative canvas dimensions");
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = background.r;
    pixels_[i + 1] = background.g;
    pixels_[i + 2] = background.b;
  }
}

Canvas::Canvas(const Raster& source)
    : width_(source.width()), height_(source.height()), pixels_(source.bytes()) {}

void Canvas::set(std::int32_t x, std::int32_t y, Rgb color) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  auto* p = pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  p[0] = color.r;
  p[1] = color.g;
  p[2] = color.b;
}

Rgb Canvas::get(std::int32_t x, std::int32_t y) const {
  const auto* p = pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {p[0], p[1], p[2]};
}

void Canvas::fill_rect(const BBox& box, Rgb color) {
  for (std::int32_t y = std::max(0, box.y1); y < std::min(height_, box.y2); ++y) {
    for (std::int32_t x = std::max(0, box.x1); x < std::min(width_, box.x2); ++x) set(x, y, color);
  }
}

void Canvas::paste(const Raster& src, std::int32_t x, std::int32_t y) {
  const auto& bytes = src.bytes();
  for (std::int32_t row = 0; row < src.height(); ++row) {
    const std::int32_t ty = y + row;
    if (ty < 0 || ty >= height_) continue;
    const std::int32_t c0 = std::max(0, -x);
    const std::int32_t c1 = std::min(src.width(), width_ - x);
    if (c0 >= c1) continue;
    const auto* from = bytes.data() + (static_cast<std::size_t>(row) * src.width() + c0) * 3;
    auto* to = pixels_.data() + (static_cast<std::size_t>(ty) * width_ + x + c0) * 3;
    std::copy(from, from + static_cast<std::size_t>(c1 - c0) * 3, to);
  }
}

Raster Canvas::freeze() && { return Raster(width_, height_, std::move(pixels_)); }

void validate_image(const DocumentImage& image) {
  if (image.width() <= 0 || image.height() <= 0) {
    fail(ErrorKind::kValidation, "image '" + image.doc_id + "' has non-positive dimensions");
  }
}

Raster crop(const Raster& raster, const BBox& box) {
  validate_box(box, raster.width(), raster.height());
  std::vector<std::uint8_t> out(static_cast<std::size_t>(box.width()) * box.height() * 3);
  const auto& src = raster.bytes();
  const std::size_t row_bytes = static_cast<std::size_t>(box.width()) * 3;
  for (std::int32_t y = 0; y < box.height(); ++y) {
    const auto* from = src.data() + (static_cast<std::size_t>(box.y1 + y) * raster.width() + box.x1) * 3;
    std::copy(from, from + row_bytes, out.data() + y * row_bytes);
  }
  return Raster(box.width(), box.height(), std::move(out));
}

Raster resize_nearest(const Raster& raster, std::int32_t width, std::int32_t height) {
  if (width <= 0 || height <= 0) fail(ErrorKind::kUsage, "resize to non-positive dimensions");
  if (width == raster.width() && height == raster.height()) return raster;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height * 3);
  const auto& src = raster.bytes();
  for (std::int32_t y = 0; y < height; ++y) {
    const auto sy = static_cast<std::int32_t>(static_cast<std::int64_t>(y) * raster.height() / height);
    for (std::int32_t x = 0; x < width; ++x) {
      const auto sx = static_cast<std::int32_t>(static_cast<std::int64_t>(x) * raster.width() / width);
      const auto* p = src.data() + (static_cast<std::size_t>(sy) * raster.width() + sx) * 3;
      auto* q = out.data() + (static_cast<std::size_t>(y) * width + x) * 3;
      q[0] = p[0];
      q[1] = p[1];
      q[2] = p[2];
    }
  }
  return Raster(width, height, std::move(out));
}

std::vector<std::uint8_t> to_grayscale(const Raster& raster) {
  const auto& src = raster.bytes();
  std::vector<std::uint8_t> out(src.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned r = src[i * 3], g = src[i * 3 + 1], b = src[i * 3 + 2];
    out[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return out;
}

bool is_blank(const Raster& raster, std::uint8_t ink_threshold) {
  const auto gray = to_grayscale(raster);
  return std::all_of(gray.begin(), gray.end(), [&](std::uint8_t v) { return v >= ink_threshold; });
}

}  // namespace dlava
