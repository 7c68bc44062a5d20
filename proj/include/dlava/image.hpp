#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dlava/geometry.hpp"

namespace dlava {

struct Rgb {
  std::uint8_t r = 255;
  std::uint8_t g = 255;
  std::uint8_t b = 255;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};

// 8-bit interleaved RGB buffer. Copies share the underlying bytes; the bytes
// are never mutated once a Raster has been constructed.
class Raster {
 public:
  Raster() = default;
  Raster(std::int32_t width, std::int32_t height, std::vector<std::uint8_t> pixels);

  static Raster filled(std::int32_t width, std::int32_t height, Rgb color);

  std::int32_t width() const { return width_; }
  std::int32_t height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  const std::vector<std::uint8_t>& bytes() const;

  Rgb at(std::int32_t x, std::int32_t y) const {
    const auto* p = bytes().data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
    return {p[0], p[1], p[2]};
  }

  friend bool operator==(const Raster& a, const Raster& b);

 private:
  std::int32_t width_ = 0;
  std::int32_t height_ = 0;
  std::shared_ptr<const std::vector<std::uint8_t>> pixels_;
};

// Mutable scratch canvas used while drawing; freeze() hands the bytes to an
// immutable Raster.
class Canvas {
 public:
  Canvas(std::int32_t width, std::int32_t height, Rgb background = kWhite);
  explicit Canvas(const Raster& source);

  std::int32_t width() const { return width_; }
  std::int32_t height() const { return height_; }

  void set(std::int32_t x, std::int32_t y, Rgb color);
  Rgb get(std::int32_t x, std::int32_t y) const;
  void fill_rect(const BBox& box, Rgb color);
  // Copies src with its top-left corner at (x, y); pixels falling outside the
  // canvas are dropped.
  void paste(const Raster& src, std::int32_t x, std::int32_t y);

  Raster freeze() &&;

 private:
  std::int32_t width_;
  std::int32_t height_;
  std::vector<std::uint8_t> pixels_;
};

struct DocumentImage {
  std::string doc_id;
  Raster raster;

  std::int32_t width() const { return raster.width(); }
  std::int32_t height() const { return raster.height(); }
};

// Throws a validation error unless the image has positive dimensions.
void validate_image(const DocumentImage& image);

// Sub-rectangle of the raster. Out-of-bounds boxes are a validation error;
// the caller decides whether to clamp.
Raster crop(const Raster& raster, const BBox& box);
inline Raster crop(const DocumentImage& image, const BBox& box) { return crop(image.raster, box); }

// Nearest-neighbour resampling to the requested size.
Raster resize_nearest(const Raster& raster, std::int32_t width, std::int32_t height);

// Luma (BT.601 integer weights) per pixel, row-major.
std::vector<std::uint8_t> to_grayscale(const Raster& raster);

// True when no pixel's luma falls below the ink threshold.
bool is_blank(const Raster& raster, std::uint8_t ink_threshold = 128);

}  // namespace dlava
