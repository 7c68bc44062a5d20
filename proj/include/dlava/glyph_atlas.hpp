#pragma once

#include <cstdint>
#include <string_view>

#include "dlava/geometry.hpp"
#include "dlava/image.hpp"

namespace dlava::glyphs {

// Bundled 5x7 monospace bitmap font. Every glyph occupies a 5x7 cell scaled by
// an integer factor; consecutive glyphs are separated by one scaled column.
inline constexpr std::int32_t kCellWidth = 5;
inline constexpr std::int32_t kCellHeight = 7;
inline constexpr std::int32_t kAdvance = 6;

// Characters without a glyph render as '?'; lowercase renders as uppercase.
bool has_glyph(char c);

std::int32_t text_width(std::string_view text, std::int32_t scale);
inline std::int32_t text_height(std::int32_t scale) { return kCellHeight * scale; }

// Draws text with its cell origin at (x, y) and returns the tight ink box,
// or an empty box at (x, y) when nothing was inked.
BBox draw_text(Canvas& canvas, std::string_view text, std::int32_t x, std::int32_t y, std::int32_t scale,
               Rgb color = kBlack);

// Ink box of text drawn at (x, y) without touching a canvas.
BBox ink_box(std::string_view text, std::int32_t x, std::int32_t y, std::int32_t scale);

}  // namespace dlava::glyphs
