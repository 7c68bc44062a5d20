#include "dlava/glyph_atlas.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace dlava::glyphs {

namespace {

struct Glyph {
  char code;
  // One byte per row, top to bottom; bit 4 is the leftmost column.
  std::array<std::uint8_t, kCellHeight> rows;
};

constexpr Glyph kAtlas[] = {
    {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
    {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
    {'D', {0x1e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1e}},
    {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
    {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
    {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
    {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
    {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
    {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
    {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
    {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}},
    {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {';', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x04, 0x08}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
    {'&', {0x0c, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0d}},
    {'$', {0x04, 0x0f, 0x14, 0x0e, 0x05, 0x1e, 0x04}},
    {'#', {0x0a, 0x0a, 0x1f, 0x0a, 0x1f, 0x0a, 0x0a}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'\'', {0x04, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00}},
    {'"', {0x0a, 0x0a, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'!', {0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04}},
    {'?', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04}},
    {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
    {'*', {0x00, 0x04, 0x15, 0x0e, 0x15, 0x04, 0x00}},
    {'@', {0x0e, 0x11, 0x17, 0x15, 0x17, 0x10, 0x0e}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
};

const Glyph* find_glyph(char c) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kAtlas) {
    if (g.code == upper) return &g;
  }
  return nullptr;
}

const Glyph& glyph_or_fallback(char c) {
  if (const auto* g = find_glyph(c)) return *g;
  return *find_glyph('?');
}

template <typename Plot>
void for_each_ink(std::string_view text, std::int32_t x, std::int32_t y, std::int32_t scale, Plot&& plot) {
  std::int32_t pen = x;
  for (char c : text) {
    if (c != ' ') {
      const auto& g = glyph_or_fallback(c);
      for (std::int32_t row = 0; row < kCellHeight; ++row) {
        for (std::int32_t col = 0; col < kCellWidth; ++col) {
          if ((g.rows[row] >> (kCellWidth - 1 - col)) & 1) {
            plot(BBox{pen + col * scale, y + row * scale, pen + (col + 1) * scale, y + (row + 1) * scale});
          }
        }
      }
    }
    pen += kAdvance * scale;
  }
}

}  // namespace

bool has_glyph(char c) { return c == ' ' || find_glyph(c) != nullptr; }

std::int32_t text_width(std::string_view text, std::int32_t scale) {
  if (text.empty()) return 0;
  return static_cast<std::int32_t>(text.size()) * kAdvance * scale - scale;
}

BBox ink_box(std::string_view text, std::int32_t x, std::int32_t y, std::int32_t scale) {
  bool any = false;
  BBox box{x, y, x, y};
  for_each_ink(text, x, y, scale, [&](const BBox& cell) {
    if (!any) {
      box = cell;
      any = true;
      return;
    }
    box.x1 = std::min(box.x1, cell.x1);
    box.y1 = std::min(box.y1, cell.y1);
    box.x2 = std::max(box.x2, cell.x2);
    box.y2 = std::max(box.y2, cell.y2);
  });
  return box;
}

BBox draw_text(Canvas& canvas, std::string_view text, std::int32_t x, std::int32_t y, std::int32_t scale,
               Rgb color) {
  for_each_ink(text, x, y, scale, [&](const BBox& cell) { canvas.fill_rect(cell, color); });
  return ink_box(text, x, y, scale);
}

}  // namespace dlava::glyphs
