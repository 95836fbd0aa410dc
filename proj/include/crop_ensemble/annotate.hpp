#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string_view>

#include "crop_ensemble/boxcrop.hpp"
#include "crop_ensemble/image.hpp"
#include "crop_ensemble/score.hpp"

namespace crop_ensemble {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kManColor{255, 0, 0};
inline constexpr Rgb kWomanColor{0, 0, 255};
inline constexpr Rgb kSkippedColor{255, 255, 0};
inline constexpr int kOutlineWidth = 3;

inline constexpr Rgb label_color(Gender g) { return g == Gender::man ? kManColor : kWomanColor; }

inline void put_pixel(Image& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::uint8_t* p = img.at(x, y);
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

inline void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width - 1);
  y1 = std::min(y1, img.height - 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) put_pixel(img, x, y, c);
}

// Outline drawn inward from the box edges so it never leaves the box.
inline void draw_outline(Image& img, const FaceBox& box, Rgb c, int thickness = kOutlineWidth) {
  const int x0 = box.x_min(), x1 = box.x_max(), y0 = box.y_min(), y1 = box.y_max();
  const int t = thickness - 1;
  fill_rect(img, x0, y0, x1, std::min(y0 + t, y1), c);
  fill_rect(img, x0, std::max(y1 - t, y0), x1, y1, c);
  fill_rect(img, x0, y0, std::min(x0 + t, x1), y1, c);
  fill_rect(img, std::max(x1 - t, x0), y0, x1, y1, c);
}

namespace detail {

// 5x7 glyphs, one byte per row, low five bits, MSB of those is the left column.
struct Glyph {
  char ch;
  std::array<std::uint8_t, 7> rows;
};

inline constexpr std::array<Glyph, 9> kGlyphs{{
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
    {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
}};

inline const Glyph& glyph(char ch) {
  for (const Glyph& g : kGlyphs)
    if (g.ch == ch) return g;
  return kGlyphs[7];
}

}  // namespace detail

// Renders text with the built-in glyphs; (x, y) is the top-left corner.
inline void draw_text(Image& img, int x, int y, std::string_view text, Rgb c, int scale = 2) {
  for (char ch : text) {
    const auto& g = detail::glyph(ch);
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col)
        if (g.rows[static_cast<std::size_t>(row)] & (0x10 >> col))
          fill_rect(img, x + col * scale, y + row * scale, x + (col + 1) * scale - 1,
                    y + (row + 1) * scale - 1, c);
    x += 6 * scale;
  }
}

inline void annotate_face(Image& img, const FaceBox& box, Gender label) {
  const Rgb c = label_color(label);
  draw_outline(img, box, c);
  const int text_h = 7 * 2;
  const int ty = box.y_min() - text_h - 2 >= 0 ? box.y_min() - text_h - 2 : box.y_max() + 3;
  draw_text(img, box.x_min(), ty, to_string(label), c);
}

inline void annotate_skipped(Image& img, const FaceBox& box) {
  draw_outline(img, box, kSkippedColor, 1);
}

}  // namespace crop_ensemble
