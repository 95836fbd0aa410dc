#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "crop_ensemble/error.hpp"

namespace crop_ensemble {

// 8-bit, 3-channel RGB raster. Row-major, top-left origin, interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        pixels(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * 3, fill) {
    if (w < 1 || h < 1) throw InvalidInput("image dimensions must be positive");
  }

  bool empty() const noexcept { return width < 1 || height < 1; }
  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }
  std::uint8_t* at(int x, int y) noexcept { return pixels.data() + index(x, y); }
  const std::uint8_t* at(int x, int y) const noexcept { return pixels.data() + index(x, y); }

  bool operator==(const Image&) const = default;
};

using Frame = Image;

inline void validate(const Image& img) {
  if (img.width < 1 || img.height < 1)
    throw InvalidInput("zero-dimension image (" + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + ")");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw InvalidInput("pixel buffer does not match width x height x 3");
}

// Bilinear resample of the inclusive sub-rectangle [x0,x1]x[y0,y1] of `src` to
// out_w x out_h. Half-pixel centres; samples never read outside the sub-rectangle,
// so an equal-size resample is the identity and a constant region stays constant.
// Interpolation weights are 11-bit fixed point.
inline Image resize_region_bilinear(const Image& src, int x0, int y0, int x1, int y1,
                                    int out_w, int out_h) {
  validate(src);
  if (x0 < 0 || y0 < 0 || x1 >= src.width || y1 >= src.height || x1 < x0 || y1 < y0)
    throw InvalidInput("resample region outside source image");
  Image dst(out_w, out_h);
  const int in_w = x1 - x0 + 1;
  const int in_h = y1 - y0 + 1;

  constexpr int kBits = 11;
  constexpr std::int32_t kOne = 1 << kBits;
  constexpr std::int32_t kHalf = 1 << (2 * kBits - 1);

  struct Tap {
    int lo, hi;       // source offsets
    std::int32_t w;   // weight of hi, in [0, kOne]
  };
  auto taps = [](int out, int in) {
    const double scale = static_cast<double>(in) / out;
    std::vector<Tap> t(static_cast<std::size_t>(out));
    for (int i = 0; i < out; ++i) {
      double s = (i + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(s));
      const int hi = std::min(lo + 1, in - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, static_cast<std::int32_t>(std::lround((s - lo) * kOne))};
    }
    return t;
  };
  auto tx = taps(out_w, in_w);
  for (auto& t : tx) {
    t.lo *= 3;
    t.hi *= 3;
  }
  const auto ty = taps(out_h, in_h);

  // Horizontally interpolated source rows, cached by source row offset.
  const std::size_t row_len = static_cast<std::size_t>(out_w) * 3;
  std::array<std::vector<std::int32_t>, 2> rows{std::vector<std::int32_t>(row_len),
                                                std::vector<std::int32_t>(row_len)};
  std::array<int, 2> cached{-1, -1};
  auto horizontal = [&](int src_row) -> const std::vector<std::int32_t>& {
    for (std::size_t k = 0; k < 2; ++k)
      if (cached[k] == src_row) return rows[k];
    const std::size_t slot = cached[0] < cached[1] ? 0 : 1;  // rows only move forward
    cached[slot] = src_row;
    const std::uint8_t* in = src.at(x0, y0 + src_row);
    std::int32_t* out = rows[slot].data();
    for (const Tap& vx : tx) {
      const std::int32_t w1 = vx.w, w0 = kOne - vx.w;
      *out++ = in[vx.lo] * w0 + in[vx.hi] * w1;
      *out++ = in[vx.lo + 1] * w0 + in[vx.hi + 1] * w1;
      *out++ = in[vx.lo + 2] * w0 + in[vx.hi + 2] * w1;
    }
    return rows[slot];
  };

  for (int y = 0; y < out_h; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    const std::int32_t* top = horizontal(vy.lo).data();
    const std::int32_t* bot = horizontal(vy.hi).data();
    const std::int32_t wy1 = vy.w, wy0 = kOne - vy.w;
    std::uint8_t* out = dst.at(0, y);
    for (std::size_t k = 0; k < row_len; ++k)
      out[k] = static_cast<std::uint8_t>((top[k] * wy0 + bot[k] * wy1 + kHalf) >> (2 * kBits));
  }
  return dst;
}

inline Image resize_bilinear(const Image& src, int out_w, int out_h) {
  validate(src);
  if (src.width == out_w && src.height == out_h) return src;
  return resize_region_bilinear(src, 0, 0, src.width - 1, src.height - 1, out_w, out_h);
}

inline double mean_intensity(const Image& img) {
  validate(img);
  std::uint64_t sum = 0;
  for (std::uint8_t v : img.pixels) sum += v;
  return static_cast<double>(sum) / static_cast<double>(img.pixels.size());
}

// FNV-1a 64 over the dimensions and pixel bytes, as 16 lowercase hex digits.
inline std::string digest(const Image& img) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (int dim : {img.width, img.height})
    for (int s = 0; s < 32; s += 8) mix(static_cast<std::uint8_t>(dim >> s));
  for (std::uint8_t b : img.pixels) mix(b);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace crop_ensemble
