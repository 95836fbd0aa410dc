#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "crop_ensemble/error.hpp"
#include "crop_ensemble/image.hpp"
#include "crop_ensemble/log.hpp"

namespace crop_ensemble {

inline constexpr int kReferenceSize = 816;  // frame size at which the crop offset is defined
inline constexpr int kCropSize = 224;       // classifier input side
inline constexpr int kDefaultOffset = 100;  // nominal two-box offset, reference pixels

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

// A corner pair in pixel coordinates. Corners are inclusive pixel indices.
// x is kept ascending (corner_a.x <= corner_b.x); y is stored as given and all
// box arithmetic is applied corner-wise, so either y orientation works.
struct FaceBox {
  Point a;
  Point b;

  static FaceBox from_corners(int xa, int ya, int xb, int yb) {
    if (xa > xb) return {{xb, yb}, {xa, ya}};
    return {{xa, ya}, {xb, yb}};
  }

  int width() const noexcept { return b.x - a.x; }
  int height() const noexcept { return std::abs(b.y - a.y); }
  int x_min() const noexcept { return std::min(a.x, b.x); }
  int x_max() const noexcept { return std::max(a.x, b.x); }
  int y_min() const noexcept { return std::min(a.y, b.y); }
  int y_max() const noexcept { return std::max(a.y, b.y); }

  bool operator==(const FaceBox&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const FaceBox& box) {
  return os << '(' << box.a.x << ',' << box.a.y << ")&(" << box.b.x << ',' << box.b.y << ')';
}

struct BoxTriple {
  FaceBox left;
  FaceBox right;
  FaceBox middle;
  int delta = 0;  // effective offset actually applied

  bool operator==(const BoxTriple&) const = default;
};

enum class CropPosition { left = 0, middle = 1, right = 2 };

inline const char* to_string(CropPosition p) {
  switch (p) {
    case CropPosition::left: return "left";
    case CropPosition::middle: return "middle";
    case CropPosition::right: return "right";
  }
  return "?";
}

struct CropSet {
  BoxTriple regions;
  std::array<Image, 3> images;  // Left, Middle, Right; each kCropSize square
};

// Frame resampled to the reference resolution together with its boxes.
struct ReferenceFrame {
  Frame frame;
  std::vector<FaceBox> boxes;
  double scale_x = 1.0;
  double scale_y = 1.0;
};

namespace detail {

inline int scale_coord(int v, double s, int limit) {
  return std::clamp(static_cast<int>(std::lround(v * s)), 0, limit - 1);
}

}  // namespace detail

inline FaceBox scale_box(const FaceBox& box, double sx, double sy, int out_w, int out_h) {
  return FaceBox::from_corners(detail::scale_coord(box.a.x, sx, out_w),
                               detail::scale_coord(box.a.y, sy, out_h),
                               detail::scale_coord(box.b.x, sx, out_w),
                               detail::scale_coord(box.b.y, sy, out_h));
}

inline Frame normalize_to_reference(const Frame& frame) {
  validate(frame);
  return resize_bilinear(frame, kReferenceSize, kReferenceSize);
}

// Rescales the frame to kReferenceSize square and maps each box by the same
// per-axis factors (kReferenceSize / native extent).
inline ReferenceFrame normalize_to_reference(const Frame& frame, std::span<const FaceBox> boxes) {
  ReferenceFrame out;
  out.frame = normalize_to_reference(frame);
  out.scale_x = static_cast<double>(kReferenceSize) / frame.width;
  out.scale_y = static_cast<double>(kReferenceSize) / frame.height;
  out.boxes.reserve(boxes.size());
  for (const FaceBox& box : boxes)
    out.boxes.push_back(scale_box(box, out.scale_x, out.scale_y, kReferenceSize, kReferenceSize));
  return out;
}

// Grows the box by half its width on both horizontal sides and by half its
// height toward smaller y. Fractional edges round toward the frame interior,
// then the result is clamped to the frame.
inline FaceBox expand_margin(const FaceBox& box, int frame_width, int frame_height) {
  if (frame_width < 1 || frame_height < 1) throw InvalidInput("zero-dimension frame");
  const double half_w = box.width() / 2.0;
  const double half_h = box.height() / 2.0;
  const int max_x = frame_width - 1;
  const int max_y = frame_height - 1;

  FaceBox out = box;
  out.a.x = std::clamp(static_cast<int>(std::ceil(box.a.x - half_w)), 0, max_x);
  out.b.x = std::clamp(static_cast<int>(std::floor(box.b.x + half_w)), 0, max_x);
  Point& top = box.a.y <= box.b.y ? out.a : out.b;
  top.y = static_cast<int>(std::ceil(top.y - half_h));
  out.a.y = std::clamp(out.a.y, 0, max_y);
  out.b.y = std::clamp(out.b.y, 0, max_y);
  return out;
}

inline FaceBox expand_margin(const FaceBox& box, const Frame& frame) {
  return expand_margin(box, frame.width, frame.height);
}

// Offset actually used for an expanded box of the given extent. The nominal
// offset applies while the middle crop stays non-empty (min extent > 2*nominal);
// smaller boxes fall back to a quarter of the shorter side.
inline int effective_offset(int width, int height, int nominal = kDefaultOffset) {
  const int shorter = std::min(width, height);
  if (shorter > 2 * nominal) return nominal;
  return std::min(nominal, shorter / 4);
}

inline BoxTriple make_box_triple(const FaceBox& expanded, int delta_nominal = kDefaultOffset) {
  if (expanded.width() <= 0 || expanded.height() <= 0) {
    std::ostringstream msg;
    msg << "expanded box " << expanded << " must have positive width and height";
    throw InvalidInput(msg.str());
  }
  if (delta_nominal < 0) throw InvalidInput("offset must be non-negative");
  const int d = effective_offset(expanded.width(), expanded.height(), delta_nominal);
  if (d == 0)
    log().warn("box {}x{} too small for two-box offsets; using the full box for all three crops",
               expanded.width(), expanded.height());

  const Point lo{expanded.a.x + d, expanded.a.y + d};
  const Point hi{expanded.b.x - d, expanded.b.y - d};
  BoxTriple t;
  t.left = {expanded.a, hi};
  t.right = {lo, expanded.b};
  t.middle = {lo, hi};
  t.delta = d;
  return t;
}

// Crops the (min/max normalized, frame-clamped) box and squeezes it to
// kCropSize square, ignoring aspect ratio.
inline Image squeeze_region(const Frame& frame, const FaceBox& box, const std::string& name) {
  validate(frame);
  const int x0 = std::clamp(box.x_min(), 0, frame.width - 1);
  const int x1 = std::clamp(box.x_max(), 0, frame.width - 1);
  const int y0 = std::clamp(box.y_min(), 0, frame.height - 1);
  const int y1 = std::clamp(box.y_max(), 0, frame.height - 1);
  if (x1 <= x0 || y1 <= y0) {
    std::ostringstream msg;
    msg << name << " box " << box << " is empty after clamping to " << frame.width << 'x'
        << frame.height;
    throw DegenerateCrop(name, msg.str());
  }
  return resize_region_bilinear(frame, x0, y0, x1, y1, kCropSize, kCropSize);
}

inline CropSet extract_and_squeeze(const Frame& frame, const BoxTriple& triple) {
  CropSet set;
  set.regions = triple;
  set.images[0] = squeeze_region(frame, triple.left, "left");
  set.images[1] = squeeze_region(frame, triple.middle, "middle");
  set.images[2] = squeeze_region(frame, triple.right, "right");
  return set;
}

}  // namespace crop_ensemble
