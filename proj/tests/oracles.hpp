#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's own code paths.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crop_ensemble/boxcrop.hpp"
#include "crop_ensemble/datakit.hpp"
#include "crop_ensemble/score.hpp"

namespace oracle {

struct Rect {
  int x0, y0, x1, y1;  // inclusive min/max corners
  bool operator==(const Rect&) const = default;
};

inline Rect to_rect(const crop_ensemble::FaceBox& b) {
  return {std::min(b.a.x, b.b.x), std::min(b.a.y, b.b.y), std::max(b.a.x, b.b.x), std::max(b.a.y, b.b.y)};
}

// Axis-aligned rectangle intersection as interval overlap on each axis.
inline std::optional<Rect> intersect(const Rect& p, const Rect& q) {
  Rect r{std::max(p.x0, q.x0), std::max(p.y0, q.y0), std::min(p.x1, q.x1), std::min(p.y1, q.y1)};
  if (r.x0 > r.x1 || r.y0 > r.y1) return std::nullopt;
  return r;
}

// Label with the most votes among three crops.
inline crop_ensemble::Gender majority(const std::array<crop_ensemble::Gender, 3>& votes) {
  int men = 0;
  for (auto v : votes) men += v == crop_ensemble::Gender::man ? 1 : 0;
  int women = 3 - men;
  return men > women ? crop_ensemble::Gender::man : crop_ensemble::Gender::woman;
}

// Every subject appears in exactly one split.
inline bool subject_disjoint(const std::vector<crop_ensemble::ImageRecord>& records) {
  std::map<std::string, std::set<int>> seen;
  for (const auto& r : records) {
    if (!r.split) return false;
    seen[std::string(crop_ensemble::to_string(r.source)) + "/" + r.subject_id].insert(static_cast<int>(*r.split));
  }
  for (const auto& [id, splits] : seen)
    if (splits.size() != 1) return false;
  return true;
}

inline std::array<std::size_t, 3> split_counts(const std::vector<crop_ensemble::ImageRecord>& records,
                                               crop_ensemble::Source source) {
  std::array<std::size_t, 3> c{};
  for (const auto& r : records)
    if (r.source == source && r.split) ++c[static_cast<std::size_t>(*r.split)];
  return c;
}

}  // namespace oracle
