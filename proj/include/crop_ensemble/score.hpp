#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "crop_ensemble/error.hpp"

namespace crop_ensemble {

// Canonical class order: Man first. Ties resolve to the first label.
enum class Gender { man = 0, woman = 1 };

inline constexpr std::array<Gender, 2> kCanonicalOrder{Gender::man, Gender::woman};

inline const char* to_string(Gender g) { return g == Gender::man ? "Man" : "Woman"; }

inline std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "Man" || s == "man" || s == "M" || s == "m" || s == "male") return Gender::man;
  if (s == "Woman" || s == "woman" || s == "W" || s == "w" || s == "F" || s == "f" ||
      s == "female")
    return Gender::woman;
  return std::nullopt;
}

inline constexpr double kScoreSumTolerance = 1e-6;

struct GenderScore {
  double p_man = 0.5;
  double p_woman = 0.5;

  double operator[](Gender g) const noexcept { return g == Gender::man ? p_man : p_woman; }
  Gender argmax() const noexcept { return p_woman > p_man ? Gender::woman : Gender::man; }
  bool is_valid() const noexcept {
    return p_man >= 0.0 && p_man <= 1.0 && p_woman >= 0.0 && p_woman <= 1.0 &&
           std::abs(p_man + p_woman - 1.0) <= kScoreSumTolerance;
  }
  bool operator==(const GenderScore&) const = default;
};

inline GenderScore validated(GenderScore s) {
  if (!s.is_valid())
    throw InvalidInput("invalid gender score (" + std::to_string(s.p_man) + ", " +
                       std::to_string(s.p_woman) + ")");
  return s;
}

}  // namespace crop_ensemble
