#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <string>
#include <string_view>

#include "crop_ensemble/error.hpp"
#include "crop_ensemble/score.hpp"

namespace crop_ensemble {

enum class VoteMode { soft_mean, hard_majority };

inline const char* to_string(VoteMode m) {
  return m == VoteMode::soft_mean ? "soft" : "hard";
}

inline VoteMode parse_vote_mode(std::string_view s) {
  if (s == "soft" || s == "soft_mean") return VoteMode::soft_mean;
  if (s == "hard" || s == "hard_majority") return VoteMode::hard_majority;
  throw InvalidInput("unknown vote mode '" + std::string(s) + "' (expected soft or hard)");
}

struct Decision {
  Gender label = Gender::man;
  GenderScore aggregate;
  std::array<GenderScore, 3> per_crop{};  // input order, kept for audit
  VoteMode mode = VoteMode::soft_mean;
  bool tie = false;       // soft_mean exact tie, resolved to Man
  bool single = false;    // produced by single_crop_decision
};

namespace detail {

// Mean of three values summed in ascending order, so every permutation of the
// inputs yields the same bits.
inline double sorted_mean(std::array<double, 3> v) {
  std::sort(v.begin(), v.end());
  return ((v[0] + v[1]) + v[2]) / 3.0;
}

}  // namespace detail

inline Decision aggregate(std::span<const GenderScore> scores, VoteMode mode = VoteMode::soft_mean) {
  if (scores.size() != 3)
    throw InvalidInput("aggregate expects exactly 3 scores, got " + std::to_string(scores.size()));
  Decision d;
  d.mode = mode;
  for (std::size_t i = 0; i < 3; ++i) d.per_crop[i] = validated(scores[i]);

  if (mode == VoteMode::soft_mean) {
    d.aggregate.p_man = detail::sorted_mean({scores[0].p_man, scores[1].p_man, scores[2].p_man});
    d.aggregate.p_woman =
        detail::sorted_mean({scores[0].p_woman, scores[1].p_woman, scores[2].p_woman});
    d.tie = d.aggregate.p_man == d.aggregate.p_woman;
    d.label = d.aggregate.argmax();
    return d;
  }

  int man_votes = 0;
  for (const GenderScore& s : scores)
    if (s.argmax() == Gender::man) ++man_votes;
  d.aggregate = {man_votes / 3.0, (3 - man_votes) / 3.0};
  d.label = man_votes >= 2 ? Gender::man : Gender::woman;
  return d;
}

// Ablation arm: one crop, label by argmax (ties to Man).
inline Decision single_crop_decision(const GenderScore& score) {
  Decision d;
  d.aggregate = validated(score);
  d.per_crop = {score, score, score};
  d.label = score.argmax();
  d.tie = score.p_man == score.p_woman;
  d.single = true;
  return d;
}

}  // namespace crop_ensemble
