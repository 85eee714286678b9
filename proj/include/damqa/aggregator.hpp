#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>

#include "damqa/backend.hpp"
#include "damqa/views.hpp"

namespace damqa {

struct VoteConfig {
  /// Scales the area weight of abstaining patches. 0 drops them entirely.
  double unanswerable_weight_multiplier = 0.0;
  double full_image_weight = 1.0;
  /// When false an abstaining full view contributes nothing; when true it
  /// votes for its answer with full_image_weight like any other answer.
  bool strict_full_unanswerable = false;
  /// Compare answers ignoring ASCII case. Off by default: votes only pool
  /// byte-identical answers.
  bool case_insensitive = false;

  void validate() const;
};

struct VoteTally {
  /// Keyed by the vote key (the answer, or its case fold when voting is
  /// case-insensitive).
  std::map<std::string, double> scores;
  /// Answer text reported for each key.
  std::map<std::string, std::string> surface;
  std::string full_answer;
  std::string full_key;
  double total_patch_weight = 0.0;
};

struct WeightedPrediction {
  Prediction prediction;
  double weight = 0.0;
};

/// area(rect) / (width * height), scaled by the abstention multiplier for
/// abstaining patches. Throws InvalidInputError for an empty image or a
/// rect outside it.
double patch_weight(const PatchRect& rect, int width, int height, bool is_unanswerable,
                    const VoteConfig& cfg);

/// Sums votes per answer. Per-answer contributions are added in sorted order
/// so the tally does not depend on patch order.
VoteTally accumulate(const Prediction& full, std::span<const WeightedPrediction> patches,
                     const VoteConfig& cfg);

/// Relative tolerance under which two vote totals count as tied.
inline constexpr double kVoteTieTolerance = 1e-9;

/// Falls back to the full-view answer when the patch weights sum to zero.
/// Otherwise returns the highest-scoring answer; ties go to the full-view
/// answer if it is among them, else to the lexicographically smallest.
std::string select_answer(const VoteTally& tally);

struct VoteOutcome {
  std::string answer;
  bool fallback_used = false;  // patches present but all weights zero
  VoteTally tally;
};

VoteOutcome vote(const Prediction& full, std::span<const WeightedPrediction> patches,
                 const VoteConfig& cfg);

}  // namespace damqa
