#include "damqa/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "damqa/error.hpp"

namespace damqa {

void VoteConfig::validate() const {
  if (!(unanswerable_weight_multiplier >= 0.0) || !std::isfinite(unanswerable_weight_multiplier)) {
    throw InvalidInputError("unanswerable weight multiplier must be finite and non-negative");
  }
  if (!(full_image_weight >= 0.0) || !std::isfinite(full_image_weight)) {
    throw InvalidInputError("full image weight must be finite and non-negative");
  }
}

double patch_weight(const PatchRect& rect, int width, int height, bool is_unanswerable,
                    const VoteConfig& cfg) {
  if (width < 1 || height < 1) {
    throw InvalidInputError("image area must be positive");
  }
  if (rect.x < 0 || rect.y < 0 || rect.x + rect.width > width || rect.y + rect.height > height) {
    throw InvalidInputError("patch lies outside the image");
  }
  const double ratio =
      static_cast<double>(rect.area()) / (static_cast<double>(width) * static_cast<double>(height));
  return is_unanswerable ? cfg.unanswerable_weight_multiplier * ratio : ratio;
}

namespace {

std::string vote_key(const std::string& answer, bool case_insensitive) {
  if (!case_insensitive) return answer;
  std::string key = answer;
  for (auto& c : key) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return key;
}

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

}  // namespace

VoteTally accumulate(const Prediction& full, std::span<const WeightedPrediction> patches,
                     const VoteConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::vector<double>> terms;
  std::map<std::string, std::vector<std::string>> spellings;

  const bool full_votes = !full.is_unanswerable || cfg.strict_full_unanswerable;
  const auto full_key = vote_key(full.answer, cfg.case_insensitive);
  terms[full_key].push_back(full_votes ? cfg.full_image_weight : 0.0);
  spellings[full_key].push_back(full.answer);

  std::vector<double> all_weights;
  all_weights.reserve(patches.size());
  for (const auto& p : patches) {
    if (!(p.weight >= 0.0)) {
      throw InvalidInputError("patch weight must be non-negative");
    }
    const auto key = vote_key(p.prediction.answer, cfg.case_insensitive);
    terms[key].push_back(p.weight);
    spellings[key].push_back(p.prediction.answer);
    all_weights.push_back(p.weight);
  }

  VoteTally tally;
  tally.full_answer = full.answer;
  tally.full_key = full_key;
  tally.total_patch_weight = sorted_sum(all_weights);
  for (auto& [key, values] : terms) {
    tally.scores[key] = sorted_sum(values);
    auto& names = spellings[key];
    // The full view's spelling wins; otherwise pick one independent of order.
    if (key == full_key) {
      tally.surface[key] = full.answer;
    } else {
      tally.surface[key] = *std::min_element(names.begin(), names.end());
    }
  }
  return tally;
}

std::string select_answer(const VoteTally& tally) {
  if (tally.total_patch_weight == 0.0) {
    return tally.full_answer;
  }
  if (tally.scores.empty()) {
    throw std::logic_error("select_answer called with an empty tally");
  }
  double best = 0.0;
  for (const auto& [key, score] : tally.scores) best = std::max(best, score);
  const double floor = best - kVoteTieTolerance * std::max(1.0, best);

  const std::string* winner = nullptr;
  for (const auto& [key, score] : tally.scores) {  // std::map iterates in ascending key order
    if (score < floor) continue;
    if (key == tally.full_key) {
      winner = &key;
      break;
    }
    if (winner == nullptr) winner = &key;
  }
  if (winner == nullptr) {
    throw std::logic_error("select_answer found no candidate");
  }
  const auto it = tally.surface.find(*winner);
  return it != tally.surface.end() ? it->second : *winner;
}

VoteOutcome vote(const Prediction& full, std::span<const WeightedPrediction> patches,
                 const VoteConfig& cfg) {
  VoteOutcome out;
  out.tally = accumulate(full, patches, cfg);
  out.answer = select_answer(out.tally);
  out.fallback_used = !patches.empty() && out.tally.total_patch_weight == 0.0;
  return out;
}

}  // namespace damqa
