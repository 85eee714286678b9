#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "damqa/backend.hpp"

namespace damqa {

/// m matched sub-answers out of t required ones.
struct JudgeVerdict {
  int matched = 0;
  int total = 1;
  std::string raw_text;

  double score() const { return static_cast<double>(matched) / total; }
};

struct JudgeResult {
  JudgeVerdict verdict;
  bool backend_failed = false;
  bool parse_error = false;
  std::string error;
};

/// Finds the last {"matched": m, "total": t} object in a judge reply and
/// checks 0 <= m <= t, t >= 1. Throws ParseError otherwise.
std::pair<int, int> parse_judge_output(std::string_view reply);

/// Builds the judge prompt, asks the text backend, and parses the verdict.
/// An unparseable reply is retried once; if it fails again the verdict is
/// (0, 1) with parse_error set. A backend failure yields (0, 1) with
/// backend_failed set. Never throws for those two cases.
JudgeResult judge_sample(std::string_view sample_id, std::string_view question,
                         std::span<const std::string> ground_truths, std::string_view prediction,
                         TextBackend& backend, std::string_view tmpl,
                         const GenerationParams& params = {});

/// Mean of matched / total. Throws InvalidInputError when empty.
double llm_score(std::span<const JudgeVerdict> verdicts);

}  // namespace damqa
