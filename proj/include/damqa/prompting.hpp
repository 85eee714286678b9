#pragma once

#include <span>
#include <string>
#include <string_view>

namespace damqa {

/// The VQA prompt is an instruction, two optional rules and the question,
/// one segment per line. Each rule can be switched off independently for
/// ablations; all texts are overridable from the run config.
struct PromptConfig {
  bool rule1_enabled = true;  // answer from the image only
  bool rule2_enabled = true;  // abstain with the token when evidence is missing
  std::string instruction_text =
      "Answer the question using a single word or a short phrase, without any explanation.";
  std::string rule1_text =
      "Base your answer only on what is visible in the image; do not use outside knowledge.";
  std::string rule2_text =
      "If the image alone does not contain enough information to answer, reply with "
      "\"unanswerable\".";
  std::string unanswerable_token = "unanswerable";

  /// Throws InvalidInputError when an enabled segment or the token is empty.
  void validate() const;
};

/// Throws InvalidInputError for an empty question.
std::string build_vqa_prompt(std::string_view question, const PromptConfig& cfg);

inline constexpr std::string_view kQuestionPlaceholder = "{{question}}";
inline constexpr std::string_view kGroundTruthPlaceholder = "{{ground_truth}}";
inline constexpr std::string_view kPredictionPlaceholder = "{{prediction}}";

/// Judge template shipped with the tool. It asks for a trailing one-line
/// {"matched": m, "total": t} verdict, which parse_judge_output understands.
std::string_view default_judge_template();

/// Substitutes the three placeholders in a single left-to-right pass, so
/// placeholder-like text inside the substituted values is left alone.
/// Ground truths are joined with "; ". Throws TemplateError if any of the
/// three placeholders is missing or an unknown {{name}} appears.
std::string build_judge_prompt(std::string_view question, std::span<const std::string> ground_truths,
                               std::string_view prediction, std::string_view tmpl);

}  // namespace damqa
