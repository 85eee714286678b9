#include "damqa/prompting.hpp"

#include <array>

#include "damqa/error.hpp"

namespace damqa {

void PromptConfig::validate() const {
  if (unanswerable_token.empty()) {
    throw InvalidInputError("unanswerable token must not be empty");
  }
  if (instruction_text.empty()) {
    throw InvalidInputError("prompt instruction text must not be empty");
  }
  if (rule1_enabled && rule1_text.empty()) {
    throw InvalidInputError("rule 1 is enabled but its text is empty");
  }
  if (rule2_enabled && rule2_text.empty()) {
    throw InvalidInputError("rule 2 is enabled but its text is empty");
  }
}

std::string build_vqa_prompt(std::string_view question, const PromptConfig& cfg) {
  if (question.empty()) {
    throw InvalidInputError("question must not be empty");
  }
  cfg.validate();
  std::string prompt = cfg.instruction_text;
  if (cfg.rule1_enabled) {
    prompt += '\n';
    prompt += cfg.rule1_text;
  }
  if (cfg.rule2_enabled) {
    prompt += '\n';
    prompt += cfg.rule2_text;
  }
  prompt += '\n';
  prompt += question;
  return prompt;
}

std::string_view default_judge_template() {
  return R"(You are grading answers to questions about images. Compare the prediction with the ground truth and count how many of the required sub-answers the prediction gets right.

Rules:
- The ground truth may list several acceptable answers separated by "; ". The prediction is correct if it matches any one of them in meaning.
- Ignore differences in letter case, punctuation, articles and number formatting ("1,000" equals "1000", "two" equals "2").
- Numbers must agree in value. Units may be written out or abbreviated.
- If the question asks for several items, each required item is one sub-answer; count how many the prediction gets right. Otherwise there is exactly one sub-answer.
- A prediction of "unanswerable" is correct only if the ground truth also says the question cannot be answered.

Question: {{question}}
Ground truth: {{ground_truth}}
Prediction: {{prediction}}

End your reply with one line holding only a JSON object of the form {"matched": <correct sub-answers>, "total": <required sub-answers>}.)";
}

std::string build_judge_prompt(std::string_view question, std::span<const std::string> ground_truths,
                               std::string_view prediction, std::string_view tmpl) {
  std::string joined;
  for (std::size_t i = 0; i < ground_truths.size(); ++i) {
    if (i > 0) joined += "; ";
    joined += ground_truths[i];
  }

  struct Slot {
    std::string_view placeholder;
    std::string_view value;
    bool seen = false;
  };
  std::array<Slot, 3> slots{{{kQuestionPlaceholder, question},
                             {kGroundTruthPlaceholder, joined},
                             {kPredictionPlaceholder, prediction}}};

  std::string out;
  out.reserve(tmpl.size() + question.size() + joined.size() + prediction.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw TemplateError("unterminated placeholder in judge template");
    }
    const auto placeholder = tmpl.substr(open, close + 2 - open);
    bool matched = false;
    for (auto& slot : slots) {
      if (slot.placeholder == placeholder) {
        out.append(slot.value);
        slot.seen = true;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw TemplateError("unknown placeholder " + std::string(placeholder) + " in judge template");
    }
    pos = close + 2;
  }
  for (const auto& slot : slots) {
    if (!slot.seen) {
      throw TemplateError("judge template is missing " + std::string(slot.placeholder));
    }
  }
  return out;
}

}  // namespace damqa
