#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace damqa {

enum class QuestionType { MCQ, FactChecking, Hypothetical, Unanswerable, Other };
enum class AnswerKind { Numeric, Year, Text, List };

/// Lenient parse of benchmark tags ("Multi Choice", "fact-checking", ...).
/// Unrecognised question types map to Other; unrecognised kinds to nullopt.
QuestionType parse_question_type(std::string_view tag);
std::optional<AnswerKind> parse_answer_kind(std::string_view tag);

/// Acceptable answers for one question. For AnswerKind::List the answers
/// are the ordered items of a single list answer.
struct GroundTruth {
  std::vector<std::string> answers;
  std::optional<QuestionType> question_type;
  std::optional<AnswerKind> answer_kind;
};

enum class Metric { ANLS, RAcc, RAccPro, VQAS, LLM };

std::string_view metric_name(Metric m);
/// Accepts the CLI spellings anls, racc, racc-pro, vqas, llm.
std::optional<Metric> parse_metric(std::string_view name);

struct MetricScore {
  double value = 0.0;
  Metric metric = Metric::ANLS;
};

/// Unit-cost edit distance over Unicode code points.
std::size_t levenshtein(std::string_view a, std::string_view b);

inline constexpr double kAnlsThreshold = 0.5;

struct AnlsOptions {
  bool lowercase = true;  // ASCII case fold before comparing
  bool trim = true;
};

/// 1 - NL(pred, gt) when NL < tau, else 0. NL is the edit distance divided
/// by the longer length in code points, 0 when both strings are empty.
double anls_similarity(std::string_view pred, std::string_view gt, double tau = kAnlsThreshold,
                       const AnlsOptions& opts = {});

/// Best similarity over all ground truths. Throws InvalidInputError if empty.
double anls_score(std::string_view pred, std::span<const std::string> gts,
                  double tau = kAnlsThreshold, const AnlsOptions& opts = {});

/// Numeric reading of an answer. Accepts an optional sign, one leading
/// currency symbol ($ € £ ¥ ₹), "," thousands separators and one trailing
/// "%", around a plain decimal (digits with at most one '.'). No exponents.
std::optional<double> parse_numeric(std::string_view s);

/// Exactly four ASCII digits with value in [1000, 2999].
bool is_year(std::string_view s);

inline constexpr double kRelaxedTolerance = 0.05;

/// Numeric answers within 5% relative error of the ground truth (exact when
/// the ground truth is 0); otherwise case-insensitive exact match.
int relaxed_accuracy_chartqa(std::string_view pred, std::string_view gt);

enum class RAccProBranch { ExactChoice, ExactYear, NumericTolerance, Anls };

/// Which scoring rule applies to one ground-truth item. Priority: the
/// question type (MCQ / fact checking), then the year rule, then the
/// numeric rule, else ANLS. An explicit answer kind overrides detection.
RAccProBranch racc_pro_branch(std::optional<QuestionType> question_type,
                              std::optional<AnswerKind> answer_kind, std::string_view gt_item);

/// Splits a list answer into trimmed items. Surrounding brackets and item
/// quotes are removed. Items split on newlines if present, else ';', else
/// ',' (except a comma between two digits).
std::vector<std::string> split_list_answer(std::string_view s);

/// ChartQAPro-style relaxed accuracy. List answers score the mean of
/// index-aligned item scores over the longer of the two lists.
double relaxed_accuracy_pro(std::string_view pred, const GroundTruth& gt,
                            double tau = kAnlsThreshold);

/// Answer normalisation for the VQA score, applied in this order:
///  1. ASCII lowercase.
///  2. Punctuation ; / [ ] " { } ( ) = + \ _ - > < @ ` , ? ! becomes a space,
///     except a ',' between digits is deleted and a '/' between digits is
///     kept. A '.' is kept only when a digit follows it.
///  3. Tokens split on whitespace; number words zero..ten become digits,
///     articles a/an/the are dropped, apostrophe-less contractions
///     ("dont") are restored ("don't").
///  4. Tokens joined with single spaces.
std::string vqa_normalize(std::string_view s);

/// min(#refs equal to pred after vqa_normalize / 3, 1).
double vqa_score(std::string_view pred, std::span<const std::string> refs);

/// Arithmetic mean. Throws InvalidInputError when empty.
double aggregate(std::span<const MetricScore> scores);
double aggregate(std::span<const double> values);

}  // namespace damqa
