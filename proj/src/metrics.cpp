#include "damqa/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

#include "damqa/error.hpp"
#include "damqa/text.hpp"

namespace damqa {

namespace {

// Lowercase with spaces, hyphens and underscores removed.
std::string squash(std::string_view tag) {
  std::string out;
  for (char c : text::trim(tag)) {
    if (c == ' ' || c == '-' || c == '_') continue;
    out += text::to_lower(c);
  }
  return out;
}

}  // namespace

QuestionType parse_question_type(std::string_view tag) {
  const auto t = squash(tag);
  if (t == "mcq" || t == "multichoice" || t == "multiplechoice") return QuestionType::MCQ;
  if (t == "factchecking" || t == "factcheck") return QuestionType::FactChecking;
  if (t == "hypothetical") return QuestionType::Hypothetical;
  if (t == "unanswerable") return QuestionType::Unanswerable;
  return QuestionType::Other;
}

std::optional<AnswerKind> parse_answer_kind(std::string_view tag) {
  const auto t = squash(tag);
  if (t == "numeric" || t == "number") return AnswerKind::Numeric;
  if (t == "year") return AnswerKind::Year;
  if (t == "text" || t == "string") return AnswerKind::Text;
  if (t == "list") return AnswerKind::List;
  return std::nullopt;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::ANLS: return "anls";
    case Metric::RAcc: return "racc";
    case Metric::RAccPro: return "racc-pro";
    case Metric::VQAS: return "vqas";
    case Metric::LLM: return "llm";
  }
  return "unknown";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (auto m : {Metric::ANLS, Metric::RAcc, Metric::RAccPro, Metric::VQAS, Metric::LLM}) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto s = text::utf8_decode(a);
  const auto t = text::utf8_decode(b);
  if (s.empty()) return t.size();
  if (t.empty()) return s.size();

  std::vector<std::size_t> prev(t.size() + 1);
  std::vector<std::size_t> cur(t.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= s.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      cur[j] = std::min({prev[j] + 1,                              // deletion
                         cur[j - 1] + 1,                           // insertion
                         prev[j - 1] + (s[i - 1] != t[j - 1])});   // substitution
    }
    std::swap(prev, cur);
  }
  return prev.back();
}

double anls_similarity(std::string_view pred, std::string_view gt, double tau,
                       const AnlsOptions& opts) {
  std::string p(opts.trim ? text::trim(pred) : pred);
  std::string g(opts.trim ? text::trim(gt) : gt);
  if (opts.lowercase) {
    p = text::lower(p);
    g = text::lower(g);
  }
  const auto longest = std::max(text::utf8_decode(p).size(), text::utf8_decode(g).size());
  const double nl = longest == 0 ? 0.0 : static_cast<double>(levenshtein(p, g)) / longest;
  return nl < tau ? 1.0 - nl : 0.0;
}

double anls_score(std::string_view pred, std::span<const std::string> gts, double tau,
                  const AnlsOptions& opts) {
  if (gts.empty()) {
    throw InvalidInputError("ANLS needs at least one ground truth");
  }
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, anls_similarity(pred, gt, tau, opts));
  return best;
}

namespace {

constexpr std::string_view kCurrencySymbols[] = {"$", "€", "£", "¥", "₹"};

bool strip_currency(std::string_view& s) {
  for (auto sym : kCurrencySymbols) {
    if (s.starts_with(sym)) {
      s.remove_prefix(sym.size());
      return true;
    }
  }
  return false;
}

bool strip_sign(std::string_view& s, bool& negative) {
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
    return true;
  }
  return false;
}

}  // namespace

std::optional<double> parse_numeric(std::string_view s) {
  s = text::trim(s);
  bool negative = false;
  if (strip_sign(s, negative)) {
    strip_currency(s);
  } else if (strip_currency(s)) {
    strip_sign(s, negative);
  }
  if (!s.empty() && s.back() == '%') {
    s.remove_suffix(1);
    s = text::trim(s);
  }

  std::string digits;
  int points = 0;
  int digit_count = 0;
  for (char c : s) {
    if (c == ',') continue;
    if (c == '.') {
      ++points;
    } else if (text::is_digit(c)) {
      ++digit_count;
    } else {
      return std::nullopt;
    }
    digits += c;
  }
  if (digit_count == 0 || points > 1) {
    return std::nullopt;
  }
  double value = 0.0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || end != digits.data() + digits.size()) {
    return std::nullopt;
  }
  return negative ? -value : value;
}

bool is_year(std::string_view s) {
  s = text::trim(s);
  if (s.size() != 4 || !std::all_of(s.begin(), s.end(), text::is_digit)) {
    return false;
  }
  return s.front() == '1' || s.front() == '2';
}

namespace {

bool within_tolerance(double pred, double gt) {
  if (gt == 0.0) return pred == 0.0;
  // The small slack absorbs representation error, e.g. 1.05 against 1.
  return std::abs(pred - gt) / std::abs(gt) <= kRelaxedTolerance + 1e-12;
}

bool exact_match(std::string_view pred, std::string_view gt) {
  return text::iequals(text::trim(pred), text::trim(gt));
}

}  // namespace

int relaxed_accuracy_chartqa(std::string_view pred, std::string_view gt) {
  const auto p = parse_numeric(pred);
  const auto g = parse_numeric(gt);
  if (p && g) {
    return within_tolerance(*p, *g) ? 1 : 0;
  }
  return exact_match(pred, gt) ? 1 : 0;
}

RAccProBranch racc_pro_branch(std::optional<QuestionType> question_type,
                              std::optional<AnswerKind> answer_kind, std::string_view gt_item) {
  if (question_type == QuestionType::MCQ || question_type == QuestionType::FactChecking) {
    return RAccProBranch::ExactChoice;
  }
  if (answer_kind == AnswerKind::Year) {
    return RAccProBranch::ExactYear;
  }
  if (answer_kind == AnswerKind::Text) {
    return RAccProBranch::Anls;
  }
  if (!answer_kind || answer_kind == AnswerKind::List) {
    if (is_year(gt_item)) return RAccProBranch::ExactYear;
  }
  if (parse_numeric(gt_item)) {
    return RAccProBranch::NumericTolerance;
  }
  return RAccProBranch::Anls;
}

std::vector<std::string> split_list_answer(std::string_view s) {
  s = text::trim(s);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
    s = text::trim(s.substr(1, s.size() - 2));
  }
  std::vector<std::string> raw;
  auto cut = [&](auto is_separator) {
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (is_separator(i)) {
        raw.emplace_back(s.substr(start, i - start));
        start = i + 1;
      }
    }
    raw.emplace_back(s.substr(start));
  };
  if (s.find('\n') != std::string_view::npos) {
    cut([&](std::size_t i) { return s[i] == '\n'; });
  } else if (s.find(';') != std::string_view::npos) {
    cut([&](std::size_t i) { return s[i] == ';'; });
  } else {
    cut([&](std::size_t i) {
      return s[i] == ',' &&
             !(i > 0 && i + 1 < s.size() && text::is_digit(s[i - 1]) && text::is_digit(s[i + 1]));
    });
  }

  std::vector<std::string> items;
  for (auto item : raw) {
    auto v = text::trim(item);
    if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front()) {
      v = text::trim(v.substr(1, v.size() - 2));
    }
    if (!v.empty()) items.emplace_back(v);
  }
  return items;
}

namespace {

double score_item(std::string_view pred, std::string_view gt, std::optional<QuestionType> qtype,
                  std::optional<AnswerKind> kind, double tau) {
  switch (racc_pro_branch(qtype, kind, gt)) {
    case RAccProBranch::ExactChoice:
      return exact_match(pred, gt) ? 1.0 : 0.0;
    case RAccProBranch::ExactYear:
      return text::trim(pred) == text::trim(gt) ? 1.0 : 0.0;
    case RAccProBranch::NumericTolerance: {
      const auto p = parse_numeric(pred);
      const auto g = parse_numeric(gt);
      if (p && g && within_tolerance(*p, *g)) return 1.0;
      return anls_similarity(pred, gt, tau);
    }
    case RAccProBranch::Anls:
      return anls_similarity(pred, gt, tau);
  }
  return 0.0;
}

}  // namespace

double relaxed_accuracy_pro(std::string_view pred, const GroundTruth& gt, double tau) {
  if (gt.answers.empty()) {
    throw InvalidInputError("ground truth has no answers");
  }
  if (gt.answer_kind == AnswerKind::List) {
    const auto truth = gt.answers.size() > 1 ? gt.answers : split_list_answer(gt.answers.front());
    const auto guess = split_list_answer(pred);
    const auto n = std::max(truth.size(), guess.size());
    if (n == 0) return 1.0;
    double total = 0.0;
    for (std::size_t i = 0; i < std::min(truth.size(), guess.size()); ++i) {
      total += score_item(guess[i], truth[i], gt.question_type, std::nullopt, tau);
    }
    return total / static_cast<double>(n);
  }
  double best = 0.0;
  for (const auto& answer : gt.answers) {
    best = std::max(best, score_item(pred, answer, gt.question_type, gt.answer_kind, tau));
  }
  return best;
}

namespace {

constexpr std::string_view kVqaPunctuation = ";/[]\"{}()=+\\_-><@`,?!";

const std::map<std::string, std::string, std::less<>>& number_words() {
  static const std::map<std::string, std::string, std::less<>> words{
      {"zero", "0"}, {"one", "1"}, {"two", "2"},   {"three", "3"}, {"four", "4"}, {"five", "5"},
      {"six", "6"},  {"seven", "7"}, {"eight", "8"}, {"nine", "9"}, {"ten", "10"}};
  return words;
}

const std::map<std::string, std::string, std::less<>>& contractions() {
  static const std::map<std::string, std::string, std::less<>> table{
      {"aint", "ain't"},         {"arent", "aren't"},       {"cant", "can't"},
      {"couldve", "could've"},   {"couldnt", "couldn't"},   {"didnt", "didn't"},
      {"doesnt", "doesn't"},     {"dont", "don't"},         {"hadnt", "hadn't"},
      {"hasnt", "hasn't"},       {"havent", "haven't"},     {"howd", "how'd"},
      {"howll", "how'll"},       {"hows", "how's"},         {"im", "i'm"},
      {"ive", "i've"},           {"isnt", "isn't"},         {"itd", "it'd"},
      {"itll", "it'll"},         {"maam", "ma'am"},         {"mightnt", "mightn't"},
      {"mightve", "might've"},   {"mustnt", "mustn't"},     {"mustve", "must've"},
      {"neednt", "needn't"},     {"shant", "shan't"},       {"shes", "she's"},
      {"shouldve", "should've"}, {"shouldnt", "shouldn't"}, {"thats", "that's"},
      {"thered", "there'd"},     {"theres", "there's"},     {"theyd", "they'd"},
      {"theyll", "they'll"},     {"theyre", "they're"},     {"theyve", "they've"},
      {"wasnt", "wasn't"},       {"weve", "we've"},         {"werent", "weren't"},
      {"whats", "what's"},       {"whens", "when's"},       {"wheres", "where's"},
      {"whod", "who'd"},         {"wholl", "who'll"},       {"whos", "who's"},
      {"wont", "won't"},         {"wouldve", "would've"},   {"wouldnt", "wouldn't"},
      {"yall", "y'all"},         {"youd", "you'd"},         {"youll", "you'll"},
      {"youre", "you're"},       {"youve", "you've"}};
  return table;
}

}  // namespace

std::string vqa_normalize(std::string_view s) {
  const std::string low = text::lower(s);
  std::string cleaned;
  cleaned.reserve(low.size());
  for (std::size_t i = 0; i < low.size(); ++i) {
    const char c = low[i];
    const bool digit_before = i > 0 && text::is_digit(low[i - 1]);
    const bool digit_after = i + 1 < low.size() && text::is_digit(low[i + 1]);
    if (c == '.') {
      cleaned += digit_after ? '.' : ' ';
    } else if (c == ',' && digit_before && digit_after) {
      // thousands separator: drop
    } else if (c == '/' && digit_before && digit_after) {
      cleaned += '/';
    } else if (kVqaPunctuation.find(c) != std::string_view::npos) {
      cleaned += ' ';
    } else {
      cleaned += c;
    }
  }

  std::string out;
  for (const auto& token : text::split_whitespace(cleaned)) {
    if (token == "a" || token == "an" || token == "the") continue;
    std::string_view word = token;
    if (const auto it = number_words().find(word); it != number_words().end()) {
      word = it->second;
    } else if (const auto c = contractions().find(word); c != contractions().end()) {
      word = c->second;
    }
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

double vqa_score(std::string_view pred, std::span<const std::string> refs) {
  if (refs.empty()) {
    throw InvalidInputError("VQA score needs at least one reference answer");
  }
  const auto p = vqa_normalize(pred);
  const auto agree = std::count_if(refs.begin(), refs.end(),
                                   [&](const std::string& r) { return vqa_normalize(r) == p; });
  return std::min(static_cast<double>(agree) / 3.0, 1.0);
}

double aggregate(std::span<const double> values) {
  if (values.empty()) {
    throw InvalidInputError("cannot aggregate an empty score list");
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double aggregate(std::span<const MetricScore> scores) {
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& s : scores) values.push_back(s.value);
  return aggregate(values);
}

}  // namespace damqa
