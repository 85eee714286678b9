#include "damqa/judge.hpp"

#include <optional>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "damqa/error.hpp"
#include "damqa/prompting.hpp"

namespace damqa {

namespace {

// Index one past the '}' closing the object opened at `open`, honouring
// JSON string literals. npos if unbalanced.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}' && --depth == 0) {
      return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<std::pair<long long, long long>> as_verdict(std::string_view candidate) {
  const auto j = nlohmann::json::parse(candidate, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto m = j.find("matched");
  const auto t = j.find("total");
  if (m == j.end() || t == j.end() || !m->is_number_integer() || !t->is_number_integer()) {
    return std::nullopt;
  }
  return std::pair{m->get<long long>(), t->get<long long>()};
}

}  // namespace

std::pair<int, int> parse_judge_output(std::string_view reply) {
  for (auto open = reply.rfind('{'); open != std::string_view::npos;
       open = open == 0 ? std::string_view::npos : reply.rfind('{', open - 1)) {
    const auto close = matching_brace(reply, open);
    if (close == std::string_view::npos) continue;
    const auto verdict = as_verdict(reply.substr(open, close - open));
    if (!verdict) continue;
    const auto [m, t] = *verdict;
    if (t < 1 || m < 0 || m > t || t > 1'000'000) {
      throw ParseError("judge verdict out of range: matched=" + std::to_string(m) +
                       " total=" + std::to_string(t));
    }
    return {static_cast<int>(m), static_cast<int>(t)};
  }
  throw ParseError("no {\"matched\", \"total\"} verdict in judge reply");
}

JudgeResult judge_sample(std::string_view sample_id, std::string_view question,
                         std::span<const std::string> ground_truths, std::string_view prediction,
                         TextBackend& backend, std::string_view tmpl,
                         const GenerationParams& params) {
  const auto prompt = build_judge_prompt(question, ground_truths, prediction, tmpl);
  JudgeResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string reply;
    try {
      reply = backend.complete(CompleteRequest{sample_id, prompt, params});
    } catch (const BackendUnavailableError& e) {
      result.backend_failed = true;
      result.error = e.what();
    } catch (const ProtocolError& e) {
      result.backend_failed = true;
      result.error = e.what();
    }
    if (result.backend_failed) {
      result.verdict = JudgeVerdict{0, 1, {}};
      return result;
    }
    try {
      const auto [m, t] = parse_judge_output(reply);
      result.verdict = JudgeVerdict{m, t, std::move(reply)};
      result.parse_error = false;
      result.error.clear();
      return result;
    } catch (const ParseError& e) {
      spdlog::debug("judge reply for {} unparseable (attempt {}): {}", sample_id, attempt + 1,
                    e.what());
      result.parse_error = true;
      result.error = e.what();
      result.verdict = JudgeVerdict{0, 1, std::move(reply)};
    }
  }
  return result;
}

double llm_score(std::span<const JudgeVerdict> verdicts) {
  if (verdicts.empty()) {
    throw InvalidInputError("LLM score needs at least one verdict");
  }
  double sum = 0.0;
  for (const auto& v : verdicts) {
    if (v.total < 1 || v.matched < 0 || v.matched > v.total) {
      throw InvalidInputError("verdict violates 0 <= matched <= total, total >= 1");
    }
    sum += v.score();
  }
  return sum / static_cast<double>(verdicts.size());
}

}  // namespace damqa
