#include <fstream>
#include <string>

#include "damqa/backend.hpp"
#include "damqa/digest.hpp"
#include "damqa/error.hpp"

namespace damqa {

using nlohmann::json;

namespace {

std::optional<std::string> optional_string(const json& value, const std::string& where) {
  if (value.is_null()) return std::nullopt;
  if (!value.is_string()) {
    throw DataError("mock fixture: " + where + " must be a string or null");
  }
  return value.get<std::string>();
}

}  // namespace

MockFixture MockFixture::from_json(const json& j) {
  if (!j.is_object()) {
    throw DataError("mock fixture must be a JSON object");
  }
  MockFixture f;
  if (const auto it = j.find("answers"); it != j.end()) {
    for (const auto& [sample, views] : it->items()) {
      if (!views.is_object()) {
        throw DataError("mock fixture: answers." + sample + " must be an object");
      }
      auto& slot = f.answers[sample];
      for (const auto& [key, value] : views.items()) {
        slot[key] = optional_string(value, "answers." + sample + "." + key);
      }
    }
  }
  if (const auto it = j.find("digests"); it != j.end()) {
    for (const auto& [digest, value] : it->items()) {
      if (!value.is_string()) throw DataError("mock fixture: digests values must be strings");
      f.digests[digest] = value.get<std::string>();
    }
  }
  if (const auto it = j.find("answer_pool"); it != j.end()) {
    f.answer_pool = it->get<std::vector<std::string>>();
  }
  if (const auto it = j.find("default_answer"); it != j.end()) {
    f.default_answer = optional_string(*it, "default_answer");
  }
  if (const auto it = j.find("completions"); it != j.end()) {
    for (const auto& [sample, value] : it->items()) {
      auto& seq = f.completions[sample];
      if (value.is_array()) {
        for (const auto& v : value) seq.push_back(optional_string(v, "completions." + sample));
      } else {
        seq.push_back(optional_string(value, "completions." + sample));
      }
    }
  }
  if (const auto it = j.find("default_completion"); it != j.end()) {
    f.default_completion = optional_string(*it, "default_completion");
  }
  return f;
}

MockFixture MockFixture::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open mock fixture: " + path);
  }
  const auto j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw DataError("mock fixture is not valid JSON: " + path);
  }
  return from_json(j);
}

MockBackend::MockBackend(MockFixture fixture) : fixture_(std::move(fixture)) {}

std::string MockBackend::resolve_digest(const std::string& digest) const {
  if (const auto it = fixture_.digests.find(digest); it != fixture_.digests.end()) {
    return it->second;
  }
  if (!fixture_.answer_pool.empty()) {
    const auto bucket = std::stoull(digest.substr(0, 12), nullptr, 16);
    return fixture_.answer_pool[bucket % fixture_.answer_pool.size()];
  }
  if (fixture_.default_answer) {
    return *fixture_.default_answer;
  }
  throw BackendUnavailableError("mock backend has no answer for digest " + digest);
}

std::string MockBackend::infer(const InferRequest& request) {
  ++infer_calls_;
  if (const auto it = fixture_.answers.find(std::string(request.sample_id));
      it != fixture_.answers.end()) {
    const auto& views = it->second;
    auto entry = views.find(std::to_string(request.view.index));
    if (entry == views.end()) entry = views.find("*");
    if (entry != views.end()) {
      if (!entry->second) {
        throw BackendUnavailableError("mock backend: simulated failure for sample " +
                                      std::string(request.sample_id) + " view " +
                                      std::to_string(request.view.index));
      }
      return *entry->second;
    }
  }
  return resolve_digest(view_digest(request.view.image, request.prompt));
}

std::string MockBackend::infer_by_digest(const ImageBuffer& image, std::string_view prompt) const {
  return resolve_digest(view_digest(image, prompt));
}

std::string MockBackend::complete(const CompleteRequest& request) {
  ++complete_calls_;
  const std::string key(request.sample_id);
  const auto it = fixture_.completions.find(key);
  if (it == fixture_.completions.end() || it->second.empty()) {
    return complete_by_prompt(request.prompt);
  }
  std::size_t n = 0;
  {
    std::lock_guard lock(mutex_);
    n = completion_cursor_[key]++;
  }
  const auto& seq = it->second;
  const auto& reply = seq[std::min(n, seq.size() - 1)];
  if (!reply) {
    throw BackendUnavailableError("mock backend: simulated completion failure for " + key);
  }
  return *reply;
}

std::string MockBackend::complete_by_prompt(std::string_view prompt) {
  if (const auto it = fixture_.completions.find(sha256_hex(prompt));
      it != fixture_.completions.end() && !it->second.empty() && it->second.front()) {
    return *it->second.front();
  }
  if (fixture_.default_completion) {
    return *fixture_.default_completion;
  }
  throw BackendUnavailableError("mock backend has no completion for this prompt");
}

}  // namespace damqa
