#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damqa/views.hpp"

namespace damqa {

/// Decoding settings sent with every request. Defaults are near-greedy
/// decoding: temperature 1e-7, nucleus p = 0.5, a single beam.
struct GenerationParams {
  double temperature = 1e-7;
  double top_p = 0.5;
  int num_beams = 1;
  int max_new_tokens = 32;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static GenerationParams from_json(const nlohmann::json& j);
  bool operator==(const GenerationParams&) const = default;
};

struct BackendEndpoint {
  std::string base_url = "http://127.0.0.1:8000";
  double timeout_seconds = 120.0;
  int max_retries = 3;
  double retry_backoff_seconds = 1.0;

  void validate() const;
};

/// One view's answer after post-processing.
struct Prediction {
  int view_index = 0;
  std::string answer;      // normalize_answer(raw_answer)
  std::string raw_answer;
  bool is_unanswerable = false;
};

/// How abstentions are recognised in model output.
struct AbstentionRule {
  std::string token = "unanswerable";
  bool strict = false;  // exact byte match only
};

/// Strips leading and trailing ASCII whitespace; nothing else is touched.
std::string normalize_answer(std::string_view raw);

/// True iff `answer` is the abstention token. In lenient mode the
/// comparison ignores ASCII case and a single trailing period.
bool is_unanswerable(std::string_view answer, std::string_view token, bool strict = false);

Prediction make_prediction(int view_index, std::string raw_answer, const AbstentionRule& rule);

struct InferRequest {
  std::string_view sample_id;
  const View& view;
  std::string_view prompt;
  const GenerationParams& params;
};

struct CompleteRequest {
  std::string_view sample_id;
  std::string_view prompt;
  const GenerationParams& params;
};

/// Answers one (view, prompt) query. Implementations must be safe to call
/// from several threads at once.
class VisionBackend {
 public:
  virtual ~VisionBackend() = default;
  /// Returns the model's answer verbatim.
  virtual std::string infer(const InferRequest& request) = 0;
  /// Throws BackendUnavailableError when the backend cannot be reached.
  virtual void probe() {}
};

/// Text-only completion, used by the judge.
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string complete(const CompleteRequest& request) = 0;
};

// Wire protocol -------------------------------------------------------------

inline constexpr std::string_view kInferPath = "/v1/infer";
inline constexpr std::string_view kCompletePath = "/v1/complete";

nlohmann::ordered_json make_infer_body(const View& view, std::string_view prompt,
                                       const GenerationParams& params);
nlohmann::ordered_json make_complete_body(std::string_view prompt, const GenerationParams& params);

/// Server-side view of an /v1/infer body. Throws ProtocolError on any
/// schema violation (missing field, wrong type, bad base64, bad PNG).
struct DecodedInferRequest {
  ImageBuffer image;
  MaskBuffer mask;
  std::string prompt;
  GenerationParams params;
};
DecodedInferRequest decode_infer_body(const nlohmann::json& body);

struct DecodedCompleteRequest {
  std::string prompt;
  GenerationParams params;
};
DecodedCompleteRequest decode_complete_body(const nlohmann::json& body);

/// Extracts the named string field from a 200 response body.
/// Throws ProtocolError if the body is not JSON or lacks the field.
std::string parse_response_field(std::string_view body, std::string_view field);

/// Content key for digest-keyed fixtures: SHA-256 over the view pixels,
/// their dimensions and the prompt.
std::string view_digest(const ImageBuffer& image, std::string_view prompt);

// Clients -------------------------------------------------------------------

/// HTTP/1.1 client for the wire protocol. Each attempt has a hard deadline of
/// endpoint.timeout_seconds; connection failures, timeouts and 502/503/504
/// are retried up to max_retries times with exponential backoff starting at
/// retry_backoff_seconds. Any other non-200 status is a ProtocolError.
class HttpBackend final : public VisionBackend, public TextBackend {
 public:
  explicit HttpBackend(BackendEndpoint endpoint);

  std::string infer(const InferRequest& request) override;
  std::string complete(const CompleteRequest& request) override;
  void probe() override;

  const BackendEndpoint& endpoint() const { return endpoint_; }

 private:
  std::string post_with_retries(std::string_view path, const std::string& body,
                                std::string_view field);

  BackendEndpoint endpoint_;
  std::string host_;   // scheme://host:port
  std::string prefix_; // path prefix from base_url, without trailing slash
};

/// Canned answers for tests and offline runs.
///
/// infer() resolves, in order: answers[sample_id][view index], then
/// answers[sample_id]["*"], then digests[view_digest], then
/// answer_pool[digest mod size], then default_answer. A null fixture entry
/// simulates an unreachable backend for that lookup.
struct MockFixture {
  std::map<std::string, std::map<std::string, std::optional<std::string>>> answers;
  std::map<std::string, std::string> digests;
  std::vector<std::string> answer_pool;
  std::optional<std::string> default_answer;

  /// complete() replies per sample id. With several entries the n-th call
  /// for that sample gets the n-th entry, the last one repeating.
  std::map<std::string, std::vector<std::optional<std::string>>> completions;
  std::optional<std::string> default_completion;

  static MockFixture from_json(const nlohmann::json& j);
  static MockFixture load(const std::string& path);
};

class MockBackend final : public VisionBackend, public TextBackend {
 public:
  explicit MockBackend(MockFixture fixture);

  std::string infer(const InferRequest& request) override;
  std::string complete(const CompleteRequest& request) override;

  /// Digest-only lookup, as used when serving the wire protocol where no
  /// sample id is available.
  std::string infer_by_digest(const ImageBuffer& image, std::string_view prompt) const;
  std::string complete_by_prompt(std::string_view prompt);

  std::size_t infer_calls() const { return infer_calls_.load(); }
  std::size_t complete_calls() const { return complete_calls_.load(); }

 private:
  std::string resolve_digest(const std::string& digest) const;

  MockFixture fixture_;
  std::atomic<std::size_t> infer_calls_{0};
  std::atomic<std::size_t> complete_calls_{0};
  std::mutex mutex_;
  std::map<std::string, std::size_t> completion_cursor_;
};

}  // namespace damqa
