#include "damqa/backend.hpp"

#include <cmath>
#include <string>
#include <type_traits>

#include "damqa/digest.hpp"
#include "damqa/error.hpp"
#include "damqa/image_io.hpp"
#include "damqa/text.hpp"

namespace damqa {

using nlohmann::json;
using nlohmann::ordered_json;

void GenerationParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidInputError("temperature must be a finite non-negative number");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw InvalidInputError("top_p must lie in (0, 1]");
  }
  if (num_beams < 1) {
    throw InvalidInputError("num_beams must be at least 1");
  }
  if (max_new_tokens < 1) {
    throw InvalidInputError("max_new_tokens must be at least 1");
  }
}

ordered_json GenerationParams::to_json() const {
  ordered_json j;
  j["temperature"] = temperature;
  j["top_p"] = top_p;
  j["num_beams"] = num_beams;
  j["max_new_tokens"] = max_new_tokens;
  return j;
}

namespace {

template <typename T>
T require(const json& obj, const char* key, const char* what) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ProtocolError(std::string("missing \"") + key + "\" in " + what);
  }
  if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ProtocolError(std::string("\"") + key + "\" must be a string");
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw ProtocolError(std::string("\"") + key + "\" must be an integer");
  } else {
    if (!it->is_number()) throw ProtocolError(std::string("\"") + key + "\" must be a number");
  }
  return it->get<T>();
}

}  // namespace

GenerationParams GenerationParams::from_json(const json& j) {
  if (!j.is_object()) {
    throw ProtocolError("\"generation\" must be an object");
  }
  GenerationParams p;
  p.temperature = require<double>(j, "temperature", "generation");
  p.top_p = require<double>(j, "top_p", "generation");
  p.num_beams = require<int>(j, "num_beams", "generation");
  p.max_new_tokens = require<int>(j, "max_new_tokens", "generation");
  try {
    p.validate();
  } catch (const InvalidInputError& e) {
    throw ProtocolError(e.what());
  }
  return p;
}

void BackendEndpoint::validate() const {
  if (base_url.empty()) {
    throw InvalidInputError("backend base_url must not be empty");
  }
  if (!(timeout_seconds > 0.0)) {
    throw InvalidInputError("backend timeout must be positive");
  }
  if (max_retries < 0) {
    throw InvalidInputError("max_retries must be non-negative");
  }
  if (retry_backoff_seconds < 0.0) {
    throw InvalidInputError("retry_backoff must be non-negative");
  }
}

std::string normalize_answer(std::string_view raw) { return std::string(text::trim(raw)); }

bool is_unanswerable(std::string_view answer, std::string_view token, bool strict) {
  if (strict) {
    return answer == token;
  }
  if (!answer.empty() && answer.back() == '.') {
    answer.remove_suffix(1);
  }
  return text::iequals(answer, token);
}

Prediction make_prediction(int view_index, std::string raw_answer, const AbstentionRule& rule) {
  Prediction p;
  p.view_index = view_index;
  p.answer = normalize_answer(raw_answer);
  p.raw_answer = std::move(raw_answer);
  p.is_unanswerable = is_unanswerable(p.answer, rule.token, rule.strict);
  return p;
}

ordered_json make_infer_body(const View& view, std::string_view prompt,
                             const GenerationParams& params) {
  ordered_json body;
  body["image"] = base64_encode(encode_png(view.image));
  body["mask"] = base64_encode(encode_png(view.mask));
  body["prompt"] = prompt;
  body["generation"] = params.to_json();
  return body;
}

ordered_json make_complete_body(std::string_view prompt, const GenerationParams& params) {
  ordered_json body;
  body["prompt"] = prompt;
  body["generation"] = params.to_json();
  return body;
}

DecodedInferRequest decode_infer_body(const json& body) {
  if (!body.is_object()) {
    throw ProtocolError("request body must be a JSON object");
  }
  DecodedInferRequest req;
  const auto image_b64 = require<std::string>(body, "image", "request");
  const auto mask_b64 = require<std::string>(body, "mask", "request");
  req.prompt = require<std::string>(body, "prompt", "request");
  if (!body.contains("generation")) {
    throw ProtocolError("missing \"generation\" in request");
  }
  req.params = GenerationParams::from_json(body.at("generation"));

  const auto image_png = base64_decode(image_b64);
  if (image_png.size() < 8 || image_png[0] != 0x89 || image_png[1] != 'P') {
    throw ProtocolError("\"image\" must be a base64 PNG");
  }
  try {
    req.image = decode_image(image_png);
    req.mask = decode_mask_png(base64_decode(mask_b64));
  } catch (const InvalidImageError& e) {
    throw ProtocolError(e.what());
  }
  if (req.mask.width != req.image.width || req.mask.height != req.image.height) {
    throw ProtocolError("mask dimensions do not match image dimensions");
  }
  return req;
}

DecodedCompleteRequest decode_complete_body(const json& body) {
  if (!body.is_object()) {
    throw ProtocolError("request body must be a JSON object");
  }
  DecodedCompleteRequest req;
  req.prompt = require<std::string>(body, "prompt", "request");
  if (!body.contains("generation")) {
    throw ProtocolError("missing \"generation\" in request");
  }
  req.params = GenerationParams::from_json(body.at("generation"));
  return req;
}

std::string parse_response_field(std::string_view body, std::string_view field) {
  const auto parsed = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    throw ProtocolError("response body is not a JSON object");
  }
  const auto it = parsed.find(std::string(field));
  if (it == parsed.end() || !it->is_string()) {
    throw ProtocolError("response lacks string field \"" + std::string(field) + "\"");
  }
  return it->get<std::string>();
}

std::string view_digest(const ImageBuffer& image, std::string_view prompt) {
  std::string material = "damqa-view-v1\n" + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + "\n";
  material.append(reinterpret_cast<const char*>(image.data.data()), image.data.size());
  material += '\n';
  material.append(prompt);
  return sha256_hex(material);
}

}  // namespace damqa
