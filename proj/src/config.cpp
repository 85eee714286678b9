#include "damqa/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "damqa/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace damqa {

std::string_view run_mode_name(RunMode m) {
  return m == RunMode::Baseline ? "baseline" : "sliding";
}

std::string_view backend_kind_name(BackendKind k) {
  return k == BackendKind::Http ? "http" : "mock";
}

namespace {

// Reads optional keys from one object and rejects any it was not asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) {
      throw InvalidInputError("config: \"" + name_ + "\" must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw InvalidInputError("config: " + path(key) + " has the wrong type");
    }
  }

  void read_path(const char* key, std::optional<fs::path>& out, const fs::path& base) {
    std::string s;
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    if (!it->is_string()) throw InvalidInputError("config: " + path(key) + " must be a string");
    s = it->get<std::string>();
    fs::path p(s);
    out = p.is_relative() && !base.empty() ? base / p : p;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw InvalidInputError("config: unknown key " + path(k.c_str()));
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string, std::less<>> seen_;
};

GenerationParams read_generation(const json& j, const std::string& name, GenerationParams g) {
  Section s(j, name);
  s.read("temperature", g.temperature);
  s.read("top_p", g.top_p);
  s.read("num_beams", g.num_beams);
  s.read("max_new_tokens", g.max_new_tokens);
  s.finish();
  return g;
}

BackendConfig read_backend(const json& j, const std::string& name, const fs::path& base) {
  BackendConfig b;
  Section s(j, name);
  std::string kind = std::string(backend_kind_name(b.kind));
  s.read("kind", kind);
  if (kind == "http") {
    b.kind = BackendKind::Http;
  } else if (kind == "mock") {
    b.kind = BackendKind::Mock;
  } else {
    throw InvalidInputError("config: " + s.path("kind") + " must be \"http\" or \"mock\"");
  }
  s.read("base_url", b.endpoint.base_url);
  s.read("timeout_seconds", b.endpoint.timeout_seconds);
  s.read("max_retries", b.endpoint.max_retries);
  s.read("retry_backoff_seconds", b.endpoint.retry_backoff_seconds);
  s.read_path("fixture", b.fixture, base);
  s.finish();
  return b;
}

ordered_json generation_json(const GenerationParams& g) { return g.to_json(); }

ordered_json backend_json(const BackendConfig& b) {
  ordered_json j;
  j["kind"] = backend_kind_name(b.kind);
  j["base_url"] = b.endpoint.base_url;
  j["timeout_seconds"] = b.endpoint.timeout_seconds;
  j["max_retries"] = b.endpoint.max_retries;
  j["retry_backoff_seconds"] = b.endpoint.retry_backoff_seconds;
  j["fixture"] = b.fixture ? ordered_json(b.fixture->string()) : ordered_json(nullptr);
  return j;
}

void validate_backend(const BackendConfig& b, const std::string& name) {
  b.endpoint.validate();
  if (b.kind == BackendKind::Mock && !b.fixture) {
    throw InvalidInputError(name + ": mock backend requires a fixture file");
  }
}

}  // namespace

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> warnings;
  if (resize_target < 1) throw InvalidInputError("resize_target must be at least 1");
  if (window < 1) throw InvalidInputError("window must be at least 1");
  if (stride < 1) throw InvalidInputError("stride must be at least 1");
  if (window > resize_target) {
    throw InvalidInputError("window (" + std::to_string(window) + ") exceeds resize_target (" +
                            std::to_string(resize_target) + ")");
  }
  if (stride > window) {
    warnings.push_back("stride " + std::to_string(stride) + " exceeds window " +
                       std::to_string(window) +
                       "; interior pixels between windows are not covered by any patch");
  }
  if (concurrency < 1) throw InvalidInputError("concurrency must be at least 1");
  if (!seedless) throw InvalidInputError("seedless must be true: the pipeline has no RNG");
  prompt.validate();
  vote.validate();
  generation.validate();
  judge.generation.validate();
  validate_backend(backend, "backend");
  judge.backend.endpoint.validate();
  return warnings;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["mode"] = run_mode_name(mode);
  j["resize_target"] = resize_target;
  j["window"] = window;
  j["stride"] = stride;
  j["prompt"] = {{"rule1_enabled", prompt.rule1_enabled},
                 {"rule2_enabled", prompt.rule2_enabled},
                 {"instruction_text", prompt.instruction_text},
                 {"rule1_text", prompt.rule1_text},
                 {"rule2_text", prompt.rule2_text},
                 {"unanswerable_token", prompt.unanswerable_token}};
  j["vote"] = {{"unanswerable_weight_multiplier", vote.unanswerable_weight_multiplier},
               {"full_image_weight", vote.full_image_weight},
               {"strict_full_unanswerable", vote.strict_full_unanswerable},
               {"case_insensitive", vote.case_insensitive}};
  j["strict_abstention"] = strict_abstention;
  j["generation"] = generation_json(generation);
  j["backend"] = backend_json(backend);
  ordered_json judge_j;
  judge_j["backend"] = backend_json(judge.backend);
  judge_j["template"] =
      judge.template_path ? ordered_json(judge.template_path->string()) : ordered_json(nullptr);
  judge_j["generation"] = generation_json(judge.generation);
  j["judge"] = std::move(judge_j);
  j["concurrency"] = concurrency;
  j["seedless"] = seedless;
  return j;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  RunConfig cfg;
  Section top(j, "config");

  std::string mode = std::string(run_mode_name(cfg.mode));
  top.read("mode", mode);
  if (mode == "baseline") {
    cfg.mode = RunMode::Baseline;
  } else if (mode == "sliding") {
    cfg.mode = RunMode::Sliding;
  } else {
    throw InvalidInputError("config: mode must be \"baseline\" or \"sliding\"");
  }
  top.read("resize_target", cfg.resize_target);
  top.read("window", cfg.window);
  top.read("stride", cfg.stride);
  top.read("strict_abstention", cfg.strict_abstention);
  top.read("concurrency", cfg.concurrency);
  top.read("seedless", cfg.seedless);

  if (const auto* p = top.child("prompt")) {
    Section s(*p, "prompt");
    s.read("rule1_enabled", cfg.prompt.rule1_enabled);
    s.read("rule2_enabled", cfg.prompt.rule2_enabled);
    s.read("instruction_text", cfg.prompt.instruction_text);
    s.read("rule1_text", cfg.prompt.rule1_text);
    s.read("rule2_text", cfg.prompt.rule2_text);
    s.read("unanswerable_token", cfg.prompt.unanswerable_token);
    s.finish();
  }
  if (const auto* v = top.child("vote")) {
    Section s(*v, "vote");
    s.read("unanswerable_weight_multiplier", cfg.vote.unanswerable_weight_multiplier);
    s.read("full_image_weight", cfg.vote.full_image_weight);
    s.read("strict_full_unanswerable", cfg.vote.strict_full_unanswerable);
    s.read("case_insensitive", cfg.vote.case_insensitive);
    s.finish();
  }
  if (const auto* g = top.child("generation")) {
    cfg.generation = read_generation(*g, "generation", cfg.generation);
  }
  if (const auto* b = top.child("backend")) {
    cfg.backend = read_backend(*b, "backend", base_dir);
  }
  if (const auto* jj = top.child("judge")) {
    Section s(*jj, "judge");
    if (const auto* b = s.child("backend")) cfg.judge.backend = read_backend(*b, "judge.backend", base_dir);
    s.read_path("template", cfg.judge.template_path, base_dir);
    if (const auto* g = s.child("generation")) {
      cfg.judge.generation = read_generation(*g, "judge.generation", cfg.judge.generation);
    }
    s.finish();
  }
  top.finish();
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = json::parse(ss.str(), nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw InvalidInputError("config file is not valid JSON: " + path.string());
  return from_json(j, path.parent_path());
}

void apply_environment(RunConfig& cfg) {
  if (const char* url = std::getenv("DAMQA_BACKEND_URL"); url && *url) {
    cfg.backend.endpoint.base_url = url;
  }
  if (const char* url = std::getenv("DAMQA_JUDGE_URL"); url && *url) {
    cfg.judge.backend.endpoint.base_url = url;
  }
}

}  // namespace damqa
