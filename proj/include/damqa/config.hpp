#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damqa/aggregator.hpp"
#include "damqa/backend.hpp"
#include "damqa/prompting.hpp"
#include "damqa/views.hpp"

namespace damqa {

enum class RunMode { Baseline, Sliding };
enum class BackendKind { Http, Mock };

std::string_view run_mode_name(RunMode m);
std::string_view backend_kind_name(BackendKind k);

struct BackendConfig {
  BackendKind kind = BackendKind::Http;
  BackendEndpoint endpoint;
  std::optional<std::filesystem::path> fixture;  // required for kind == Mock
};

struct JudgeConfig {
  BackendConfig backend;
  std::optional<std::filesystem::path> template_path;  // default template otherwise
  GenerationParams generation{.temperature = 1e-7, .top_p = 0.5, .num_beams = 1,
                              .max_new_tokens = 256};
};

struct RunConfig {
  RunMode mode = RunMode::Sliding;
  int resize_target = kDefaultResizeTarget;
  int window = kDefaultWindow;
  int stride = kDefaultStride;
  PromptConfig prompt;
  VoteConfig vote;
  bool strict_abstention = false;
  GenerationParams generation;
  BackendConfig backend;
  JudgeConfig judge;
  int concurrency = 1;
  /// Documents that the pipeline draws no random numbers. Always true.
  bool seedless = true;

  AbstentionRule abstention() const { return {prompt.unanswerable_token, strict_abstention}; }

  /// Throws InvalidInputError on a hard violation. Returns warnings for
  /// settings that are legal but unusual (stride larger than window).
  std::vector<std::string> validate() const;

  nlohmann::ordered_json to_json() const;

  /// Missing keys keep their defaults; unknown keys are rejected so typos
  /// do not silently fall back to defaults. Relative fixture and template
  /// paths are resolved against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

/// Applies DAMQA_BACKEND_URL and DAMQA_JUDGE_URL when set and non-empty.
void apply_environment(RunConfig& cfg);

}  // namespace damqa
