#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "damqa/config.hpp"
#include "damqa/datasets.hpp"
#include "damqa/judge.hpp"
#include "damqa/metrics.hpp"

namespace damqa {

struct ViewRecord {
  int index = 0;
  PatchRect rect;
  std::string answer;  // normalized
  bool unanswerable = false;
  double weight = 0.0;  // vote weight under the run's vote config

  bool operator==(const ViewRecord&) const = default;
};

/// One line of the predictions file.
struct PredictionRecord {
  std::string id;
  std::string final_answer;
  std::string full_answer;
  int image_width = 0;   // after resizing
  int image_height = 0;
  std::vector<ViewRecord> views;  // views[0] is the full view when present
  std::map<std::string, double> votes;
  bool fallback_used = false;
  std::optional<std::string> error;

  nlohmann::ordered_json to_json() const;
  static PredictionRecord from_json(const nlohmann::json& j);
  bool operator==(const PredictionRecord&) const = default;
};

void write_predictions(std::span<const PredictionRecord> records, std::ostream& out);
void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path);
/// Throws DataError naming the line for malformed records.
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// Raw view answers keyed by (sample id, image size, view rect, prompt
/// digest, generation digest). Thread-safe. Optionally backed by a JSON
/// lines file read by load() and rewritten by save().
class PredictionCache {
 public:
  PredictionCache() = default;

  static std::string key(std::string_view sample_id, int image_width, int image_height,
                         const PatchRect& rect, std::string_view prompt_digest,
                         std::string_view generation_digest);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, std::string raw_answer);
  std::size_t size() const;
  std::size_t hits() const;

  void load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
  mutable std::size_t hits_ = 0;
};

std::string generation_digest(const GenerationParams& params);

struct RunSummary {
  std::size_t total = 0;
  std::size_t failed = 0;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  double wall_seconds = 0.0;

  bool failure_threshold_exceeded() const { return total > 0 && failed * 2 > total; }
};

struct RunResult {
  std::vector<PredictionRecord> records;  // dataset order
  RunSummary summary;
};

/// Runs the pipeline over every sample. `cache` may be null. Backend
/// failures for a sample are recorded in its PredictionRecord and the run
/// continues. The backend is probed once before the first sample.
RunResult run_evaluation(const RunConfig& cfg, std::span<const SampleRecord> samples,
                         const std::filesystem::path& images_root, VisionBackend& backend,
                         PredictionCache* cache = nullptr);

/// Single sample, no probe. Never throws for backend or image failures.
PredictionRecord evaluate_sample(const RunConfig& cfg, const SampleRecord& sample,
                                 const std::filesystem::path& images_root, VisionBackend& backend,
                                 PredictionCache* cache = nullptr,
                                 std::size_t* backend_calls = nullptr);

/// Re-runs the vote over a record's stored views with `vote`, recomputing
/// the weights from the rects. Records with an error or no views are
/// returned unchanged.
PredictionRecord reaggregate(const PredictionRecord& record, const VoteConfig& vote);

/// Ids of records whose final answer is not reproduced by reaggregate().
std::vector<std::string> audit(std::span<const PredictionRecord> records, const VoteConfig& vote);

struct SampleScore {
  std::string id;
  double score = 0.0;
};

struct ScoreReport {
  Metric metric = Metric::ANLS;
  double tau = kAnlsThreshold;
  std::vector<SampleScore> samples;  // dataset order
  double mean = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Per-sample score for one metric. LLM is not handled here.
double score_sample(Metric metric, std::string_view prediction, const GroundTruth& gt,
                    double tau = kAnlsThreshold);

/// Throws DataError listing ids present on one side only, and
/// InvalidInputError for Metric::LLM (use judge_predictions).
ScoreReport score_predictions(std::span<const PredictionRecord> predictions,
                              std::span<const SampleRecord> dataset, Metric metric,
                              double tau = kAnlsThreshold);

struct JudgeReport {
  std::vector<std::pair<std::string, JudgeResult>> samples;  // dataset order
  double llm_score = 0.0;
  std::size_t backend_failures = 0;
  std::size_t parse_failures = 0;

  nlohmann::ordered_json to_json() const;
};

JudgeReport judge_predictions(std::span<const PredictionRecord> predictions,
                              std::span<const SampleRecord> dataset, TextBackend& backend,
                              std::string_view tmpl, const GenerationParams& params,
                              int concurrency = 1);

/// Backends described by a config section.
std::unique_ptr<VisionBackend> make_vision_backend(const BackendConfig& cfg);
std::unique_ptr<TextBackend> make_text_backend(const BackendConfig& cfg);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. The first
/// exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace damqa
