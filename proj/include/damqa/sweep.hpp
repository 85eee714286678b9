#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "damqa/harness.hpp"

namespace damqa {

enum class SweepAxis { WindowStride, UnanswerableWeight, PromptRules };

std::optional<SweepAxis> parse_sweep_axis(std::string_view name);
std::string_view sweep_axis_name(SweepAxis axis);

/// One value of a sweep axis applied to a base config.
struct SweepPoint {
  std::string label;
  int window = kDefaultWindow;
  int stride = kDefaultStride;
  double weight = 0.0;
  bool rule1 = true;
  bool rule2 = true;

  RunConfig apply(RunConfig cfg) const;
};

/// Parses axis values: "512x256" (or "512,256") for window-stride, a
/// non-negative number for unanswerable-weight, and "--", "+-", "-+", "++"
/// (rule 1, rule 2) for prompt-rules. No values means the default grid.
std::vector<SweepPoint> parse_sweep_values(SweepAxis axis, std::span<const std::string> values,
                                           const RunConfig& base);

struct SweepRow {
  SweepPoint point;
  std::size_t grid_patches = 0;  // patches on a resize_target x resize_target image
  RunSummary summary;
  double mean_views = 0.0;
  std::size_t answered = 0;   // final answer is not the abstention token
  std::size_t abstained = 0;
  std::size_t fallbacks = 0;
  std::optional<double> score;
  std::vector<PredictionRecord> records;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::WindowStride;
  std::vector<SweepRow> rows;

  /// Tab-separated comparison table with a header line.
  std::string table() const;
};

struct SweepOptions {
  std::optional<Metric> metric;
  double tau = kAnlsThreshold;
  /// Receives sweep.tsv and one predictions file per row when set.
  std::optional<std::filesystem::path> out_dir;
};

/// Window-stride and prompt-rules points each run the pipeline (the cache
/// lets full-view answers be reused across window settings). The
/// unanswerable-weight axis runs once and re-aggregates the stored views
/// for every weight.
SweepResult run_sweep(const RunConfig& base, SweepAxis axis, std::span<const SweepPoint> points,
                      std::span<const SampleRecord> samples,
                      const std::filesystem::path& images_root, VisionBackend& backend,
                      PredictionCache& cache, const SweepOptions& options = {});

}  // namespace damqa
