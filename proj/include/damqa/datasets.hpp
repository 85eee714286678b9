#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damqa/metrics.hpp"

namespace damqa {

/// One benchmark question in the canonical line format:
/// {"id", "image", "question", "answers", "question_type", "answer_kind", "dataset"}
struct SampleRecord {
  std::string id;
  std::string image;  // relative to the images root
  std::string question;
  std::vector<std::string> answers;
  std::optional<std::string> question_type;
  std::optional<std::string> answer_kind;
  std::string dataset;

  GroundTruth ground_truth() const;
  nlohmann::ordered_json to_json() const;
  bool operator==(const SampleRecord&) const = default;
};

struct LoadOptions {
  bool check_images = true;
};

/// Reads a canonical file. Blank lines are ignored. Throws DataError naming
/// the line for malformed JSON, missing or mistyped fields, empty answer
/// lists and duplicate ids, and listing the ids whose images do not exist
/// under `images_root`.
std::vector<SampleRecord> load_canonical(const std::filesystem::path& path,
                                         const std::filesystem::path& images_root,
                                         const LoadOptions& options = {});

void write_canonical(std::span<const SampleRecord> records, std::ostream& out);
void write_canonical(std::span<const SampleRecord> records, const std::filesystem::path& path);

enum class SourceFormat { DocVQA, TextVQA, ChartQA, ChartQAPro, InfographicVQA, VQAv2 };

std::optional<SourceFormat> parse_source_format(std::string_view name);
std::string_view source_format_name(SourceFormat f);

struct ConvertOptions {
  /// VQAv2 questions file when `in` holds only the annotations.
  std::optional<std::filesystem::path> questions;
  /// Question ids to keep (one per line, or a JSON array); VQAv2 only.
  std::optional<std::filesystem::path> subset_ids;
  /// Overrides the per-format directory prefixed to image names.
  std::optional<std::string> image_prefix;
};

struct ConvertResult {
  std::vector<SampleRecord> records;
  std::vector<std::string> warnings;
  std::size_t skipped = 0;              // schema mismatches
  std::size_t dropped_conversational = 0;
  std::size_t dropped_by_subset = 0;
};

/// Converts a benchmark's released annotation file (JSON document or JSON
/// lines) into canonical records. Records that do not fit the schema are
/// skipped with a warning; conversational ChartQAPro items are dropped.
ConvertResult convert(SourceFormat format, const std::filesystem::path& in,
                      const ConvertOptions& options = {});

}  // namespace damqa
