#include "damqa/sweep.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "damqa/error.hpp"
#include "damqa/text.hpp"

namespace fs = std::filesystem;

namespace damqa {

std::optional<SweepAxis> parse_sweep_axis(std::string_view name) {
  if (name == "window-stride") return SweepAxis::WindowStride;
  if (name == "unanswerable-weight") return SweepAxis::UnanswerableWeight;
  if (name == "prompt-rules") return SweepAxis::PromptRules;
  return std::nullopt;
}

std::string_view sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::WindowStride: return "window-stride";
    case SweepAxis::UnanswerableWeight: return "unanswerable-weight";
    case SweepAxis::PromptRules: return "prompt-rules";
  }
  return "unknown";
}

RunConfig SweepPoint::apply(RunConfig cfg) const {
  cfg.window = window;
  cfg.stride = stride;
  cfg.vote.unanswerable_weight_multiplier = weight;
  cfg.prompt.rule1_enabled = rule1;
  cfg.prompt.rule2_enabled = rule2;
  return cfg;
}

namespace {

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || v < 1) {
    throw InvalidInputError(std::string(what) + " must be a positive integer: " + std::string(s));
  }
  return v;
}

std::string weight_label(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", w);
  return buf;
}

}  // namespace

std::vector<SweepPoint> parse_sweep_values(SweepAxis axis, std::span<const std::string> values,
                                           const RunConfig& base) {
  std::vector<std::string> v(values.begin(), values.end());
  if (v.empty()) {
    switch (axis) {
      case SweepAxis::WindowStride: v = {"256x128", "512x256", "768x384"}; break;
      case SweepAxis::UnanswerableWeight: v = {"0", "0.5", "1", "1.5"}; break;
      case SweepAxis::PromptRules: v = {"--", "+-", "-+", "++"}; break;
    }
  }
  const SweepPoint defaults{"", base.window, base.stride, base.vote.unanswerable_weight_multiplier,
                            base.prompt.rule1_enabled, base.prompt.rule2_enabled};
  std::vector<SweepPoint> points;
  for (const auto& raw : v) {
    const auto value = text::trim(raw);
    SweepPoint p = defaults;
    switch (axis) {
      case SweepAxis::WindowStride: {
        const auto sep = value.find_first_of("x,");
        if (sep == std::string_view::npos) {
          throw InvalidInputError("window-stride value must look like 512x256: " + raw);
        }
        p.window = parse_int(value.substr(0, sep), "window");
        p.stride = parse_int(value.substr(sep + 1), "stride");
        p.label = std::to_string(p.window) + "x" + std::to_string(p.stride);
        break;
      }
      case SweepAxis::UnanswerableWeight: {
        double w = 0.0;
        const auto* end = value.data() + value.size();
        const auto [ptr, ec] = std::from_chars(value.data(), end, w);
        if (ec != std::errc{} || ptr != end || !(w >= 0.0) || !std::isfinite(w)) {
          throw InvalidInputError("unanswerable weight must be a non-negative number: " + raw);
        }
        p.weight = w;
        p.label = weight_label(w);
        break;
      }
      case SweepAxis::PromptRules: {
        if (value.size() != 2 || (value[0] != '+' && value[0] != '-') ||
            (value[1] != '+' && value[1] != '-')) {
          throw InvalidInputError("prompt-rules value must be one of --, +-, -+, ++: " + raw);
        }
        p.rule1 = value[0] == '+';
        p.rule2 = value[1] == '+';
        p.label = std::string(value);
        break;
      }
    }
    points.push_back(std::move(p));
  }
  return points;
}

namespace {

void summarize(SweepRow& row, const RunConfig& cfg, const std::optional<Metric>& metric,
               double tau, std::span<const SampleRecord> samples) {
  const auto rule = cfg.abstention();
  std::size_t views = 0, ok = 0;
  row.answered = row.abstained = row.fallbacks = 0;
  for (const auto& r : row.records) {
    if (r.error) continue;
    ++ok;
    views += r.views.size();
    if (is_unanswerable(r.final_answer, rule.token, rule.strict)) {
      ++row.abstained;
    } else {
      ++row.answered;
    }
    row.fallbacks += r.fallback_used;
  }
  row.mean_views = ok ? static_cast<double>(views) / ok : 0.0;
  row.grid_patches = enumerate_patches(cfg.resize_target, cfg.resize_target, row.point.window,
                                       row.point.stride)
                         .size();
  if (metric) row.score = score_predictions(row.records, samples, *metric, tau).mean;
}

std::string file_label(const SweepRow& row) {
  std::string s;
  for (char c : row.point.label) {
    s += (c == '+') ? 'p' : (c == '-') ? 'm' : c;
  }
  return s;
}

}  // namespace

SweepResult run_sweep(const RunConfig& base, SweepAxis axis, std::span<const SweepPoint> points,
                      std::span<const SampleRecord> samples, const fs::path& images_root,
                      VisionBackend& backend, PredictionCache& cache, const SweepOptions& options) {
  if (points.empty()) throw InvalidInputError("sweep needs at least one value");
  SweepResult result;
  result.axis = axis;

  std::optional<RunResult> shared;
  if (axis == SweepAxis::UnanswerableWeight) {
    shared = run_evaluation(base, samples, images_root, backend, &cache);
  }

  for (const auto& point : points) {
    const auto cfg = point.apply(base);
    SweepRow row;
    row.point = point;
    if (shared) {
      row.summary = shared->summary;
      row.records.reserve(shared->records.size());
      for (const auto& r : shared->records) row.records.push_back(reaggregate(r, cfg.vote));
    } else {
      auto run = run_evaluation(cfg, samples, images_root, backend, &cache);
      row.summary = run.summary;
      row.records = std::move(run.records);
    }
    summarize(row, cfg, options.metric, options.tau, samples);
    spdlog::info("sweep {} {}: {} answered, {} abstained, {} failed", sweep_axis_name(axis),
                 point.label, row.answered, row.abstained, row.summary.failed);
    result.rows.push_back(std::move(row));
  }

  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    for (const auto& row : result.rows) {
      write_predictions(row.records, *options.out_dir / (std::string(sweep_axis_name(axis)) + "-" +
                                                         file_label(row) + ".jsonl"));
    }
    std::ofstream out(*options.out_dir / "sweep.tsv", std::ios::binary);
    if (!out) throw DataError("cannot write sweep table in " + options.out_dir->string());
    out << result.table();
  }
  return result;
}

std::string SweepResult::table() const {
  std::ostringstream out;
  out << "value\twindow\tstride\tweight\trule1\trule2\tgrid_patches\tsamples\tfailed\t"
         "mean_views\tanswered\tabstained\tfallbacks\tscore\n";
  for (const auto& r : rows) {
    char views[32];
    std::snprintf(views, sizeof views, "%.3f", r.mean_views);
    out << r.point.label << '\t' << r.point.window << '\t' << r.point.stride << '\t'
        << weight_label(r.point.weight) << '\t' << (r.point.rule1 ? "on" : "off") << '\t'
        << (r.point.rule2 ? "on" : "off") << '\t' << r.grid_patches << '\t' << r.summary.total
        << '\t' << r.summary.failed << '\t' << views << '\t' << r.answered << '\t' << r.abstained
        << '\t' << r.fallbacks << '\t';
    if (r.score) {
      char score[32];
      std::snprintf(score, sizeof score, "%.4f", *r.score);
      out << score;
    } else {
      out << '-';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace damqa
