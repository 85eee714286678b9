// damqa: command-line front end for the evaluation harness.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "damqa/config.hpp"
#include "damqa/datasets.hpp"
#include "damqa/error.hpp"
#include "damqa/harness.hpp"
#include "damqa/mock_server.hpp"
#include "damqa/prompting.hpp"
#include "damqa/sweep.hpp"

namespace fs = std::filesystem;
using namespace damqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const std::string& path) {
  auto cfg = path.empty() ? RunConfig{} : RunConfig::load(path);
  apply_environment(cfg);
  return cfg;
}

void print_summary(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["samples"] = s.total;
  j["failed"] = s.failed;
  j["backend_calls"] = s.backend_calls;
  j["cache_hits"] = s.cache_hits;
  j["wall_seconds"] = s.wall_seconds;
  std::cout << j.dump() << '\n';
}

MockServer* g_server = nullptr;

extern "C" void handle_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-aware sliding-window VQA evaluation harness"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  // run
  struct {
    std::string config, dataset, images, out, cache;
    int concurrency = 0;
  } run;
  auto* run_cmd = app.add_subcommand("run", "Run inference and voting over a dataset");
  run_cmd->add_option("--config", run.config, "Run config (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("--dataset", run.dataset, "Canonical dataset (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--images", run.images, "Images root")->required()->check(CLI::ExistingDirectory);
  run_cmd->add_option("--out", run.out, "Predictions file to write")->required();
  run_cmd->add_option("--concurrency", run.concurrency, "Overrides the config")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--cache", run.cache, "View answer cache file (read and updated)");

  // score
  struct {
    std::string preds, dataset, metric, out;
    double tau = kAnlsThreshold;
  } score;
  auto* score_cmd = app.add_subcommand("score", "Score predictions against a dataset");
  score_cmd->add_option("--preds", score.preds)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--dataset", score.dataset)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--metric", score.metric, "anls | racc | racc-pro | vqas")->required();
  score_cmd->add_option("--tau", score.tau, "ANLS threshold")->capture_default_str();
  score_cmd->add_option("--out", score.out, "Per-sample report (JSON)");

  // judge
  struct {
    std::string preds, dataset, tmpl, config, out;
    int concurrency = 0;
  } judge;
  auto* judge_cmd = app.add_subcommand("judge", "LLM-as-a-judge scoring");
  judge_cmd->add_option("--preds", judge.preds)->required()->check(CLI::ExistingFile);
  judge_cmd->add_option("--dataset", judge.dataset)->required()->check(CLI::ExistingFile);
  judge_cmd->add_option("--template", judge.tmpl, "Judge prompt template")
      ->check(CLI::ExistingFile);
  judge_cmd->add_option("--config", judge.config, "Run config holding the judge section")
      ->check(CLI::ExistingFile);
  judge_cmd->add_option("--concurrency", judge.concurrency)->check(CLI::PositiveNumber);
  judge_cmd->add_option("--out", judge.out, "Per-sample report (JSON)");

  // patches
  struct {
    int width = 0, height = 0, window = kDefaultWindow, stride = kDefaultStride;
  } patches;
  auto* patches_cmd = app.add_subcommand("patches", "Print the sliding-window rects");
  patches_cmd->add_option("--width", patches.width)->required()->check(CLI::PositiveNumber);
  patches_cmd->add_option("--height", patches.height)->required()->check(CLI::PositiveNumber);
  patches_cmd->add_option("--window", patches.window)->capture_default_str()->check(CLI::PositiveNumber);
  patches_cmd->add_option("--stride", patches.stride)->capture_default_str()->check(CLI::PositiveNumber);

  // sweep
  struct {
    std::string config, axis, dataset, images, out_dir, metric, cache;
    std::vector<std::string> values;
    double tau = kAnlsThreshold;
  } sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweep over one axis");
  sweep_cmd->add_option("--config", sweep.config)->check(CLI::ExistingFile);
  sweep_cmd->add_option("--axis", sweep.axis, "window-stride | unanswerable-weight | prompt-rules")
      ->required();
  sweep_cmd->add_option("--values", sweep.values, "512x256 / 0.5 / +- ... (default grid if omitted)");
  sweep_cmd->add_option("--dataset", sweep.dataset)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--images", sweep.images)->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--out-dir", sweep.out_dir)->required();
  sweep_cmd->add_option("--metric", sweep.metric, "Score each row with this metric");
  sweep_cmd->add_option("--tau", sweep.tau)->capture_default_str();
  sweep_cmd->add_option("--cache", sweep.cache, "View answer cache file (read and updated)");

  // convert
  struct {
    std::string format, in, out, questions, subset_ids, image_prefix;
  } conv;
  auto* convert_cmd = app.add_subcommand("convert", "Convert benchmark annotations to canonical form");
  convert_cmd->add_option("--format", conv.format,
                          "docvqa | textvqa | chartqa | chartqapro | infographicvqa | vqav2")
      ->required();
  convert_cmd->add_option("--in", conv.in)->required()->check(CLI::ExistingFile);
  convert_cmd->add_option("--out", conv.out)->required();
  convert_cmd->add_option("--questions", conv.questions, "VQAv2 questions file")
      ->check(CLI::ExistingFile);
  convert_cmd->add_option("--subset-ids", conv.subset_ids, "VQAv2 question ids to keep")
      ->check(CLI::ExistingFile);
  convert_cmd->add_option("--image-prefix", conv.image_prefix, "Directory prefixed to image names");

  // audit
  struct {
    std::string preds, config;
  } aud;
  auto* audit_cmd = app.add_subcommand("audit", "Check final answers re-aggregate from stored views");
  audit_cmd->add_option("--preds", aud.preds)->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--config", aud.config)->check(CLI::ExistingFile);

  // serve-mock
  struct {
    std::string fixture, host = "127.0.0.1";
    int port = 8000;
  } serve;
  auto* serve_cmd = app.add_subcommand("serve-mock", "Serve the wire protocol from a fixture");
  serve_cmd->add_option("--fixture", serve.fixture)->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port)->capture_default_str()->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto logger = spdlog::stderr_logger_mt("damqa");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*run_cmd) {
      auto cfg = load_config(run.config);
      if (run.concurrency > 0) cfg.concurrency = run.concurrency;
      const auto samples = load_canonical(run.dataset, run.images);
      auto backend = make_vision_backend(cfg.backend);
      PredictionCache cache;
      if (!run.cache.empty()) cache.load(run.cache);
      const auto result = run_evaluation(cfg, samples, run.images, *backend, &cache);
      write_predictions(result.records, fs::path(run.out));
      if (!run.cache.empty()) cache.save(run.cache);
      print_summary(result.summary);
      if (result.summary.failure_threshold_exceeded()) {
        spdlog::error("{} of {} samples failed", result.summary.failed, result.summary.total);
        return kExitBackend;
      }
      return kExitOk;
    }

    if (*score_cmd) {
      const auto metric = parse_metric(score.metric);
      if (!metric || *metric == Metric::LLM) {
        std::cerr << "unknown metric '" << score.metric << "' (anls, racc, racc-pro, vqas)\n";
        return kExitUsage;
      }
      const auto samples = load_canonical(score.dataset, {}, LoadOptions{.check_images = false});
      const auto preds = read_predictions(score.preds);
      const auto report = score_predictions(preds, samples, *metric, score.tau);
      if (!score.out.empty()) {
        std::ofstream out(score.out, std::ios::binary);
        out << report.to_json().dump(2) << '\n';
      }
      nlohmann::ordered_json j;
      j["metric"] = metric_name(*metric);
      j["count"] = report.samples.size();
      j["mean"] = report.mean;
      std::cout << j.dump() << '\n';
      return kExitOk;
    }

    if (*judge_cmd) {
      auto cfg = load_config(judge.config);
      if (judge.concurrency > 0) cfg.concurrency = judge.concurrency;
      if (!judge.tmpl.empty()) cfg.judge.template_path = judge.tmpl;
      const auto tmpl = cfg.judge.template_path ? read_file(*cfg.judge.template_path)
                                                : std::string(default_judge_template());
      const auto samples = load_canonical(judge.dataset, {}, LoadOptions{.check_images = false});
      const auto preds = read_predictions(judge.preds);
      auto backend = make_text_backend(cfg.judge.backend);
      const auto report = judge_predictions(preds, samples, *backend, tmpl, cfg.judge.generation,
                                            cfg.concurrency);
      if (!judge.out.empty()) {
        std::ofstream out(judge.out, std::ios::binary);
        out << report.to_json().dump(2) << '\n';
      }
      nlohmann::ordered_json j;
      j["metric"] = "llm";
      j["count"] = report.samples.size();
      j["mean"] = report.llm_score;
      j["backend_failures"] = report.backend_failures;
      j["parse_failures"] = report.parse_failures;
      std::cout << j.dump() << '\n';
      if (!report.samples.empty() && report.backend_failures * 2 > report.samples.size()) {
        return kExitBackend;
      }
      return kExitOk;
    }

    if (*patches_cmd) {
      const auto rects =
          enumerate_patches(patches.width, patches.height, patches.window, patches.stride);
      for (const auto& r : rects) {
        std::cout << r.x << '\t' << r.y << '\t' << r.width << '\t' << r.height << '\n';
      }
      spdlog::info("{} patches", rects.size());
      return kExitOk;
    }

    if (*sweep_cmd) {
      const auto axis = parse_sweep_axis(sweep.axis);
      if (!axis) {
        std::cerr << "unknown axis '" << sweep.axis
                  << "' (window-stride, unanswerable-weight, prompt-rules)\n";
        return kExitUsage;
      }
      SweepOptions options;
      options.tau = sweep.tau;
      options.out_dir = sweep.out_dir;
      if (!sweep.metric.empty()) {
        options.metric = parse_metric(sweep.metric);
        if (!options.metric || *options.metric == Metric::LLM) {
          std::cerr << "unknown metric '" << sweep.metric << "'\n";
          return kExitUsage;
        }
      }
      const auto cfg = load_config(sweep.config);
      const auto points = parse_sweep_values(*axis, sweep.values, cfg);
      const auto samples = load_canonical(sweep.dataset, sweep.images);
      auto backend = make_vision_backend(cfg.backend);
      PredictionCache cache;
      if (!sweep.cache.empty()) cache.load(sweep.cache);
      const auto result =
          run_sweep(cfg, *axis, points, samples, sweep.images, *backend, cache, options);
      if (!sweep.cache.empty()) cache.save(sweep.cache);
      std::cout << result.table();
      for (const auto& row : result.rows) {
        if (row.summary.failure_threshold_exceeded()) return kExitBackend;
      }
      return kExitOk;
    }

    if (*convert_cmd) {
      const auto format = parse_source_format(conv.format);
      if (!format) {
        std::cerr << "unknown format '" << conv.format << "'\n";
        return kExitUsage;
      }
      ConvertOptions options;
      if (!conv.questions.empty()) options.questions = conv.questions;
      if (!conv.subset_ids.empty()) options.subset_ids = conv.subset_ids;
      if (!conv.image_prefix.empty()) options.image_prefix = conv.image_prefix;
      const auto result = convert(*format, conv.in, options);
      write_canonical(result.records, fs::path(conv.out));
      nlohmann::ordered_json j;
      j["records"] = result.records.size();
      j["skipped"] = result.skipped;
      j["dropped_conversational"] = result.dropped_conversational;
      j["dropped_by_subset"] = result.dropped_by_subset;
      std::cout << j.dump() << '\n';
      return kExitOk;
    }

    if (*audit_cmd) {
      const auto cfg = load_config(aud.config);
      const auto preds = read_predictions(aud.preds);
      const auto bad = audit(preds, cfg.vote);
      for (const auto& id : bad) std::cout << id << '\n';
      spdlog::info("{} of {} records reproduced", preds.size() - bad.size(), preds.size());
      return bad.empty() ? kExitOk : kExitData;
    }

    if (*serve_cmd) {
      MockBackend backend(MockFixture::load(serve.fixture));
      MockServer server(backend);
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      spdlog::info("serving {} on {}:{}", serve.fixture, serve.host, serve.port);
      server.serve(serve.host, serve.port);
      g_server = nullptr;
      return kExitOk;
    }
  } catch (const BackendUnavailableError& e) {
    spdlog::error("{}", e.what());
    return kExitBackend;
  } catch (const ProtocolError& e) {
    spdlog::error("{}", e.what());
    return kExitBackend;
  } catch (const InvalidInputError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const TemplateError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}
