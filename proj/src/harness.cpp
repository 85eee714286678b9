#include "damqa/harness.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "damqa/digest.hpp"
#include "damqa/error.hpp"
#include "damqa/image_io.hpp"
#include "damqa/prompting.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace damqa {

// Records ---------------------------------------------------------------------

ordered_json PredictionRecord::to_json() const {
  ordered_json j;
  j["id"] = id;
  j["final_answer"] = final_answer;
  j["full_answer"] = full_answer;
  j["image_width"] = image_width;
  j["image_height"] = image_height;
  auto& vs = j["views"] = ordered_json::array();
  for (const auto& v : views) {
    vs.push_back({{"index", v.index},
                  {"x", v.rect.x},
                  {"y", v.rect.y},
                  {"w", v.rect.width},
                  {"h", v.rect.height},
                  {"answer", v.answer},
                  {"unanswerable", v.unanswerable},
                  {"weight", v.weight}});
  }
  j["votes"] = ordered_json::object();
  for (const auto& [answer, score] : votes) j["votes"][answer] = score;
  j["fallback_used"] = fallback_used;
  j["error"] = error ? ordered_json(*error) : ordered_json(nullptr);
  return j;
}

PredictionRecord PredictionRecord::from_json(const json& j) {
  PredictionRecord r;
  r.id = j.at("id").get<std::string>();
  r.final_answer = j.at("final_answer").get<std::string>();
  r.full_answer = j.at("full_answer").get<std::string>();
  r.image_width = j.at("image_width").get<int>();
  r.image_height = j.at("image_height").get<int>();
  for (const auto& v : j.at("views")) {
    ViewRecord view;
    view.index = v.at("index").get<int>();
    view.rect = {v.at("x").get<int>(), v.at("y").get<int>(), v.at("w").get<int>(),
                 v.at("h").get<int>()};
    view.answer = v.at("answer").get<std::string>();
    view.unanswerable = v.at("unanswerable").get<bool>();
    view.weight = v.at("weight").get<double>();
    r.views.push_back(std::move(view));
  }
  for (const auto& [answer, score] : j.at("votes").items()) r.votes[answer] = score.get<double>();
  r.fallback_used = j.at("fallback_used").get<bool>();
  if (const auto it = j.find("error"); it != j.end() && !it->is_null()) {
    r.error = it->get<std::string>();
  }
  return r;
}

void write_predictions(std::span<const PredictionRecord> records, std::ostream& out) {
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

void write_predictions(std::span<const PredictionRecord> records, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions: " + path.string());
  write_predictions(records, out);
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions: " + path.string());
  std::vector<PredictionRecord> records;
  std::string buffer;
  std::size_t line = 0;
  while (std::getline(in, buffer)) {
    ++line;
    if (buffer.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(PredictionRecord::from_json(json::parse(buffer)));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
  }
  return records;
}

// Cache -----------------------------------------------------------------------

std::string PredictionCache::key(std::string_view sample_id, int image_width, int image_height,
                                 const PatchRect& rect, std::string_view prompt_digest,
                                 std::string_view generation_digest) {
  return json::array({sample_id, image_width, image_height, rect.x, rect.y, rect.width,
                      rect.height, prompt_digest, generation_digest})
      .dump();
}

std::optional<std::string> PredictionCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  ++hits_;
  return it->second;
}

void PredictionCache::put(const std::string& key, std::string raw_answer) {
  std::lock_guard lock(mutex_);
  entries_.insert_or_assign(key, std::move(raw_answer));
}

std::size_t PredictionCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t PredictionCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

void PredictionCache::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string buffer;
  std::size_t line = 0;
  std::lock_guard lock(mutex_);
  while (std::getline(in, buffer)) {
    ++line;
    if (buffer.empty()) continue;
    const auto j = json::parse(buffer, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j["key"].is_string() ||
        !j.contains("answer") || !j["answer"].is_string()) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": bad cache entry");
    }
    entries_.insert_or_assign(j["key"].get<std::string>(), j["answer"].get<std::string>());
  }
}

void PredictionCache::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write cache: " + path.string());
  std::lock_guard lock(mutex_);
  for (const auto& [k, v] : entries_) {
    ordered_json j;
    j["key"] = k;
    j["answer"] = v;
    out << j.dump() << '\n';
  }
}

std::string generation_digest(const GenerationParams& params) {
  return sha256_hex(params.to_json().dump());
}

// Pipeline --------------------------------------------------------------------

namespace {

// Votes over the record's views and fills in weights, votes and the answer.
void apply_vote(PredictionRecord& rec, const VoteConfig& vote_cfg) {
  const auto& full_view = rec.views.front();
  const Prediction full{full_view.index, full_view.answer, full_view.answer,
                        full_view.unanswerable};
  std::vector<WeightedPrediction> patches;
  patches.reserve(rec.views.size() - 1);
  for (std::size_t i = 1; i < rec.views.size(); ++i) {
    auto& v = rec.views[i];
    v.weight = patch_weight(v.rect, rec.image_width, rec.image_height, v.unanswerable, vote_cfg);
    patches.push_back({Prediction{v.index, v.answer, v.answer, v.unanswerable}, v.weight});
  }
  rec.views.front().weight =
      (!full.is_unanswerable || vote_cfg.strict_full_unanswerable) ? vote_cfg.full_image_weight
                                                                       : 0.0;
  const auto outcome = vote(full, patches, vote_cfg);
  rec.final_answer = outcome.answer;
  rec.full_answer = full.answer;
  rec.fallback_used = outcome.fallback_used;
  rec.votes.clear();
  for (const auto& [key, score] : outcome.tally.scores) {
    const auto s = outcome.tally.surface.find(key);
    rec.votes[s == outcome.tally.surface.end() ? key : s->second] = score;
  }
}

PredictionRecord failed(PredictionRecord rec, std::string error) {
  rec.final_answer.clear();
  rec.full_answer.clear();
  rec.views.clear();
  rec.votes.clear();
  rec.fallback_used = false;
  rec.error = std::move(error);
  return rec;
}

}  // namespace

PredictionRecord evaluate_sample(const RunConfig& cfg, const SampleRecord& sample,
                                 const fs::path& images_root, VisionBackend& backend,
                                 PredictionCache* cache, std::size_t* backend_calls) {
  PredictionRecord rec;
  rec.id = sample.id;

  ImageBuffer resized;
  try {
    resized = resize_longest_side(load_image(images_root / sample.image), cfg.resize_target);
  } catch (const Error& e) {
    return failed(std::move(rec), std::string("image: ") + e.what());
  }
  rec.image_width = resized.width;
  rec.image_height = resized.height;

  const auto views = cfg.mode == RunMode::Baseline
                         ? std::vector<View>{make_full_view(resized)}
                         : make_views(resized, cfg.window, cfg.stride);
  const auto prompt = build_vqa_prompt(sample.question, cfg.prompt);
  const auto prompt_sha = sha256_hex(prompt);
  const auto gen_sha = generation_digest(cfg.generation);
  const auto rule = cfg.abstention();

  for (const auto& view : views) {
    std::string key;
    std::optional<std::string> raw;
    if (cache) {
      key = PredictionCache::key(sample.id, rec.image_width, rec.image_height, view.rect,
                                 prompt_sha, gen_sha);
      raw = cache->get(key);
    }
    if (!raw) {
      try {
        raw = backend.infer(InferRequest{sample.id, view, prompt, cfg.generation});
      } catch (const BackendUnavailableError& e) {
        return failed(std::move(rec), std::string("backend: ") + e.what());
      } catch (const ProtocolError& e) {
        return failed(std::move(rec), std::string("protocol: ") + e.what());
      }
      if (backend_calls) ++*backend_calls;
      if (cache) cache->put(key, *raw);
    }
    const auto p = make_prediction(view.index, std::move(*raw), rule);
    rec.views.push_back(ViewRecord{view.index, view.rect, p.answer, p.is_unanswerable, 0.0});
  }
  apply_vote(rec, cfg.vote);
  return rec;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (count <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    threads.emplace_back([&] {
      while (!stop.load()) {
        const auto i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          stop = true;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

RunResult run_evaluation(const RunConfig& cfg, std::span<const SampleRecord> samples,
                         const fs::path& images_root, VisionBackend& backend,
                         PredictionCache* cache) {
  for (const auto& w : cfg.validate()) spdlog::warn("{}", w);
  backend.probe();

  const auto start = std::chrono::steady_clock::now();
  const auto hits_before = cache ? cache->hits() : 0;
  RunResult result;
  result.records.resize(samples.size());
  std::atomic<std::size_t> calls{0};
  std::atomic<std::size_t> done{0};

  parallel_for(samples.size(), cfg.concurrency, [&](std::size_t i) {
    std::size_t local_calls = 0;
    result.records[i] = evaluate_sample(cfg, samples[i], images_root, backend, cache, &local_calls);
    calls += local_calls;
    if (result.records[i].error) {
      spdlog::warn("sample {} failed: {}", samples[i].id, *result.records[i].error);
    }
    const auto n = ++done;
    if (n % 50 == 0 || n == samples.size()) {
      spdlog::info("{}/{} samples", n, samples.size());
    }
  });

  auto& s = result.summary;
  s.total = samples.size();
  for (const auto& r : result.records) s.failed += r.error.has_value();
  s.backend_calls = calls.load();
  s.cache_hits = cache ? cache->hits() - hits_before : 0;
  s.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

PredictionRecord reaggregate(const PredictionRecord& record, const VoteConfig& vote_cfg) {
  if (record.error || record.views.empty()) return record;
  auto out = record;
  apply_vote(out, vote_cfg);
  return out;
}

std::vector<std::string> audit(std::span<const PredictionRecord> records,
                               const VoteConfig& vote_cfg) {
  std::vector<std::string> mismatched;
  for (const auto& r : records) {
    if (reaggregate(r, vote_cfg).final_answer != r.final_answer) mismatched.push_back(r.id);
  }
  return mismatched;
}

// Scoring ---------------------------------------------------------------------

namespace {

// Index of each dataset record by id, after checking both sides hold the
// same ids.
std::unordered_map<std::string, const PredictionRecord*> match_ids(
    std::span<const PredictionRecord> predictions, std::span<const SampleRecord> dataset) {
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.id, &p).second) throw DataError("duplicate prediction id " + p.id);
  }
  std::set<std::string> known;
  std::vector<std::string> unpredicted;
  for (const auto& s : dataset) {
    known.insert(s.id);
    if (!by_id.contains(s.id)) unpredicted.push_back(s.id);
  }
  std::vector<std::string> unknown;
  for (const auto& p : predictions) {
    if (!known.contains(p.id)) unknown.push_back(p.id);
  }
  if (unknown.empty() && unpredicted.empty()) return by_id;

  const auto list = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += " " + ids[i];
    if (ids.size() > 20) s += " ...";
    return s;
  };
  std::string msg = "prediction ids do not match the dataset.";
  if (!unknown.empty()) {
    msg += " Not in dataset (" + std::to_string(unknown.size()) + "):" + list(unknown) + ".";
  }
  if (!unpredicted.empty()) {
    msg += " Missing predictions (" + std::to_string(unpredicted.size()) + "):" +
           list(unpredicted) + ".";
  }
  throw DataError(msg);
}

}  // namespace

double score_sample(Metric metric, std::string_view prediction, const GroundTruth& gt, double tau) {
  switch (metric) {
    case Metric::ANLS:
      return anls_score(prediction, gt.answers, tau);
    case Metric::RAcc: {
      int best = 0;
      for (const auto& a : gt.answers) best = std::max(best, relaxed_accuracy_chartqa(prediction, a));
      return best;
    }
    case Metric::RAccPro:
      return relaxed_accuracy_pro(prediction, gt, tau);
    case Metric::VQAS:
      return vqa_score(prediction, gt.answers);
    case Metric::LLM:
      break;
  }
  throw InvalidInputError("the llm metric is computed by the judge command");
}

ordered_json ScoreReport::to_json() const {
  ordered_json j;
  j["metric"] = metric_name(metric);
  j["tau"] = tau;
  j["count"] = samples.size();
  j["mean"] = mean;
  auto& arr = j["samples"] = ordered_json::array();
  for (const auto& s : samples) arr.push_back({{"id", s.id}, {"score", s.score}});
  return j;
}

ScoreReport score_predictions(std::span<const PredictionRecord> predictions,
                              std::span<const SampleRecord> dataset, Metric metric, double tau) {
  if (metric == Metric::LLM) {
    throw InvalidInputError("the llm metric is computed by the judge command");
  }
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidInputError("tau must be in (0, 1]");
  const auto by_id = match_ids(predictions, dataset);
  ScoreReport report;
  report.metric = metric;
  report.tau = tau;
  std::vector<double> values;
  for (const auto& s : dataset) {
    const auto& p = *by_id.at(s.id);
    const double v = p.error ? 0.0 : score_sample(metric, p.final_answer, s.ground_truth(), tau);
    report.samples.push_back({s.id, v});
    values.push_back(v);
  }
  report.mean = values.empty() ? 0.0 : aggregate(values);
  return report;
}

ordered_json JudgeReport::to_json() const {
  ordered_json j;
  j["metric"] = "llm";
  j["count"] = samples.size();
  j["llm_score"] = llm_score;
  j["backend_failures"] = backend_failures;
  j["parse_failures"] = parse_failures;
  auto& arr = j["samples"] = ordered_json::array();
  for (const auto& [id, r] : samples) {
    ordered_json s;
    s["id"] = id;
    s["matched"] = r.verdict.matched;
    s["total"] = r.verdict.total;
    s["score"] = r.verdict.score();
    s["backend_failed"] = r.backend_failed;
    s["parse_error"] = r.parse_error;
    s["error"] = r.error.empty() ? ordered_json(nullptr) : ordered_json(r.error);
    arr.push_back(std::move(s));
  }
  return j;
}

JudgeReport judge_predictions(std::span<const PredictionRecord> predictions,
                              std::span<const SampleRecord> dataset, TextBackend& backend,
                              std::string_view tmpl, const GenerationParams& params,
                              int concurrency) {
  const auto by_id = match_ids(predictions, dataset);
  JudgeReport report;
  report.samples.resize(dataset.size());
  parallel_for(dataset.size(), concurrency, [&](std::size_t i) {
    const auto& s = dataset[i];
    const auto& p = *by_id.at(s.id);
    auto& [id, result] = report.samples[i];
    id = s.id;
    if (p.error) {
      result.verdict = JudgeVerdict{0, 1, {}};
      result.error = "no prediction: " + *p.error;
      return;
    }
    result = judge_sample(s.id, s.question, s.answers, p.final_answer, backend, tmpl, params);
  });
  std::vector<JudgeVerdict> verdicts;
  for (const auto& [id, r] : report.samples) {
    report.backend_failures += r.backend_failed;
    report.parse_failures += r.parse_error;
    if (r.backend_failed) spdlog::warn("judge backend failed for {}: {}", id, r.error);
    if (r.parse_error) spdlog::warn("judge reply for {} unparseable", id);
    verdicts.push_back(r.verdict);
  }
  report.llm_score = verdicts.empty() ? 0.0 : llm_score(verdicts);
  return report;
}

// Backends --------------------------------------------------------------------

std::unique_ptr<VisionBackend> make_vision_backend(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::Mock) {
    if (!cfg.fixture) throw InvalidInputError("mock backend requires a fixture file");
    return std::make_unique<MockBackend>(MockFixture::load(cfg.fixture->string()));
  }
  return std::make_unique<HttpBackend>(cfg.endpoint);
}

std::unique_ptr<TextBackend> make_text_backend(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::Mock) {
    if (!cfg.fixture) throw InvalidInputError("mock backend requires a fixture file");
    return std::make_unique<MockBackend>(MockFixture::load(cfg.fixture->string()));
  }
  return std::make_unique<HttpBackend>(cfg.endpoint);
}

}  // namespace damqa
