// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>
#include <sys/wait.h>

#include "damqa/aggregator.hpp"
#include "damqa/error.hpp"
#include "damqa/harness.hpp"
#include "damqa/judge.hpp"
#include "damqa/metrics.hpp"
#include "damqa/prompting.hpp"
#include "damqa/sweep.hpp"
#include "damqa/text.hpp"
#include "damqa/views.hpp"
#include "support.hpp"

#ifndef DAMQA_CLI
#error "DAMQA_CLI must name the damqa executable"
#endif

using namespace damqa;
namespace fs = std::filesystem;

namespace {

constexpr double kEnumerationBudget = 5.0;  // seconds
constexpr double kMetricBudget = 10.0;      // seconds
constexpr double kAnlsTolerance = 1e-4;
constexpr double kJudgeTolerance = 1e-12;

// Collects failure reasons for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ = failed_ || !ok;
  }
  bool ok() const { return !failed_; }
  std::string detail() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    return s;
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string tuple_text(int w, int h, int s, int t) {
  return "(" + std::to_string(w) + "," + std::to_string(h) + "," + std::to_string(s) + "," +
         std::to_string(t) + ")";
}

void enumeration(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  testing::Gen gen(2024);
  for (int i = 0; i < 200; ++i) {
    const int window = gen.integer(1, 700);
    const int stride = gen.integer(1, window + 100);
    const int w = gen.integer(1, 2100);
    const int h = gen.integer(1, 2100);
    c.expect(enumerate_patches(w, h, window, stride) ==
                 testing::brute_force_patches(w, h, window, stride),
             "oracle mismatch " + tuple_text(w, h, window, stride));
  }
  c.expect(enumerate_patches(1024, 1024, 512, 256).size() == 9, "1024x1024 count");
  const auto r = enumerate_patches(1000, 800, 512, 256);
  c.expect(r.size() == 9, "1000x800 count");
  std::set<int> xs, ys;
  for (const auto& p : r) {
    xs.insert(p.x);
    ys.insert(p.y);
  }
  c.expect(xs == std::set<int>{0, 256, 488} && ys == std::set<int>{0, 256, 288},
           "1000x800 residual positions");
  const auto small = enumerate_patches(400, 300, 512, 256);
  c.expect(small.size() == 1 && small[0] == PatchRect{0, 0, 400, 300}, "400x300 single view");
  c.expect(enumerate_patches(1024, 1024, 256, 128).size() == 49, "256/128 count");
  c.expect(enumerate_patches(1024, 1024, 512, 256).size() == 9, "512/256 count");
  c.expect(enumerate_patches(1024, 1024, 768, 384).size() == 4, "768/384 count");
  const double took = seconds_since(t0);
  c.expect(took < kEnumerationBudget, "took " + std::to_string(took) + " s");
}

void coverage(Check& c) {
  testing::Gen gen(99);
  int done = 0;
  while (done < 50) {
    const int window = gen.integer(16, 512);
    const int stride = gen.integer(1, window);
    const int w = gen.integer(window, 1400);
    const int h = gen.integer(window, 1400);
    const auto rects = enumerate_patches(w, h, window, stride);
    if (rects.size() < 2) continue;
    ++done;
    std::vector<unsigned char> hit(static_cast<std::size_t>(w) * h, 0);
    for (const auto& p : rects) {
      for (int y = p.y; y < p.y + p.height; ++y) {
        std::fill_n(hit.begin() + static_cast<std::ptrdiff_t>(y) * w + p.x, p.width, 1);
      }
    }
    c.expect(std::all_of(hit.begin(), hit.end(), [](unsigned char v) { return v == 1; }),
             "uncovered pixel " + tuple_text(w, h, window, stride));
  }
}

Prediction pred(const std::string& text, int index) {
  return make_prediction(index, text, AbstentionRule{"unanswerable", false});
}

void voting(Check& c) {
  testing::Gen gen(6);
  const std::vector<std::string> answers{"A", "B", "C", "b", "unanswerable", "Unanswerable."};
  constexpr long long kDen = 48;
  const VoteConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = gen.integer(0, 5);
    const auto full_text = gen.pick(answers);
    const auto full = pred(full_text, 0);
    std::vector<WeightedPrediction> patches;
    std::vector<testing::RationalView> oracle;
    for (int i = 0; i < n; ++i) {
      const auto p = pred(gen.pick(answers), i + 1);
      const long long num = p.is_unanswerable ? 0 : gen.integer(0, 24);
      patches.push_back({p, static_cast<double>(num) / kDen});
      oracle.push_back({p.answer, num});
    }
    const auto expected =
        testing::brute_force_vote(full.answer, full.is_unanswerable ? 0 : kDen, oracle);
    c.expect(vote(full, patches, cfg).answer == expected, "fixture " + std::to_string(trial));
    auto shuffled = patches;
    std::sort(shuffled.begin(), shuffled.end(), [](const auto& a, const auto& b) {
      return a.prediction.view_index < b.prediction.view_index;
    });
    do {
      c.expect(vote(full, shuffled, cfg).answer == expected,
               "permutation on fixture " + std::to_string(trial));
    } while (std::next_permutation(shuffled.begin(), shuffled.end(), [](const auto& a, const auto& b) {
      return a.prediction.view_index < b.prediction.view_index;
    }));
  }

  const std::vector<WeightedPrediction> abstaining{{pred("unanswerable", 1), 0.0},
                                                   {pred("Unanswerable.", 2), 0.0}};
  auto out = vote(pred("42", 0), abstaining, cfg);
  c.expect(out.answer == "42" && out.fallback_used, "fallback to the full answer");
  out = vote(pred("unanswerable", 0), abstaining, cfg);
  c.expect(out.answer == "unanswerable" && out.fallback_used, "fallback to an abstaining full view");
  out = vote(pred("x", 0), {}, cfg);
  c.expect(out.answer == "x", "no patches");
}

std::u32string u32(const std::string& s) {
  const auto cps = text::utf8_decode(s);
  return {cps.begin(), cps.end()};
}

void metric_suite(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  testing::Gen gen(1000);
  const std::vector<std::string> alphabet{"a", "b", "c", "é", "ß"};
  for (int i = 0; i < 1000; ++i) {
    const auto a = gen.string(alphabet, 6);
    const auto b = gen.string(alphabet, 6);
    c.expect(levenshtein(a, b) == testing::recursive_levenshtein(u32(a), u32(b)),
             "levenshtein \"" + a + "\" \"" + b + "\"");
  }

  const std::vector<std::string> doc{"Annual Report"};
  c.expect(anls_score("Annual Report", doc) == 1.0, "identical ANLS");
  const std::vector<std::string> sitting{"sitting"};
  c.expect(std::abs(anls_score("kitten", sitting) - 0.5714) <= kAnlsTolerance, "kitten/sitting");
  const std::vector<std::string> xyz{"xyz"};
  c.expect(anls_score("abc", xyz) == 0.0, "disjoint ANLS");

  const std::vector<std::string> words{"dog", "cat", "red", "blue"};
  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> refs;
    for (int k = 0; k < 10; ++k) refs.push_back(gen.pick(words));
    const auto guess = gen.coin() ? gen.pick(words) : std::string("zebra");
    const auto matches = std::count(refs.begin(), refs.end(), guess);
    const double expected = std::min(1.0, static_cast<double>(matches) / 3.0);
    const double got = vqa_score(guess, refs);
    const bool in_set = got == 0.0 || got == 1.0 || got == 1.0 / 3.0 || got == 2.0 / 3.0;
    c.expect(in_set && got == expected, "VQA fixture " + std::to_string(i));
  }

  struct Row {
    const char* name;
    std::string pred;
    GroundTruth gt;
    double expected;
  };
  const std::vector<Row> rows{
      {"MCQ hit", "B", {{"B"}, QuestionType::MCQ, {}}, 1.0},
      {"MCQ miss", "C", {{"B"}, QuestionType::MCQ, {}}, 0.0},
      {"fact-checking hit", "True", {{"True"}, QuestionType::FactChecking, {}}, 1.0},
      {"fact-checking miss", "False", {{"True"}, QuestionType::FactChecking, {}}, 0.0},
      {"year hit", "2019", {{"2019"}, {}, {}}, 1.0},
      {"year near miss", "2020", {{"2019"}, {}, {}}, 0.0},
      {"numeric within 5%", "104", {{"100"}, {}, {}}, 1.0},
      {"numeric outside 5%", "250", {{"100"}, {}, {}}, 0.0},
      {"numeric outside 5%, close string", "150", {{"100"}, {}, {}}, 2.0 / 3.0},
      {"text via ANLS", "kitten", {{"sitting"}, {}, {}}, 1.0 - 3.0 / 7.0},
      {"list mean", "[Asia, Africa]", {{"Asia", "Europe"}, {}, AnswerKind::List}, 0.5},
  };
  for (const auto& r : rows) {
    c.expect(std::abs(relaxed_accuracy_pro(r.pred, r.gt) - r.expected) < 1e-12, r.name);
  }
  c.expect(racc_pro_branch(QuestionType::MCQ, {}, "2019") == RAccProBranch::ExactChoice &&
               racc_pro_branch({}, {}, "2019") == RAccProBranch::ExactYear &&
               racc_pro_branch({}, {}, "3.5") == RAccProBranch::NumericTolerance &&
               racc_pro_branch({}, {}, "Asia") == RAccProBranch::Anls,
           "branch selection");
  const double took = seconds_since(t0);
  c.expect(took < kMetricBudget, "took " + std::to_string(took) + " s");
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run_cli(const std::string& args) {
  const auto cmd = quote(DAMQA_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(Check& c) {
  testing::TempDir dir;
  const auto dataset = testing::write_fixture_dataset(dir.path());
  testing::write_text(dir / "config.json", testing::mock_config(dir / "mock.json").dump());
  const auto base = "run --config " + quote((dir / "config.json").string()) + " --dataset " +
                    quote(dataset.string()) + " --images " + quote((dir / "images").string());
  c.expect(run_cli(base + " --out " + quote((dir / "a.jsonl").string())) == 0, "first run");
  c.expect(run_cli(base + " --out " + quote((dir / "b.jsonl").string())) == 0, "second run");
  c.expect(run_cli(base + " --concurrency 8 --out " + quote((dir / "c.jsonl").string())) == 0,
           "concurrent run");
  if (!c.ok()) return;
  const auto a = testing::read_text(dir / "a.jsonl");
  c.expect(!a.empty() && a == testing::read_text(dir / "b.jsonl"), "two runs differ");
  c.expect(a == testing::read_text(dir / "c.jsonl"), "concurrency 1 vs 8 differ");
  const auto records = read_predictions(dir / "a.jsonl");
  c.expect(records.size() == 10, "record count");
  const auto bad = audit(records, RunConfig{}.vote);
  c.expect(bad.empty(), "audit mismatches: " + std::to_string(bad.size()));
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

bool is_subsequence(const std::vector<std::string>& small, const std::vector<std::string>& big) {
  std::size_t j = 0;
  for (const auto& s : big) {
    if (j < small.size() && small[j] == s) ++j;
  }
  return j == small.size();
}

void prompt_grid(Check& c) {
  auto make = [](bool r1, bool r2) {
    PromptConfig cfg;
    cfg.rule1_enabled = r1;
    cfg.rule2_enabled = r2;
    return lines(build_vqa_prompt("What is the total?", cfg));
  };
  const auto nn = make(false, false), yn = make(true, false), ny = make(false, true),
             yy = make(true, true);
  c.expect(std::set<std::vector<std::string>>{nn, yn, ny, yy}.size() == 4, "variants not distinct");
  c.expect(is_subsequence(nn, yn) && is_subsequence(nn, ny), "no-rule prompt is not contained");
  c.expect(is_subsequence(yn, yy) && is_subsequence(ny, yy), "single-rule prompt is not contained");
  c.expect(!is_subsequence(yn, ny) && !is_subsequence(ny, yn), "single-rule prompts overlap");
  c.expect(nn.size() == 2 && yn.size() == 3 && ny.size() == 3 && yy.size() == 4, "segment counts");
  c.expect(nn.back() == "What is the total?" && yy.back() == nn.back(), "question is not last");
}

void weight_sweep(Check& c) {
  testing::TempDir dir;
  const auto samples =
      load_canonical(testing::write_fixture_dataset(dir.path()), dir / "images");
  const auto cfg = RunConfig::from_json(testing::mock_config(dir / "mock.json"));
  MockBackend backend(MockFixture::load((dir / "mock.json").string()));
  PredictionCache cache;
  const std::vector<std::string> values{"0", "0.5", "1", "1.5"};
  const auto points = parse_sweep_values(SweepAxis::UnanswerableWeight, values, cfg);
  const auto res = run_sweep(cfg, SweepAxis::UnanswerableWeight, points, samples,
                             dir / "images", backend, cache);
  c.expect(res.rows.size() == 4, "row count");
  std::string counts;
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    counts += (i ? "," : "") + std::to_string(res.rows[i].answered);
    if (i > 0) c.expect(res.rows[i].answered <= res.rows[i - 1].answered, "increase at row " + std::to_string(i));
  }
  c.expect(res.rows.front().answered > res.rows.back().answered, "no patch abstention effect: " + counts);
  const auto first_calls = backend.infer_calls();
  // A single pass feeds every weight.
  MockBackend single(MockFixture::load((dir / "mock.json").string()));
  PredictionCache fresh;
  run_evaluation(cfg, samples, dir / "images", single, &fresh);
  c.expect(first_calls == single.infer_calls(), "sweep re-ran inference");
}

// Replies from a fixed list in order; the last reply repeats.
class ScriptedBackend final : public TextBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const CompleteRequest&) override {
    return replies_[std::min(calls_++, replies_.size() - 1)];
  }

 private:
  std::vector<std::string> replies_;
  std::size_t calls_ = 0;
};

void judge(Check& c) {
  // Hand sum: 6*1 + 4*0 + 4*(1/2) + 3*(2/3) + 2*(3/4) + 1*(1/4) = 11.75.
  std::vector<JudgeVerdict> v;
  auto add = [&](int count, int m, int t) {
    for (int i = 0; i < count; ++i) v.push_back({m, t, ""});
  };
  add(6, 1, 1);
  add(4, 0, 1);
  add(4, 1, 2);
  add(3, 2, 3);
  add(2, 3, 4);
  add(1, 1, 4);
  c.expect(v.size() == 20, "verdict count");
  c.expect(std::abs(llm_score(v) - 11.75 / 20.0) <= kJudgeTolerance, "llm_score != 0.5875");

  ScriptedBackend garbage({"no verdict", "still none"});
  const std::vector<std::string> gts{"Paris"};
  const auto r = judge_sample("s", "Capital?", gts, "Paris", garbage, default_judge_template());
  c.expect(r.parse_error, "parse failure not flagged");
  c.expect(r.verdict.matched == 0 && r.verdict.total >= 1 && r.verdict.score() == 0.0,
           "parse failure not scored zero");
  v.push_back(r.verdict);
  c.expect(std::abs(llm_score(v) - 11.75 / 21.0) <= kJudgeTolerance,
           "parse failure not counted in the mean");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  struct Criterion {
    const char* name;
    std::function<void(Check&)> fn;
  };
  const std::vector<Criterion> criteria{
      {"patch enumeration", enumeration},
      {"patch coverage", coverage},
      {"voting oracle", voting},
      {"metric suite", metric_suite},
      {"end-to-end determinism", determinism},
      {"prompt ablation grid", prompt_grid},
      {"unanswerable-weight sweep", weight_sweep},
      {"judge scoring", judge},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    try {
      cr.fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    std::cout << (c.ok() ? "PASS" : "FAIL") << "  " << cr.name;
    if (!c.ok()) std::cout << "  (" << c.detail() << ")";
    std::cout << '\n';
    failed += !c.ok();
  }
  return failed == 0 ? 0 : 1;
}
