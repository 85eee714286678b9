#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <sys/wait.h>

#include "damqa/harness.hpp"
#include "support.hpp"

#ifndef DAMQA_CLI
#error "DAMQA_CLI must name the damqa executable"
#endif

using namespace damqa;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with `args`, capturing stdout. Stderr goes to a side file.
Outcome cli(const testing::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto cmd = quote(DAMQA_CLI) + " -q " + args + " > " + quote(out.string()) + " 2> " +
                   quote((dir / "stderr.txt").string());
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = fs::exists(out) ? testing::read_text(out) : "";
  return o;
}

struct Fixture {
  testing::TempDir dir;
  fs::path dataset;

  Fixture() {
    dataset = testing::write_fixture_dataset(dir.path());
    testing::write_text(dir / "config.json", testing::mock_config(dir / "mock.json").dump(2));
  }
  std::string images() const { return quote((dir / "images").string()); }
};

}  // namespace

TEST_CASE("cli usage errors exit 1") {
  testing::TempDir dir;
  CHECK(cli(dir, "").code == 1);
  CHECK(cli(dir, "frobnicate").code == 1);
  CHECK(cli(dir, "patches --width 10").code == 1);
  CHECK(cli(dir, "--help").code == 0);
}

TEST_CASE("cli patches") {
  testing::TempDir dir;
  auto o = cli(dir, "patches --width 1024 --height 1024");
  CHECK(o.code == 0);
  CHECK(std::count(o.out.begin(), o.out.end(), '\n') == 9);
  CHECK(o.out.rfind("0\t0\t512\t512\n", 0) == 0);
  o = cli(dir, "patches --width 1024 --height 1024 --window 256 --stride 128");
  CHECK(std::count(o.out.begin(), o.out.end(), '\n') == 49);
  o = cli(dir, "patches --width 1024 --height 358");
  CHECK(o.out == "0\t0\t1024\t358\n");
}

TEST_CASE("cli run, score, judge and audit") {
  Fixture f;
  const auto cfg = quote((f.dir / "config.json").string());
  const auto ds = quote(f.dataset.string());
  const auto preds = f.dir / "preds.jsonl";

  auto o = cli(f.dir, "run --config " + cfg + " --dataset " + ds + " --images " + f.images() +
                          " --out " + quote(preds.string()));
  REQUIRE(o.code == 0);
  const auto summary = json::parse(o.out);
  CHECK(summary["samples"] == 10);
  CHECK(summary["failed"] == 1);
  CHECK(read_predictions(preds).size() == 10);

  // Same bytes with more workers.
  const auto preds8 = f.dir / "preds8.jsonl";
  o = cli(f.dir, "run --config " + cfg + " --dataset " + ds + " --images " + f.images() +
                     " --concurrency 8 --out " + quote(preds8.string()));
  CHECK(o.code == 0);
  CHECK(testing::read_text(preds) == testing::read_text(preds8));

  o = cli(f.dir, "score --preds " + quote(preds.string()) + " --dataset " + ds + " --metric anls");
  REQUIRE(o.code == 0);
  const auto score = json::parse(o.out);
  CHECK(score["metric"] == "anls");
  CHECK(score["count"] == 10);
  CHECK(score["mean"].get<double>() > 0.0);
  CHECK(score["mean"].get<double>() < 1.0);

  CHECK(cli(f.dir, "score --preds " + quote(preds.string()) + " --dataset " + ds +
                       " --metric bleu").code == 1);
  CHECK(cli(f.dir, "score --preds " + quote(preds.string()) + " --dataset " + ds +
                       " --metric anls --tau 0").code == 1);

  testing::write_text(f.dir / "short.jsonl", "");
  CHECK(cli(f.dir, "score --preds " + quote((f.dir / "short.jsonl").string()) + " --dataset " +
                       ds + " --metric anls").code == 2);

  o = cli(f.dir, "judge --preds " + quote(preds.string()) + " --dataset " + ds + " --config " +
                     cfg + " --out " + quote((f.dir / "judge.json").string()));
  REQUIRE(o.code == 0);
  const auto judge = json::parse(o.out);
  CHECK(judge["mean"].get<double>() == doctest::Approx(0.8));
  CHECK(judge["parse_failures"] == 1);
  CHECK(fs::exists(f.dir / "judge.json"));

  CHECK(cli(f.dir, "audit --preds " + quote(preds.string()) + " --config " + cfg).code == 0);
  auto lines = read_predictions(preds);
  lines[0].final_answer = "tampered";
  write_predictions(lines, f.dir / "tampered.jsonl");
  o = cli(f.dir, "audit --preds " + quote((f.dir / "tampered.jsonl").string()));
  CHECK(o.code == 2);
  CHECK(o.out == "s00\n");
}

TEST_CASE("cli exits 3 when most samples fail") {
  Fixture f;
  testing::write_text(f.dir / "down.json", R"({"answers": {}})");
  testing::write_text(f.dir / "down_config.json",
                      testing::mock_config(f.dir / "down.json").dump());
  const auto o = cli(f.dir, "run --config " + quote((f.dir / "down_config.json").string()) +
                                " --dataset " + quote(f.dataset.string()) + " --images " +
                                f.images() + " --out " + quote((f.dir / "p.jsonl").string()));
  CHECK(o.code == 3);
  CHECK(read_predictions(f.dir / "p.jsonl").size() == 10);
}

TEST_CASE("cli run against an unreachable server exits 3") {
  Fixture f;
  json cfg = {{"backend", {{"base_url", "http://127.0.0.1:" + std::to_string(testing::free_port())},
                           {"max_retries", 0}, {"timeout_seconds", 2}}}};
  testing::write_text(f.dir / "http.json", cfg.dump());
  const auto o = cli(f.dir, "run --config " + quote((f.dir / "http.json").string()) +
                                " --dataset " + quote(f.dataset.string()) + " --images " +
                                f.images() + " --out " + quote((f.dir / "p.jsonl").string()));
  CHECK(o.code == 3);
}

TEST_CASE("cli convert and sweep") {
  Fixture f;
  testing::write_text(f.dir / "doc.json", R"({"data": [
    {"questionId": 1, "question": "a?", "answers": ["x"], "image": "s00.png"},
    {"questionId": 2, "question": "", "answers": ["y"], "image": "s01.png"}
  ]})");
  const auto out = f.dir / "canon.jsonl";
  auto o = cli(f.dir, "convert --format docvqa --in " + quote((f.dir / "doc.json").string()) +
                          " --out " + quote(out.string()));
  REQUIRE(o.code == 0);
  CHECK(json::parse(o.out)["records"] == 1);
  CHECK(load_canonical(out, f.dir / "images").size() == 1);
  CHECK(cli(f.dir, "convert --format stvqa --in " + quote((f.dir / "doc.json").string()) +
                       " --out " + quote(out.string())).code == 1);

  o = cli(f.dir, "sweep --config " + quote((f.dir / "config.json").string()) +
                     " --axis unanswerable-weight --values 0 1 --dataset " +
                     quote(f.dataset.string()) + " --images " + f.images() + " --out-dir " +
                     quote((f.dir / "sweep").string()) + " --metric anls");
  REQUIRE(o.code == 0);
  CHECK(std::count(o.out.begin(), o.out.end(), '\n') == 3);
  CHECK(fs::exists(f.dir / "sweep" / "sweep.tsv"));
  CHECK(cli(f.dir, "sweep --axis diagonal --dataset " + quote(f.dataset.string()) + " --images " +
                       f.images() + " --out-dir " + quote((f.dir / "x").string())).code == 1);
}

TEST_CASE("cli serve-mock answers the wire protocol") {
  Fixture f;
  // No per-sample entries: the server can only see pixels and prompt.
  testing::write_text(f.dir / "pool.json",
                      R"({"answer_pool": ["Paris", "London", "unanswerable", "7"],
                          "default_completion": "{\"matched\": 1, \"total\": 1}"})");
  const int port = testing::free_port();
  const auto pidfile = f.dir / "server.pid";
  const auto serve = quote(DAMQA_CLI) + " -q serve-mock --fixture " +
                     quote((f.dir / "pool.json").string()) + " --host 127.0.0.1 --port " +
                     std::to_string(port) + " > /dev/null 2>&1 & echo $! > " +
                     quote(pidfile.string());
  REQUIRE(std::system(serve.c_str()) == 0);

  httplib::Client probe("127.0.0.1", port);
  probe.set_connection_timeout(0, 200000);
  bool up = false;
  for (int i = 0; i < 100 && !up; ++i) {
    up = static_cast<bool>(probe.Get("/"));
    if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  CHECK(up);

  json http_cfg = {{"backend", {{"base_url", "http://127.0.0.1:" + std::to_string(port)},
                                {"timeout_seconds", 30}}},
                   {"judge", {{"backend", {{"base_url", "http://127.0.0.1:" + std::to_string(port)}}}}},
                   {"concurrency", 2}};
  testing::write_text(f.dir / "http.json", http_cfg.dump());
  const auto preds = f.dir / "http_preds.jsonl";
  const auto o = cli(f.dir, "run --config " + quote((f.dir / "http.json").string()) +
                                " --dataset " + quote(f.dataset.string()) + " --images " +
                                f.images() + " --out " + quote(preds.string()));
  const auto j = cli(f.dir, "judge --config " + quote((f.dir / "http.json").string()) +
                                " --preds " + quote(preds.string()) + " --dataset " +
                                quote(f.dataset.string()));

  const auto kill = "kill $(cat " + quote(pidfile.string()) + ")";
  CHECK(std::system(kill.c_str()) == 0);

  REQUIRE(o.code == 0);
  CHECK(json::parse(o.out)["failed"] == 0);
  CHECK(j.code == 0);
  CHECK(json::parse(j.out)["mean"] == 1.0);

  // In-process mock over the same fixture gives the same bytes.
  auto cfg = RunConfig::from_json(testing::mock_config(f.dir / "pool.json"));
  MockBackend local(MockFixture::load((f.dir / "pool.json").string()));
  const auto samples = load_canonical(f.dataset, f.dir / "images");
  const auto expected = run_evaluation(cfg, samples, f.dir / "images", local);
  std::ostringstream buf;
  write_predictions(expected.records, buf);
  CHECK(testing::read_text(preds) == buf.str());
}
