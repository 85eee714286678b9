#include <doctest.h>

#include <cstdlib>

#include "damqa/config.hpp"
#include "damqa/error.hpp"
#include "support.hpp"

using namespace damqa;
using nlohmann::json;

TEST_CASE("config defaults") {
  const RunConfig cfg;
  CHECK(cfg.mode == RunMode::Sliding);
  CHECK(cfg.resize_target == 1024);
  CHECK(cfg.window == 512);
  CHECK(cfg.stride == 256);
  CHECK(cfg.vote.unanswerable_weight_multiplier == 0.0);
  CHECK(cfg.vote.full_image_weight == 1.0);
  CHECK(cfg.generation.max_new_tokens == 32);
  CHECK(cfg.generation.num_beams == 1);
  CHECK(cfg.judge.generation.max_new_tokens == 256);
  CHECK(cfg.prompt.rule1_enabled);
  CHECK(cfg.prompt.rule2_enabled);
  CHECK(cfg.validate().empty());
}

TEST_CASE("config JSON round trip") {
  RunConfig cfg;
  cfg.mode = RunMode::Baseline;
  cfg.window = 256;
  cfg.stride = 128;
  cfg.prompt.rule2_enabled = false;
  cfg.vote.unanswerable_weight_multiplier = 0.5;
  cfg.generation.max_new_tokens = 64;
  cfg.backend.endpoint.base_url = "http://example:9000/v1";
  cfg.judge.backend.kind = BackendKind::Mock;
  cfg.judge.backend.fixture = "/tmp/f.json";
  cfg.concurrency = 4;
  const auto j = json::parse(cfg.to_json().dump());
  const auto back = RunConfig::from_json(j);
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.mode == RunMode::Baseline);
  CHECK(back.judge.backend.fixture == std::filesystem::path("/tmp/f.json"));
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"windw": 512})")), InvalidInputError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"vote": {"multiplier": 1}})")), InvalidInputError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"mode": "tiles"})")), InvalidInputError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"window": "big"})")), InvalidInputError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"backend": {"kind": "grpc"}})")), InvalidInputError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"([1, 2])")), InvalidInputError);
}

TEST_CASE("config validation") {
  RunConfig cfg;
  cfg.window = 2048;
  CHECK_THROWS_AS(cfg.validate(), InvalidInputError);
  cfg = RunConfig{};
  cfg.stride = 600;
  const auto warnings = cfg.validate();
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("stride") != std::string::npos);
  cfg = RunConfig{};
  cfg.concurrency = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInputError);
  cfg = RunConfig{};
  cfg.seedless = false;
  CHECK_THROWS_AS(cfg.validate(), InvalidInputError);
  cfg = RunConfig{};
  cfg.backend.kind = BackendKind::Mock;
  CHECK_THROWS_AS(cfg.validate(), InvalidInputError);
  cfg = RunConfig{};
  cfg.generation.temperature = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidInputError);
}

TEST_CASE("config files resolve relative paths and allow comments") {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "conf");
  testing::write_text(dir / "conf" / "run.json", R"({
    // mock run
    "backend": {"kind": "mock", "fixture": "fixtures/mock.json"},
    "judge": {"template": "/abs/judge.txt"}
  })");
  const auto cfg = RunConfig::load(dir / "conf" / "run.json");
  REQUIRE(cfg.backend.fixture);
  CHECK(*cfg.backend.fixture == dir / "conf" / "fixtures" / "mock.json");
  CHECK(*cfg.judge.template_path == std::filesystem::path("/abs/judge.txt"));
  CHECK_THROWS_AS(RunConfig::load(dir / "nope.json"), InvalidInputError);
  testing::write_text(dir / "broken.json", "{");
  CHECK_THROWS_AS(RunConfig::load(dir / "broken.json"), InvalidInputError);
}

TEST_CASE("environment overrides backend URLs") {
  RunConfig cfg;
  ::setenv("DAMQA_BACKEND_URL", "http://a:1", 1);
  ::setenv("DAMQA_JUDGE_URL", "", 1);
  apply_environment(cfg);
  CHECK(cfg.backend.endpoint.base_url == "http://a:1");
  CHECK(cfg.judge.backend.endpoint.base_url == RunConfig{}.judge.backend.endpoint.base_url);
  ::unsetenv("DAMQA_BACKEND_URL");
  ::unsetenv("DAMQA_JUDGE_URL");
}
