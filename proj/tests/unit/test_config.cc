#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ttspo/config.h"
#include "ttspo/error.h"

using namespace ttspo;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const ExperimentConfig c = config_from_json(json::object());
    CHECK_NOTHROW(c.validate());
    CHECK(c.reward_variant == "clean");
    CHECK(c.grpo.reward.weights.lambda_c == 0.6);
    CHECK(c.grpo.reward.weights.lambda_ell == 0.4);
    CHECK_FALSE(c.grpo.reward.weights.lambda_s.has_value());
    CHECK(c.grpo.reward.temps.tau_c == 1.0);
    CHECK(c.grpo.reward.temps.tau_ell == 2.0);
    CHECK(c.grpo.group_size == 8);
    CHECK(c.dpo.beta == 0.1);
    CHECK(c.dpo.pairs_per_round == 200);
    CHECK(c.elo.k_factor == 32);
    CHECK(c.elo.initial_rating == 1000);
    CHECK(c.judge.kind == JudgeKind::kOracle);
    CHECK(c.judge.oracle.cer_gate == 0.3);
    CHECK(c.dpo_start == "base");
  }

  TEST_CASE("sim variant and lambda arity") {
    const auto sim = config_from_json(json{{"reward", {{"variant", "sim"}}}});
    CHECK(sim.grpo.reward.weights.lambda_s == 0.2);
    CHECK(sim.grpo.reward.weights.lambda_c == 0.5);
    CHECK_THROWS_AS(config_from_json(json{{"reward", {{"variant", "sim"}, {"lambda", {0.5, 0.5}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(
        config_from_json(json{{"reward", {{"variant", "clean"}, {"lambda", {0.5, 0.3, 0.2}}}}}),
        ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"reward", {{"variant", "loud"}}}}), ConfigError);
    const auto custom =
        config_from_json(json{{"reward", {{"variant", "sim"}, {"lambda", {0.4, 0.4, 0.2}}}}});
    CHECK(custom.grpo.reward.weights.lambda_c == 0.4);
    CHECK_NOTHROW(custom.validate());
  }

  TEST_CASE("rejects bad input") {
    CHECK_THROWS_AS(config_from_json(json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"grpo", {{"lr", 1}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"grpo", {{"steps", "many"}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"schema_version", 2}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"judge", {{"kind", "crowd"}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"env", {{"preset", "nope"}}}}), ConfigError);

    auto c = config_from_json(json{{"grpo", {{"max_len", 100}}}});
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"judge", {{"noise_prob", 0.6}}}});
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"dpo", {{"start", "middle"}}}});
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"scorer_checkpoint", "/no/such/file.bin"}});
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"elo", {{"k_factor", 0}}}});
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("json round-trip") {
    const auto c = config_from_json(json{{"env", {{"preset", "hackable"}}},
                                         {"reward", {{"variant", "sim"}}},
                                         {"grpo", {{"steps", 12}}},
                                         {"judge", {{"kind", "service"}}},
                                         {"seed", 5}});
    const json j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);
    CHECK(j.at("env").at("preset") == "hackable");
    CHECK(j.at("grpo").at("steps") == 12);
    CHECK(j.at("judge").at("kind") == "service");
  }

  TEST_CASE("loading from a file") {
    const fs::path dir = fs::temp_directory_path() / "ttspo_config";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
      std::ofstream out(dir / "exp.json");
      out << "{\n  // comments are allowed\n  \"output_dir\": \"out\",\n  \"seed\": 3,\n"
          << "  \"scorer_checkpoint\": \"ckpt/base.bin\"\n}\n";
    }
    const auto c = load_config(dir / "exp.json");
    CHECK(c.seed == 3);
    // Checkpoint paths follow the file; the output directory stays relative
    // so the output-root override can place it.
    CHECK(c.scorer_checkpoint == dir / "ckpt/base.bin");
    CHECK(c.output_dir == fs::path("out"));
    {
      std::ofstream out(dir / "bad.json");
      out << "{ not json";
    }
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);

    auto rel = config_from_json(json{{"output_dir", "runs/x"}});
    setenv("TTSPO_OUTPUT_ROOT", "/tmp/root", 1);
    apply_env_overrides(rel);
    unsetenv("TTSPO_OUTPUT_ROOT");
    CHECK(rel.output_dir == fs::path("/tmp/root/runs/x"));
    auto abs = config_from_json(json{{"output_dir", "/abs/dir"}});
    setenv("TTSPO_OUTPUT_ROOT", "/tmp/root", 1);
    apply_env_overrides(abs);
    unsetenv("TTSPO_OUTPUT_ROOT");
    CHECK(abs.output_dir == fs::path("/abs/dir"));
  }
}
