#pragma once

// Experiment configuration, read from JSON. Every section is optional and
// falls back to the library defaults; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "ttspo/annotator.h"
#include "ttspo/dpo.h"
#include "ttspo/elo.h"
#include "ttspo/environment.h"
#include "ttspo/evaluation.h"
#include "ttspo/grpo.h"

namespace ttspo {

enum class JudgeKind { kOracle, kService };

struct JudgeConfig {
  JudgeKind kind = JudgeKind::kOracle;
  OracleConfig oracle;
  std::string service_url;  // informational; rounds hand off through files
};

struct EloConfig {
  double k_factor = kDefaultKFactor;
  double initial_rating = kDefaultInitialRating;
};

struct ExperimentConfig {
  std::string env_preset = "default";
  EnvConfig env;
  std::optional<std::filesystem::path> scorer_checkpoint;
  std::string reward_variant = "clean";  // clean | sim
  GrpoConfig grpo;  // grpo.reward holds the reward spec
  DpoConfig dpo;
  JudgeConfig judge;
  EloConfig elo;
  SamplingSpec eval;
  // Round 1 starts from the base checkpoint ("base") or from the GRPO clean
  // run in the same output directory ("grpo"). An explicit checkpoint path
  // overrides both.
  std::string dpo_start = "base";
  std::optional<std::filesystem::path> dpo_start_checkpoint;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/default";

  // Applies the clean or sim reward weights.
  void set_reward_variant(const std::string& variant);
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// Reads TTSPO_OUTPUT_ROOT; relative output directories are placed under it.
void apply_env_overrides(ExperimentConfig& cfg);

}  // namespace ttspo
