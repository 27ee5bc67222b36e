#pragma once

// Group Relative Policy Optimization: a group of samples per prompt,
// rewards standardized within the group as advantages, and a clipped
// ratio surrogate. No value network.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttspo/env.h"
#include "ttspo/matrix.h"
#include "ttspo/policy.h"
#include "ttspo/reward.h"

namespace ttspo {

struct GrpoConfig {
  int group_size = 8;
  double learning_rate = 0.5;
  double clip_epsilon = 0.2;
  double adv_std_floor = 1e-6;
  int steps = 300;
  int prompts_per_step = 8;
  RewardConfig reward;
  int max_len = 24;
  double temperature = 1.0;
  int inner_epochs = 1;
  // Optional KL-to-initial penalty, off by default.
  double kl_coef = 0.0;
  // When false, advantages are only mean-centered (no division by the
  // group standard deviation).
  bool scale_by_std = true;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GroupSample {
  std::string prompt_id;
  std::vector<Candidate> candidates;
  std::vector<Metrics> metrics;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct TrainRecord {
  int step = 0;
  double mean_reward = 0;
  double mean_cer = 0;
  double mean_nll = 0;
  std::optional<double> mean_sim;
  double std_logf0 = 0;
  double nonterm_rate = 0;
  double mean_len = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  static constexpr const char* kCsvHeader =
      "step,mean_reward,mean_cer,mean_nll,mean_sim,std_logf0,nonterm_rate,mean_len";
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

// (r_i - mean) / (std + floor) with the population std. All-equal rewards
// give all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor);

// Samples and scores cfg.group_size candidates for each prompt.
std::vector<GroupSample> sample_groups(const PolicyParams& policy,
                                       std::span<const Prompt> prompts,
                                       const GrpoConfig& cfg,
                                       const PolicyParams& scorer,
                                       const Vocab& vocab, std::uint64_t step);

// Ascent direction of the clipped surrogate at `current` for groups drawn
// from the snapshot whose logprobs the candidates carry.
Matrix surrogate_gradient(const PolicyParams& current,
                          std::span<const GroupSample> groups,
                          const PromptIndex& prompts, const GrpoConfig& cfg,
                          const PolicyParams* kl_reference = nullptr);

TrainRecord summarize_groups(std::span<const GroupSample> groups,
                             const Vocab& vocab, int step);

struct GrpoStepResult {
  PolicyParams params;
  TrainRecord record;
  std::vector<GroupSample> groups;
};

GrpoStepResult grpo_step(const PolicyParams& params,
                         std::span<const Prompt> prompts, const GrpoConfig& cfg,
                         const PolicyParams& scorer, const Vocab& vocab,
                         int step, const PolicyParams* kl_reference = nullptr);

struct GrpoResult {
  PolicyParams params;
  TrainLog log;
};

// Runs cfg.steps steps, cycling through `prompts` cfg.prompts_per_step at a
// time. Deterministic in cfg.seed.
GrpoResult train_grpo(const PolicyParams& initial, std::span<const Prompt> prompts,
                      const GrpoConfig& cfg, const PolicyParams& scorer,
                      const Vocab& vocab);

}  // namespace ttspo
