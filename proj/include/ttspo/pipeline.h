#pragma once

// End-to-end commands shared by the CLI, the Python module and the
// acceptance suite. Each writes into cfg.output_dir and is a pure function
// of the config and its input artifacts.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttspo/config.h"
#include "ttspo/elo.h"
#include "ttspo/environment.h"
#include "ttspo/grpo.h"
#include "ttspo/policy.h"
#include "ttspo/report.h"

namespace ttspo {

#ifndef TTSPO_VERSION
#define TTSPO_VERSION "0.1.0"
#endif

struct RunContext {
  ExperimentConfig cfg;
  Environment env;
  PolicyParams base;
  PolicyParams scorer;
};

RunContext make_context(const ExperimentConfig& cfg);

// Manifest written next to every command's artifacts. Carries no wall
// clock, so reruns are byte-identical.
nlohmann::json make_manifest(const std::string& command, const ExperimentConfig& cfg,
                             const std::map<std::string, std::filesystem::path>& systems,
                             const std::filesystem::path& run_dir);

std::filesystem::path cmd_init_base(const ExperimentConfig& cfg);

struct GrpoRun {
  std::filesystem::path dir;
  PolicyParams checkpoint;
  TrainLog log;
};

// preset is "clean" or "sim" and overrides the config's reward variant.
GrpoRun cmd_train_grpo(const ExperimentConfig& cfg, const std::string& preset);

struct DpoRun {
  std::filesystem::path dir;
  std::vector<PolicyParams> checkpoints;  // dpo-v1..v{rounds}
  std::vector<std::string> reference_hashes;
  PolicyParams start;
};

// Runs (or resumes) the DPO rounds. With the oracle judge each round's
// pairs are generated inline. With the service judge a round whose pairs
// file is missing gets a tasks file for the labeling service and the call
// throws IncompleteRoundError.
DpoRun cmd_dpo_rounds(const ExperimentConfig& cfg, int rounds);

// Drafts a tasks file of n unlabeled pairs sampled from `checkpoint`.
std::filesystem::path cmd_gen_pairs(const ExperimentConfig& cfg,
                                    const std::filesystem::path& checkpoint, int round, int n,
                                    const std::filesystem::path& out);

// Oracle-judged votes between systems on held-out prompts.
std::vector<VoteRecord> simulate_votes(const RunContext& ctx,
                                       const std::map<std::string, PolicyParams>& systems,
                                       int n_votes, std::uint64_t seed);

std::filesystem::path cmd_simulate_votes(const ExperimentConfig& cfg,
                                         const std::map<std::string, std::filesystem::path>& systems,
                                         int n_votes, const std::filesystem::path& out);

std::vector<LeaderboardRow> cmd_elo(const std::filesystem::path& votes,
                                    const std::filesystem::path& out_csv, double k,
                                    double initial);

// Systems (name -> checkpoint) recorded in a run directory's manifest.
std::map<std::string, std::filesystem::path> run_systems(const std::filesystem::path& run_dir);

struct ReportOptions {
  std::vector<std::filesystem::path> run_dirs;
  std::optional<std::filesystem::path> votes;
  bool include_published = false;
  std::filesystem::path out_dir;
};

std::vector<SystemRow> cmd_report(const ExperimentConfig& cfg, const ReportOptions& opts);

}  // namespace ttspo
