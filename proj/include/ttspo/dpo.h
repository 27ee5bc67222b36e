#pragma once

// Direct Preference Optimization in rounds. Each round starts from the
// previous round's checkpoint, which is also that round's frozen
// reference, and consumes its own preference file exactly once.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttspo/annotator.h"
#include "ttspo/env.h"
#include "ttspo/matrix.h"
#include "ttspo/policy.h"

namespace ttspo {

struct PreferencePair {
  int round = 1;
  std::string prompt_id;
  Candidate preferred;
  Candidate dispreferred;
  PreferenceSource source = PreferenceSource::kOracle;
  std::optional<std::string> annotator_id;
  std::uint64_t timestamp = 0;

  void validate() const;
};

struct DpoConfig {
  double beta = 0.1;
  double learning_rate = 3.0;
  int epochs = 60;
  int batch_size = 32;
  int pairs_per_round = 200;
  int rounds = 3;
  std::uint64_t seed = 11;
  // Candidate generation for pair collection.
  double sample_temperature = 1.0;
  int max_len = 24;
  // Pair collection gives up after pairs_per_round * this many draws.
  int max_draws_factor = 20;

  void validate() const;
};

// -log sigmoid(beta * margin), computed without overflow.
double dpo_pair_loss(double margin, double beta);

// log pi(y+) - log pi(y-) for one pair.
double logprob_gap(const PolicyParams& params, const Prompt& prompt,
                   const PreferencePair& pair);

struct DpoLoss {
  double loss = 0;
  Matrix grad;                  // d loss / d theta; the reference is frozen
  std::vector<double> margins;  // gap_theta - gap_ref per pair
};

DpoLoss dpo_loss(const PolicyParams& theta, const PolicyParams& reference,
                 std::span<const PreferencePair> batch,
                 const PromptIndex& prompts, double beta);

// Records which preference files have been used, keyed by content hash and
// path. Backed by a line-delimited file when a path is given.
class ConsumptionLedger {
 public:
  ConsumptionLedger() = default;
  explicit ConsumptionLedger(std::filesystem::path path);

  bool consumed(const std::filesystem::path& pairs_file,
                const std::string& content_hash) const;
  void mark(const std::filesystem::path& pairs_file,
            const std::string& content_hash, int round);

 private:
  struct Entry {
    std::string path;
    std::string hash;
    int round;
  };
  std::optional<std::filesystem::path> path_;
  std::vector<Entry> entries_;
};

struct RoundState {
  int round = 1;
  PolicyParams policy;
  std::optional<PolicyParams> reference;
  std::filesystem::path pairs_file;
  bool consumed = false;
};

struct RoundResult {
  RoundState next;
  PolicyParams checkpoint;      // tagged dpo-v{round}
  std::string reference_hash;
  std::string checkpoint_hash;
  std::vector<double> epoch_losses;  // full-batch loss after each epoch
};

// Reference state for round r, anchored to `policy`.
RoundState start_round(int round, const PolicyParams& policy,
                       std::filesystem::path pairs_file);

RoundResult run_round(const RoundState& state, const DpoConfig& cfg,
                      const PromptIndex& prompts, ConsumptionLedger& ledger);

// As run_round but on in-memory pairs (no ledger); used by tests and by
// run_round itself.
RoundResult optimize_round(const RoundState& state, const DpoConfig& cfg,
                           std::span<const PreferencePair> pairs,
                           const PromptIndex& prompts);

struct PairSampling {
  double temperature = 1.0;
  int max_len = 24;
  std::uint64_t seed = 0;
};

// Draws two candidates per prompt draw and asks the judge; ties and
// identical sequences are discarded and redrawn. Throws
// IncompleteRoundError when the draw budget runs out.
std::vector<PreferencePair> make_round_pairs(
    const PolicyParams& policy, std::span<const Prompt> prompts, int n_pairs,
    const PairSampling& sampling, int round, PreferenceJudge& judge,
    int max_draws_factor = 20);

// Unlabeled (A, B) candidate pairs for the human queue.
struct PairDraft {
  std::string prompt_id;
  Candidate a;
  Candidate b;
};

std::vector<PairDraft> draft_round_pairs(const PolicyParams& policy,
                                         std::span<const Prompt> prompts,
                                         int n_pairs, const PairSampling& sampling,
                                         int round);

}  // namespace ttspo
