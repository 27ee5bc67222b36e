#pragma once

// Deterministic simulated rater: intelligibility gate first, then pitch
// dispersion.

#include <cstdint>
#include <string>

#include "ttspo/env.h"
#include "ttspo/rng.h"

namespace ttspo {

enum class Preference { kPreferA, kPreferB, kTie };

enum class PreferenceSource { kHuman, kOracle };

struct OracleConfig {
  double cer_gate = 0.3;
  // Scales the prosody score; the rule is lexicographic, so it never
  // changes a decision.
  double dispersion_weight = 1.0;
  double noise_prob = 0.0;  // chance of flipping a non-tie outcome
  std::uint64_t seed = 0;

  void validate() const;
};

// What the oracle looks at for one candidate.
struct JudgedView {
  double cer = 0;
  double dispersion = 0;  // weighted std of the candidate's own log-pitch
};

JudgedView judged_view(const Candidate& candidate, const Prompt& prompt,
                       const Vocab& vocab, const OracleConfig& cfg);

// The rule without noise:
//   1. exactly one candidate within the CER gate wins
//   2. both within: strictly larger dispersion wins
//   3. both outside: strictly lower CER wins
//   4. otherwise tie
Preference decide(const JudgedView& a, const JudgedView& b, double cer_gate);

Preference judge(const Candidate& a, const Candidate& b, const Prompt& prompt,
                 const Vocab& vocab, const OracleConfig& cfg, Rng& rng);

// Judge handle the DPO pair collection talks to.
class PreferenceJudge {
 public:
  virtual ~PreferenceJudge() = default;
  virtual Preference compare(const Candidate& a, const Candidate& b,
                             const Prompt& prompt) = 0;
  virtual PreferenceSource source() const = 0;
  virtual std::string annotator_id() const = 0;
};

class OracleJudge : public PreferenceJudge {
 public:
  OracleJudge(const Vocab& vocab, OracleConfig cfg)
      : vocab_(vocab), cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
  }

  Preference compare(const Candidate& a, const Candidate& b,
                     const Prompt& prompt) override {
    return judge(a, b, prompt, vocab_, cfg_, rng_);
  }
  PreferenceSource source() const override { return PreferenceSource::kOracle; }
  std::string annotator_id() const override { return "oracle"; }

 private:
  const Vocab& vocab_;
  OracleConfig cfg_;
  Rng rng_;
};

}  // namespace ttspo
