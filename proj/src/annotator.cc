#include "ttspo/annotator.h"

#include <cmath>

#include "ttspo/error.h"
#include "ttspo/reward.h"

namespace ttspo {

void OracleConfig::validate() const {
  if (!(cer_gate >= 0)) throw ConfigError("judge.cer_gate must be >= 0");
  if (!(dispersion_weight > 0)) throw ConfigError("judge.dispersion_weight must be positive");
  if (!(noise_prob >= 0 && noise_prob < 0.5)) {
    throw ConfigError("judge.noise_prob must lie in [0, 0.5)");
  }
}

JudgedView judged_view(const Candidate& candidate, const Prompt& prompt,
                       const Vocab& vocab, const OracleConfig& cfg) {
  if (candidate.token_ids.empty()) {
    throw InvalidArgument("cannot judge an empty candidate");
  }
  JudgedView v;
  v.cer = cer(prompt.target_text, transcript(candidate, vocab));
  const auto contour = pitch_contour(candidate, vocab);
  if (!contour.empty()) {
    const std::vector<std::vector<double>> one{contour};
    v.dispersion = cfg.dispersion_weight * prosody_stats(one).std_logf0;
  }
  return v;
}

Preference decide(const JudgedView& a, const JudgedView& b, double cer_gate) {
  const bool pass_a = a.cer <= cer_gate;
  const bool pass_b = b.cer <= cer_gate;
  if (pass_a != pass_b) return pass_a ? Preference::kPreferA : Preference::kPreferB;
  if (pass_a) {
    if (a.dispersion > b.dispersion) return Preference::kPreferA;
    if (b.dispersion > a.dispersion) return Preference::kPreferB;
    return Preference::kTie;
  }
  if (a.cer < b.cer) return Preference::kPreferA;
  if (b.cer < a.cer) return Preference::kPreferB;
  return Preference::kTie;
}

Preference judge(const Candidate& a, const Candidate& b, const Prompt& prompt,
                 const Vocab& vocab, const OracleConfig& cfg, Rng& rng) {
  if (a.prompt_id != b.prompt_id || a.prompt_id != prompt.id) {
    throw InvalidArgument("judged candidates must share the prompt");
  }
  Preference p = decide(judged_view(a, prompt, vocab, cfg),
                        judged_view(b, prompt, vocab, cfg), cfg.cer_gate);
  if (p != Preference::kTie && cfg.noise_prob > 0 && rng.bernoulli(cfg.noise_prob)) {
    p = p == Preference::kPreferA ? Preference::kPreferB : Preference::kPreferA;
  }
  return p;
}

}  // namespace ttspo
