#pragma once

#include "ttspo/env.h"
#include "ttspo/policy.h"
#include "ttspo/reward.h"

namespace ttspo {

// CER against the prompt text, mean per-token NLL under the frozen scorer
// (EOS included when emitted), and optionally pitch-usage similarity.
Metrics score(const Candidate& candidate, const Prompt& prompt,
              const Vocab& vocab, const PolicyParams& scorer,
              bool with_similarity);

// As score(), but a candidate with no voiced frames gets the minimum
// similarity instead of an error, so a training step never aborts on it.
Metrics score_for_training(const Candidate& candidate, const Prompt& prompt,
                           const Vocab& vocab, const PolicyParams& scorer,
                           bool with_similarity);

}  // namespace ttspo
