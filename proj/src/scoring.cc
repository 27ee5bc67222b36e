#include "ttspo/scoring.h"

#include <algorithm>

#include "ttspo/error.h"

namespace ttspo {

Metrics score(const Candidate& candidate, const Prompt& prompt,
              const Vocab& vocab, const PolicyParams& scorer,
              bool with_similarity) {
  candidate.validate(vocab);
  if (candidate.token_ids.empty()) {
    throw InvalidArgument("cannot score a candidate with no tokens");
  }
  Metrics m;
  m.c = cer(prompt.target_text, transcript(candidate, vocab));
  const double lp = sequence_logprob(scorer, prompt, candidate);
  m.ell = std::max(0.0, -lp / static_cast<double>(candidate.token_ids.size()));
  if (with_similarity) m.s = speaker_similarity(candidate, prompt, vocab);
  return m;
}

Metrics score_for_training(const Candidate& candidate, const Prompt& prompt,
                           const Vocab& vocab, const PolicyParams& scorer,
                           bool with_similarity) {
  const bool voiceless = candidate.voiced_count(vocab) == 0;
  Metrics m = score(candidate, prompt, vocab, scorer, with_similarity && !voiceless);
  if (with_similarity && voiceless) m.s = -1.0;
  return m;
}

}  // namespace ttspo
