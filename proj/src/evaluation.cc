#include "ttspo/evaluation.h"

#include "ttspo/error.h"
#include "ttspo/reward.h"
#include "ttspo/rng.h"

namespace ttspo {

std::vector<Candidate> sample_pool(const PolicyParams& policy,
                                   std::span<const Prompt> prompts,
                                   const SamplingSpec& spec) {
  std::vector<Candidate> out;
  out.reserve(prompts.size() * static_cast<std::size_t>(spec.samples_per_prompt));
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (int i = 0; i < spec.samples_per_prompt; ++i) {
      out.push_back(sample(policy, prompts[p], spec.temperature, spec.max_len,
                           derive_seed(spec.seed, {p, static_cast<std::uint64_t>(i)})));
    }
  }
  return out;
}

PolicySummary summarize(std::span<const Candidate> candidates,
                        const PromptIndex& prompts, const Vocab& vocab) {
  PolicySummary s;
  if (candidates.empty()) throw InvalidArgument("nothing to summarize");
  std::vector<std::vector<double>> contours;
  std::size_t nonterm = 0;
  std::size_t voiced = 0;
  for (const Candidate& c : candidates) {
    const Prompt& prompt = prompts.at(c.prompt_id);
    s.mean_cer += cer(prompt.target_text, transcript(c, vocab));
    s.mean_len += static_cast<double>(c.token_ids.size());
    nonterm += c.terminated ? 0 : 1;
    auto contour = pitch_contour(c, vocab);
    if (!contour.empty()) {
      s.mean_similarity += speaker_similarity(c, prompt, vocab);
      ++voiced;
    }
    contours.push_back(std::move(contour));
  }
  const double n = static_cast<double>(candidates.size());
  s.n = candidates.size();
  s.mean_cer /= n;
  s.mean_len /= n;
  s.nonterm_rate = static_cast<double>(nonterm) / n;
  if (voiced > 0) {
    s.mean_similarity /= static_cast<double>(voiced);
    const ProsodyStats ps = prosody_stats(contours);
    s.std_logf0 = ps.std_logf0;
    s.mean_logf0 = ps.mean_logf0;
  }
  return s;
}

PolicySummary evaluate_sampled(const PolicyParams& policy,
                               std::span<const Prompt> prompts,
                               const Vocab& vocab, const SamplingSpec& spec) {
  const auto pool = sample_pool(policy, prompts, spec);
  return summarize(pool, PromptIndex(prompts), vocab);
}

double greedy_cer(const PolicyParams& policy, std::span<const Prompt> prompts,
                  const Vocab& vocab, int max_len) {
  if (prompts.empty()) throw InvalidArgument("no prompts to evaluate");
  double total = 0;
  for (const Prompt& p : prompts) {
    total += cer(p.target_text, transcript(decode_greedy(policy, p, max_len), vocab));
  }
  return total / static_cast<double>(prompts.size());
}

std::vector<double> pooled_pitch_histogram(std::span<const Candidate> candidates,
                                           const Vocab& vocab) {
  std::vector<double> hist(vocab.n_bins(), 0.0);
  for (const Candidate& c : candidates) {
    const auto h = pitch_histogram(c, vocab);
    for (std::size_t b = 0; b < h.size(); ++b) hist[b] += h[b];
  }
  return hist;
}

}  // namespace ttspo
