#pragma once

// Checkpoint-level summaries used by the report and the acceptance suite.

#include <cstdint>
#include <span>
#include <vector>

#include "ttspo/env.h"
#include "ttspo/policy.h"

namespace ttspo {

struct PolicySummary {
  double mean_cer = 0;
  double std_logf0 = 0;     // pooled over every sampled contour
  double mean_logf0 = 0;
  double nonterm_rate = 0;
  double mean_len = 0;
  double mean_similarity = 0;
  std::size_t n = 0;
};

struct SamplingSpec {
  int samples_per_prompt = 4;
  double temperature = 1.0;
  int max_len = 24;
  std::uint64_t seed = 12345;
};

std::vector<Candidate> sample_pool(const PolicyParams& policy,
                                   std::span<const Prompt> prompts,
                                   const SamplingSpec& spec);

PolicySummary summarize(std::span<const Candidate> candidates,
                        const PromptIndex& prompts, const Vocab& vocab);

PolicySummary evaluate_sampled(const PolicyParams& policy,
                               std::span<const Prompt> prompts,
                               const Vocab& vocab, const SamplingSpec& spec);

// Mean CER of argmax decodes.
double greedy_cer(const PolicyParams& policy, std::span<const Prompt> prompts,
                  const Vocab& vocab, int max_len);

// Pitch-bin occupancy summed over candidates.
std::vector<double> pooled_pitch_histogram(std::span<const Candidate> candidates,
                                           const Vocab& vocab);

}  // namespace ttspo
