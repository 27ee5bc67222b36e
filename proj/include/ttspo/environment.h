#pragma once

// Builds a concrete environment: vocabulary, train and held-out prompt
// pools, and the hand-set base policy that doubles as the frozen scorer.

#include <cstdint>
#include <string>
#include <vector>

#include "ttspo/env.h"
#include "ttspo/policy.h"

namespace ttspo {

// Logit layout of the base checkpoint. The pitch prior is a discretized
// Gaussian over bin indices, so NLL under the base is lowest for the
// central bins.
struct BaseModelConfig {
  double char_logit = 3.0;       // bonus for the aligned target character
  double eos_exhausted = 6.0;    // EOS bonus once the text is exhausted
  double eos_in_text = -4.0;     // EOS penalty while text remains
  double pitch_center = 4.5;     // in bin units
  double pitch_width = 2.0;
  // Bonus for one trailing "filler" token once the text is exhausted. Zero
  // leaves the base strongly terminating; a large value makes it run-on
  // prone, like a TTS model that trails off instead of stopping.
  double filler_logit = 0.0;
  int filler_char = 0;
  int filler_bin = 0;
};

struct EnvConfig {
  std::string alphabet = "abcde";
  int n_bins = 10;
  double f_min_hz = 80.0;
  double f_max_hz = 300.0;
  int max_len = 24;
  int near_max_window = 3;
  int train_prompts = 64;
  int heldout_prompts = 32;
  int min_text_len = 3;
  int max_text_len = 10;
  // Speaker style: discretized Gaussian over bins from which each prompt's
  // reference pitch histogram is drawn.
  double style_center = 4.5;
  double style_width = 2.0;
  int reference_draws = 32;
  std::uint64_t seed = 1;
  BaseModelConfig base;

  static EnvConfig preset(const std::string& name);
  void validate() const;
};

struct Environment {
  EnvConfig config;
  Vocab vocab;
  ContextSpec context;
  std::vector<Prompt> train;
  std::vector<Prompt> heldout;

  int max_len() const { return config.max_len; }
  PromptIndex index() const;  // train and held-out together
};

Environment make_environment(const EnvConfig& config);

// Normalized discretized Gaussian weights over n bins.
std::vector<double> bin_profile(int n_bins, double center, double width);

PolicyParams make_base_policy(const Environment& env);

}  // namespace ttspo
