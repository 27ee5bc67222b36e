#include "ttspo/environment.h"

#include <cmath>
#include <cstdio>

#include "ttspo/error.h"
#include "ttspo/rng.h"

namespace ttspo {

EnvConfig EnvConfig::preset(const std::string& name) {
  EnvConfig cfg;
  if (name == "default") return cfg;
  if (name == "hackable") {
    // Long utterances close to max_len, a base that tends to trail off in a
    // low-pitched filler frame after the text, and a narrow low-pitched
    // speaker style. Trailing filler frames then raise pitch-usage
    // similarity, so a similarity term in the reward pays for run-on.
    cfg.min_text_len = 16;
    cfg.max_text_len = 22;
    cfg.style_center = 0.0;
    cfg.style_width = 0.5;
    cfg.base.pitch_width = 1.5;
    cfg.base.filler_logit = 7.0;
    cfg.base.filler_char = 0;
    cfg.base.filler_bin = 0;
    return cfg;
  }
  throw ConfigError("unknown environment preset '" + name + "'");
}

void EnvConfig::validate() const {
  if (alphabet.empty()) throw ConfigError("env.alphabet must be non-empty");
  if (n_bins < 1) throw ConfigError("env.pitch_bins must be >= 1");
  if (!(f_min_hz > 0) || !(f_max_hz > f_min_hz)) {
    throw ConfigError("env pitch range must satisfy 0 < f_min < f_max");
  }
  if (max_len < 1) throw ConfigError("env.max_len must be >= 1");
  if (train_prompts < 1 || heldout_prompts < 0) {
    throw ConfigError("env prompt counts must be positive");
  }
  if (min_text_len < 1 || max_text_len < min_text_len) {
    throw ConfigError("env text lengths must satisfy 1 <= min <= max");
  }
  if (max_text_len > max_len) {
    throw ConfigError("env.max_text_len must not exceed env.max_len");
  }
  if (!(style_width > 0) || !(base.pitch_width > 0)) {
    throw ConfigError("style and pitch widths must be positive");
  }
  if (reference_draws < 0) throw ConfigError("env.reference_draws must be >= 0");
}

PromptIndex Environment::index() const {
  PromptIndex idx(train);
  for (const Prompt& p : heldout) idx.add(p);
  return idx;
}

std::vector<double> bin_profile(int n_bins, double center, double width) {
  std::vector<double> w(static_cast<std::size_t>(n_bins));
  double total = 0;
  for (int b = 0; b < n_bins; ++b) {
    const double z = (b - center) / width;
    w[b] = std::exp(-0.5 * z * z);
    total += w[b];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

Prompt make_prompt(const EnvConfig& cfg, const std::vector<double>& style,
                   const std::string& id, std::uint64_t seed) {
  Rng rng(seed);
  Prompt p;
  p.id = id;
  const auto span = static_cast<std::uint64_t>(cfg.max_text_len - cfg.min_text_len + 1);
  const int len = cfg.min_text_len + static_cast<int>(rng.below(span));
  for (int i = 0; i < len; ++i) {
    p.target_text.push_back(cfg.alphabet[rng.below(cfg.alphabet.size())]);
  }
  if (cfg.reference_draws == 0) {
    p.reference_embedding = unit(style);
    return p;
  }
  std::vector<double> hist(style.size(), 0.0);
  for (int i = 0; i < cfg.reference_draws; ++i) {
    const double u = rng.uniform();
    double acc = 0;
    std::size_t b = style.size() - 1;
    for (std::size_t k = 0; k < style.size(); ++k) {
      acc += style[k];
      if (u < acc) {
        b = k;
        break;
      }
    }
    hist[b] += 1.0;
  }
  p.reference_embedding = unit(std::move(hist));
  return p;
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%03d", prefix, i);
  return buf;
}

}  // namespace

Environment make_environment(const EnvConfig& config) {
  config.validate();
  Environment env{config,
                  Vocab(config.alphabet,
                        geometric_bins(config.f_min_hz, config.f_max_hz, config.n_bins)),
                  ContextSpec{config.alphabet, config.n_bins, config.max_len,
                              config.near_max_window},
                  {},
                  {}};
  const auto style = bin_profile(config.n_bins, config.style_center, config.style_width);
  for (int i = 0; i < config.train_prompts; ++i) {
    env.train.push_back(make_prompt(config, style, numbered("train", i),
                                    derive_seed(config.seed, {0, std::uint64_t(i)})));
  }
  for (int i = 0; i < config.heldout_prompts; ++i) {
    env.heldout.push_back(make_prompt(config, style, numbered("heldout", i),
                                      derive_seed(config.seed, {1, std::uint64_t(i)})));
  }
  return env;
}

PolicyParams make_base_policy(const Environment& env) {
  const BaseModelConfig& base = env.config.base;
  PolicyParams params(env.context, "base");
  const FeatureMap& fm = params.features();
  Matrix& w = params.mutable_weights();
  const std::size_t n_chars = env.vocab.alphabet().size();
  const auto nb = static_cast<std::size_t>(env.vocab.n_bins());
  const auto eos = static_cast<std::size_t>(env.vocab.eos_id());

  for (std::size_t ci = 0; ci < n_chars; ++ci) {
    auto row = w.row(fm.text_offset() + ci);
    for (std::size_t b = 0; b < nb; ++b) row[ci * nb + b] = base.char_logit;
    row[eos] = base.eos_in_text;
  }
  w(fm.text_offset() + n_chars, eos) = base.eos_exhausted;
  if (base.filler_logit != 0.0) {
    if (base.filler_char < 0 || base.filler_char >= static_cast<int>(n_chars) ||
        base.filler_bin < 0 || base.filler_bin >= static_cast<int>(nb)) {
      throw ConfigError("base filler token out of range");
    }
    const auto filler = static_cast<std::size_t>(base.filler_char) * nb +
                        static_cast<std::size_t>(base.filler_bin);
    // Net of the pitch prior added by the position block.
    const double z = (base.filler_bin - base.pitch_center) / base.pitch_width;
    w(fm.text_offset() + n_chars, filler) = base.filler_logit + 0.5 * z * z;
  }

  // Pitch prior lives in the position block: exactly one bucket is active
  // at every step.
  for (std::size_t k = 0; k < 3; ++k) {
    auto row = w.row(fm.position_offset() + k);
    for (std::size_t ci = 0; ci < n_chars; ++ci) {
      for (std::size_t b = 0; b < nb; ++b) {
        const double z = (static_cast<double>(b) - base.pitch_center) / base.pitch_width;
        row[ci * nb + b] = -0.5 * z * z;
      }
    }
  }
  return params;
}

}  // namespace ttspo
