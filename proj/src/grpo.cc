#include "ttspo/grpo.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ttspo/error.h"
#include "ttspo/rng.h"
#include "ttspo/scoring.h"

namespace ttspo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
  if (!(learning_rate > 0)) throw ConfigError("grpo.learning_rate must be positive");
  if (!(clip_epsilon > 0)) throw ConfigError("grpo.clip_epsilon must be positive");
  if (!(adv_std_floor > 0)) throw ConfigError("grpo.adv_std_floor must be positive");
  if (steps < 0) throw ConfigError("grpo.steps must be >= 0");
  if (prompts_per_step < 1) throw ConfigError("grpo.prompts_per_step must be >= 1");
  if (max_len < 1) throw ConfigError("grpo.max_len must be >= 1");
  if (!(temperature > 0)) throw ConfigError("grpo.temperature must be positive");
  if (inner_epochs < 1) throw ConfigError("grpo.inner_epochs must be >= 1");
  if (kl_coef < 0) throw ConfigError("grpo.kl_coef must be >= 0");
  try {
    reward.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("grpo reward: ") + e.what());
  }
}

std::string TrainLog::csv() const {
  std::string out = std::string(kCsvHeader) + "\n";
  char buf[512];
  for (const TrainRecord& r : records) {
    char sim[64] = "";
    if (r.mean_sim) std::snprintf(sim, sizeof(sim), "%.12g", *r.mean_sim);
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%s,%.12g,%.12g,%.12g\n",
                  r.step, r.mean_reward, r.mean_cer, r.mean_nll, sim, r.std_logf0,
                  r.nonterm_rate, r.mean_len);
    out += buf;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv();
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor) {
  if (rewards.size() < 2) throw InvalidArgument("a group needs at least 2 rewards");
  if (!(std_floor > 0)) throw InvalidArgument("std floor must be positive");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw InvalidArgument("non-finite reward in group");
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd == 0.0) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = (rewards[i] - mean) / (sd + std_floor);
  }
  return adv;
}

namespace {

std::vector<double> centered(std::span<const double> rewards) {
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                      static_cast<double>(rewards.size());
  std::vector<double> adv;
  adv.reserve(rewards.size());
  for (double r : rewards) adv.push_back(r - mean);
  return adv;
}

double recorded_logprob(const Candidate& c) {
  return std::accumulate(c.token_logprobs.begin(), c.token_logprobs.end(), 0.0);
}

}  // namespace

std::vector<GroupSample> sample_groups(const PolicyParams& policy,
                                       std::span<const Prompt> prompts,
                                       const GrpoConfig& cfg,
                                       const PolicyParams& scorer,
                                       const Vocab& vocab, std::uint64_t step) {
  const bool with_sim = cfg.reward.weights.three_term();
  std::vector<GroupSample> groups;
  groups.reserve(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const Prompt& prompt = prompts[p];
    GroupSample g;
    g.prompt_id = prompt.id;
    for (int i = 0; i < cfg.group_size; ++i) {
      const std::uint64_t seed =
          derive_seed(cfg.seed, {step, p, static_cast<std::uint64_t>(i)});
      Candidate c = sample(policy, prompt, cfg.temperature, cfg.max_len, seed);
      Metrics m = score_for_training(c, prompt, vocab, scorer, with_sim);
      g.rewards.push_back(reward(m, cfg.reward));
      g.metrics.push_back(m);
      g.candidates.push_back(std::move(c));
    }
    g.advantages = cfg.scale_by_std ? group_advantages(g.rewards, cfg.adv_std_floor)
                                    : centered(g.rewards);
    groups.push_back(std::move(g));
  }
  return groups;
}

Matrix surrogate_gradient(const PolicyParams& current,
                          std::span<const GroupSample> groups,
                          const PromptIndex& prompts, const GrpoConfig& cfg,
                          const PolicyParams* kl_reference) {
  Matrix grad(current.weights().rows(), current.weights().cols());
  std::size_t n = 0;
  for (const GroupSample& g : groups) n += g.candidates.size();
  if (n == 0) return grad;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (const GroupSample& g : groups) {
    const Prompt& prompt = prompts.at(g.prompt_id);
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      const Candidate& c = g.candidates[i];
      const double adv = g.advantages[i];
      const double logp = sequence_logprob(current, prompt, c);
      const double ratio = std::exp(logp - recorded_logprob(c));
      // d/dtheta min(ratio * A, clip(ratio) * A) is ratio * A * grad log pi
      // on the unclipped branch and zero otherwise.
      const bool active = adv >= 0 ? ratio < 1.0 + cfg.clip_epsilon
                                   : ratio > 1.0 - cfg.clip_epsilon;
      double coeff = active ? ratio * adv : 0.0;
      if (kl_reference != nullptr && cfg.kl_coef > 0) {
        // Score-function gradient of -kl * E[log pi - log pi_ref].
        const double ref = sequence_logprob(*kl_reference, prompt, c);
        coeff -= cfg.kl_coef * ratio * (logp - ref);
      }
      if (coeff != 0.0) {
        accumulate_grad_sequence_logprob(current, prompt, c, coeff * inv_n, grad);
      }
    }
  }
  return grad;
}

TrainRecord summarize_groups(std::span<const GroupSample> groups,
                             const Vocab& vocab, int step) {
  TrainRecord r;
  r.step = step;
  std::size_t n = 0;
  std::size_t nonterm = 0;
  double sim_sum = 0;
  bool has_sim = false;
  std::vector<std::vector<double>> contours;
  for (const GroupSample& g : groups) {
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      const Candidate& c = g.candidates[i];
      ++n;
      r.mean_reward += g.rewards[i];
      r.mean_cer += g.metrics[i].c;
      r.mean_nll += g.metrics[i].ell;
      if (g.metrics[i].s) {
        has_sim = true;
        sim_sum += *g.metrics[i].s;
      }
      nonterm += c.terminated ? 0 : 1;
      r.mean_len += static_cast<double>(c.token_ids.size());
      contours.push_back(pitch_contour(c, vocab));
    }
  }
  if (n == 0) return r;
  const double dn = static_cast<double>(n);
  r.mean_reward /= dn;
  r.mean_cer /= dn;
  r.mean_nll /= dn;
  r.mean_len /= dn;
  r.nonterm_rate = static_cast<double>(nonterm) / dn;
  if (has_sim) r.mean_sim = sim_sum / dn;
  std::size_t voiced = 0;
  for (const auto& c : contours) voiced += c.size();
  if (voiced > 0) r.std_logf0 = prosody_stats(contours).std_logf0;
  return r;
}

GrpoStepResult grpo_step(const PolicyParams& params,
                         std::span<const Prompt> prompts, const GrpoConfig& cfg,
                         const PolicyParams& scorer, const Vocab& vocab,
                         int step, const PolicyParams* kl_reference) {
  if (prompts.empty()) throw InvalidArgument("grpo_step needs at least one prompt");
  auto groups = sample_groups(params, prompts, cfg, scorer, vocab,
                              static_cast<std::uint64_t>(step));
  const PromptIndex index(prompts);
  PolicyParams next = params;
  for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    const Matrix grad = surrogate_gradient(next, groups, index, cfg, kl_reference);
    if (!grad.all_finite()) {
      throw std::runtime_error("non-finite GRPO gradient at step " +
                               std::to_string(step) + ", inner epoch " +
                               std::to_string(epoch));
    }
    next.mutable_weights().axpy(cfg.learning_rate, grad);
  }
  TrainRecord record = summarize_groups(groups, vocab, step);
  return {std::move(next), record, std::move(groups)};
}

GrpoResult train_grpo(const PolicyParams& initial, std::span<const Prompt> prompts,
                      const GrpoConfig& cfg, const PolicyParams& scorer,
                      const Vocab& vocab) {
  cfg.validate();
  if (prompts.empty()) throw InvalidArgument("train_grpo needs a prompt pool");
  GrpoResult result{initial, {}};
  const PolicyParams* kl_ref = cfg.kl_coef > 0 ? &initial : nullptr;
  const std::size_t batch = std::min<std::size_t>(cfg.prompts_per_step, prompts.size());
  std::vector<Prompt> step_prompts(batch);
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t j = 0; j < batch; ++j) {
      step_prompts[j] = prompts[(static_cast<std::size_t>(step) * batch + j) % prompts.size()];
    }
    auto out = grpo_step(result.params, step_prompts, cfg, scorer, vocab, step, kl_ref);
    result.params = std::move(out.params);
    result.log.records.push_back(out.record);
  }
  return result;
}

}  // namespace ttspo
