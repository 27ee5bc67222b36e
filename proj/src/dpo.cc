#include "ttspo/dpo.h"

#include <cmath>
#include <fstream>
#include <numeric>

#include "ttspo/error.h"
#include "ttspo/records.h"
#include "ttspo/rng.h"
#include "json.hpp"

namespace ttspo {

void PreferencePair::validate() const {
  if (round < 1) throw InvalidArgument("preference pair round must be >= 1");
  if (preferred.prompt_id != prompt_id || dispreferred.prompt_id != prompt_id) {
    throw InvalidArgument("preference pair candidates must share the prompt");
  }
  if (preferred.token_ids == dispreferred.token_ids) {
    throw InvalidArgument("preferred and dispreferred sequences are identical");
  }
}

void DpoConfig::validate() const {
  if (!(beta > 0)) throw ConfigError("dpo.beta must be positive");
  if (!(learning_rate > 0)) throw ConfigError("dpo.learning_rate must be positive");
  if (epochs < 0) throw ConfigError("dpo.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("dpo.batch_size must be >= 1");
  if (pairs_per_round < 1) throw ConfigError("dpo.pairs_per_round must be >= 1");
  if (rounds < 1) throw ConfigError("dpo.rounds must be >= 1");
  if (!(sample_temperature > 0)) throw ConfigError("dpo.sample_temperature must be positive");
  if (max_len < 1) throw ConfigError("dpo.max_len must be >= 1");
  if (max_draws_factor < 1) throw ConfigError("dpo.max_draws_factor must be >= 1");
}

double dpo_pair_loss(double margin, double beta) {
  // softplus(-x) = -log sigmoid(x)
  const double x = beta * margin;
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double logprob_gap(const PolicyParams& params, const Prompt& prompt,
                   const PreferencePair& pair) {
  return sequence_logprob(params, prompt, pair.preferred) -
         sequence_logprob(params, prompt, pair.dispreferred);
}

DpoLoss dpo_loss(const PolicyParams& theta, const PolicyParams& reference,
                 std::span<const PreferencePair> batch,
                 const PromptIndex& prompts, double beta) {
  if (batch.empty()) throw InvalidArgument("DPO loss of an empty batch");
  if (!(beta > 0)) throw InvalidArgument("beta must be positive");
  DpoLoss out{0.0, Matrix(theta.weights().rows(), theta.weights().cols()), {}};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PreferencePair& pair : batch) {
    const Prompt& prompt = prompts.at(pair.prompt_id);
    const double margin =
        logprob_gap(theta, prompt, pair) - logprob_gap(reference, prompt, pair);
    out.margins.push_back(margin);
    out.loss += dpo_pair_loss(margin, beta) * inv_n;
    // d/dtheta softplus(-beta m) = -beta sigmoid(-beta m) dm/dtheta
    const double coeff = -beta * sigmoid(-beta * margin) * inv_n;
    accumulate_grad_sequence_logprob(theta, prompt, pair.preferred, coeff, out.grad);
    accumulate_grad_sequence_logprob(theta, prompt, pair.dispreferred, -coeff, out.grad);
  }
  return out;
}

ConsumptionLedger::ConsumptionLedger(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    entries_.push_back({j.at("pairs_file").get<std::string>(),
                        j.at("hash").get<std::string>(), j.at("round").get<int>()});
  }
}

bool ConsumptionLedger::consumed(const std::filesystem::path& pairs_file,
                                 const std::string& content_hash) const {
  const std::string key = std::filesystem::weakly_canonical(pairs_file).string();
  for (const Entry& e : entries_) {
    if (e.path == key || e.hash == content_hash) return true;
  }
  return false;
}

void ConsumptionLedger::mark(const std::filesystem::path& pairs_file,
                             const std::string& content_hash, int round) {
  Entry e{std::filesystem::weakly_canonical(pairs_file).string(), content_hash, round};
  if (path_) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    const nlohmann::json j = {{"pairs_file", e.path}, {"hash", e.hash}, {"round", e.round}};
    out << j.dump() << "\n";
    if (!out) throw std::runtime_error("cannot append to " + path_->string());
  }
  entries_.push_back(std::move(e));
}

RoundState start_round(int round, const PolicyParams& policy,
                       std::filesystem::path pairs_file) {
  return RoundState{round, policy, policy, std::move(pairs_file), false};
}

RoundResult optimize_round(const RoundState& state, const DpoConfig& cfg,
                           std::span<const PreferencePair> pairs,
                           const PromptIndex& prompts) {
  cfg.validate();
  if (!state.reference) {
    throw StateError("round " + std::to_string(state.round) + " has no reference policy");
  }
  const std::string ref_hash = checkpoint_hash(*state.reference);
  if (ref_hash != checkpoint_hash(state.policy)) {
    throw StateError("round " + std::to_string(state.round) +
                     ": reference is not the incoming checkpoint");
  }
  for (const PreferencePair& p : pairs) {
    p.validate();
    if (p.round != state.round) {
      throw StateError("pair tagged for round " + std::to_string(p.round) +
                       " passed to round " + std::to_string(state.round));
    }
  }
  const PolicyParams& reference = *state.reference;
  PolicyParams theta = state.policy;
  RoundResult result;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PreferencePair> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(state.round),
                                   static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);
      const DpoLoss l = dpo_loss(theta, reference, batch, prompts, cfg.beta);
      if (!l.grad.all_finite()) {
        throw std::runtime_error("non-finite DPO gradient in round " +
                                 std::to_string(state.round));
      }
      theta.mutable_weights().axpy(-cfg.learning_rate, l.grad);
    }
    if (!pairs.empty()) {
      result.epoch_losses.push_back(dpo_loss(theta, reference, pairs, prompts, cfg.beta).loss);
    }
  }
  theta.set_version("dpo-v" + std::to_string(state.round));
  result.reference_hash = ref_hash;
  result.checkpoint_hash = checkpoint_hash(theta);
  result.checkpoint = theta;
  result.next = RoundState{state.round + 1, theta, theta, {}, false};
  return result;
}

RoundResult run_round(const RoundState& state, const DpoConfig& cfg,
                      const PromptIndex& prompts, ConsumptionLedger& ledger) {
  if (state.consumed) {
    throw StateError("round " + std::to_string(state.round) +
                     ": preference file already consumed");
  }
  if (!std::filesystem::exists(state.pairs_file)) {
    throw StateError("missing preference file " + state.pairs_file.string());
  }
  const std::string content_hash = file_hash(state.pairs_file);
  if (ledger.consumed(state.pairs_file, content_hash)) {
    throw StateError("preference file " + state.pairs_file.string() +
                     " was already used by an earlier round");
  }
  const auto pairs = read_pairs(state.pairs_file);
  if (static_cast<int>(pairs.size()) < cfg.pairs_per_round) {
    throw IncompleteRoundError(
        static_cast<std::size_t>(cfg.pairs_per_round) - pairs.size(),
        "round " + std::to_string(state.round) + " needs " +
            std::to_string(cfg.pairs_per_round) + " pairs, file holds " +
            std::to_string(pairs.size()));
  }
  RoundResult result = optimize_round(state, cfg, pairs, prompts);
  ledger.mark(state.pairs_file, content_hash, state.round);
  return result;
}

namespace {

struct Draw {
  const Prompt* prompt;
  Candidate a;
  Candidate b;
};

Draw draw_pair(const PolicyParams& policy, std::span<const Prompt> prompts,
               const PairSampling& sampling, int round, std::uint64_t draw) {
  const Prompt& prompt = prompts[draw % prompts.size()];
  const auto r = static_cast<std::uint64_t>(round);
  return {&prompt,
          sample(policy, prompt, sampling.temperature, sampling.max_len,
                 derive_seed(sampling.seed, {r, draw, 0})),
          sample(policy, prompt, sampling.temperature, sampling.max_len,
                 derive_seed(sampling.seed, {r, draw, 1}))};
}

}  // namespace

std::vector<PreferencePair> make_round_pairs(
    const PolicyParams& policy, std::span<const Prompt> prompts, int n_pairs,
    const PairSampling& sampling, int round, PreferenceJudge& judge,
    int max_draws_factor) {
  if (n_pairs < 1) throw InvalidArgument("n_pairs must be >= 1");
  if (prompts.empty()) throw InvalidArgument("no prompts to draw pairs from");
  std::vector<PreferencePair> out;
  const std::uint64_t budget =
      static_cast<std::uint64_t>(n_pairs) * static_cast<std::uint64_t>(max_draws_factor);
  for (std::uint64_t draw = 0; draw < budget && static_cast<int>(out.size()) < n_pairs;
       ++draw) {
    Draw d = draw_pair(policy, prompts, sampling, round, draw);
    if (d.a.token_ids == d.b.token_ids) continue;
    const Preference pref = judge.compare(d.a, d.b, *d.prompt);
    if (pref == Preference::kTie) continue;
    PreferencePair pair;
    pair.round = round;
    pair.prompt_id = d.prompt->id;
    const bool a_wins = pref == Preference::kPreferA;
    pair.preferred = a_wins ? std::move(d.a) : std::move(d.b);
    pair.dispreferred = a_wins ? std::move(d.b) : std::move(d.a);
    pair.source = judge.source();
    pair.annotator_id = judge.annotator_id();
    pair.timestamp = out.size();
    out.push_back(std::move(pair));
  }
  if (static_cast<int>(out.size()) < n_pairs) {
    const auto missing = static_cast<std::size_t>(n_pairs) - out.size();
    throw IncompleteRoundError(missing, "round " + std::to_string(round) +
                                            " incomplete: " + std::to_string(missing) +
                                            " preference pairs missing");
  }
  return out;
}

std::vector<PairDraft> draft_round_pairs(const PolicyParams& policy,
                                         std::span<const Prompt> prompts,
                                         int n_pairs, const PairSampling& sampling,
                                         int round) {
  if (n_pairs < 1) throw InvalidArgument("n_pairs must be >= 1");
  if (prompts.empty()) throw InvalidArgument("no prompts to draw pairs from");
  std::vector<PairDraft> out;
  const std::uint64_t budget = static_cast<std::uint64_t>(n_pairs) * 20;
  for (std::uint64_t draw = 0; draw < budget && static_cast<int>(out.size()) < n_pairs;
       ++draw) {
    Draw d = draw_pair(policy, prompts, sampling, round, draw);
    if (d.a.token_ids == d.b.token_ids) continue;
    out.push_back({d.prompt->id, std::move(d.a), std::move(d.b)});
  }
  if (static_cast<int>(out.size()) < n_pairs) {
    throw IncompleteRoundError(static_cast<std::size_t>(n_pairs) - out.size(),
                               "could not draw enough distinct candidate pairs");
  }
  return out;
}

}  // namespace ttspo
