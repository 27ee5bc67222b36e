#include "ttspo/config.h"

#include <cstdlib>
#include <fstream>
#include <set>

#include "ttspo/error.h"
#include "ttspo/records.h"

namespace ttspo {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + section + "." + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + " has the wrong type");
  }
}

void read_env(const json& j, EnvConfig& e) {
  const std::string s = "env";
  reject_unknown(j, s, {"preset", "alphabet", "pitch_bins", "f_min_hz", "f_max_hz", "max_len",
                        "near_max_window", "train_prompts", "heldout_prompts", "min_text_len",
                        "max_text_len", "style_center", "style_width", "reference_draws",
                        "seed", "base"});
  read(j, "alphabet", e.alphabet, s);
  read(j, "pitch_bins", e.n_bins, s);
  read(j, "f_min_hz", e.f_min_hz, s);
  read(j, "f_max_hz", e.f_max_hz, s);
  read(j, "max_len", e.max_len, s);
  read(j, "near_max_window", e.near_max_window, s);
  read(j, "train_prompts", e.train_prompts, s);
  read(j, "heldout_prompts", e.heldout_prompts, s);
  read(j, "min_text_len", e.min_text_len, s);
  read(j, "max_text_len", e.max_text_len, s);
  read(j, "style_center", e.style_center, s);
  read(j, "style_width", e.style_width, s);
  read(j, "reference_draws", e.reference_draws, s);
  read(j, "seed", e.seed, s);
  if (const auto it = j.find("base"); it != j.end()) {
    const std::string b = "env.base";
    reject_unknown(*it, b, {"char_logit", "eos_exhausted", "eos_in_text", "pitch_center",
                            "pitch_width", "filler_logit", "filler_char", "filler_bin"});
    read(*it, "char_logit", e.base.char_logit, b);
    read(*it, "eos_exhausted", e.base.eos_exhausted, b);
    read(*it, "eos_in_text", e.base.eos_in_text, b);
    read(*it, "pitch_center", e.base.pitch_center, b);
    read(*it, "pitch_width", e.base.pitch_width, b);
    read(*it, "filler_logit", e.base.filler_logit, b);
    read(*it, "filler_char", e.base.filler_char, b);
    read(*it, "filler_bin", e.base.filler_bin, b);
  }
}

void read_reward(const json& j, ExperimentConfig& cfg) {
  const std::string s = "reward";
  reject_unknown(j, s, {"variant", "lambda", "tau_c", "tau_ell", "sim_floor"});
  std::string variant = cfg.reward_variant;
  read(j, "variant", variant, s);
  cfg.set_reward_variant(variant);
  RewardConfig& r = cfg.grpo.reward;
  if (const auto it = j.find("lambda"); it != j.end()) {
    std::vector<double> l;
    read(j, "lambda", l, s);
    const std::size_t want = variant == "sim" ? 3 : 2;
    if (l.size() != want) {
      throw ConfigError("reward.lambda has " + std::to_string(l.size()) + " entries but the '" +
                        variant + "' variant needs " + std::to_string(want));
    }
    r.weights.lambda_c = l[0];
    r.weights.lambda_ell = l[1];
    r.weights.lambda_s = want == 3 ? std::optional<double>(l[2]) : std::nullopt;
  }
  read(j, "tau_c", r.temps.tau_c, s);
  read(j, "tau_ell", r.temps.tau_ell, s);
  read(j, "sim_floor", r.sim_floor, s);
}

void read_grpo(const json& j, GrpoConfig& g) {
  const std::string s = "grpo";
  reject_unknown(j, s, {"group_size", "learning_rate", "clip_epsilon", "adv_std_floor", "steps",
                        "prompts_per_step", "max_len", "temperature", "inner_epochs", "kl_coef",
                        "scale_by_std", "seed"});
  read(j, "group_size", g.group_size, s);
  read(j, "learning_rate", g.learning_rate, s);
  read(j, "clip_epsilon", g.clip_epsilon, s);
  read(j, "adv_std_floor", g.adv_std_floor, s);
  read(j, "steps", g.steps, s);
  read(j, "prompts_per_step", g.prompts_per_step, s);
  read(j, "max_len", g.max_len, s);
  read(j, "temperature", g.temperature, s);
  read(j, "inner_epochs", g.inner_epochs, s);
  read(j, "kl_coef", g.kl_coef, s);
  read(j, "scale_by_std", g.scale_by_std, s);
  read(j, "seed", g.seed, s);
}

void read_dpo(const json& j, ExperimentConfig& cfg) {
  DpoConfig& d = cfg.dpo;
  const std::string s = "dpo";
  reject_unknown(j, s, {"beta", "learning_rate", "epochs", "batch_size", "pairs_per_round",
                        "rounds", "seed", "sample_temperature", "max_len", "max_draws_factor",
                        "start", "start_checkpoint"});
  read(j, "beta", d.beta, s);
  read(j, "learning_rate", d.learning_rate, s);
  read(j, "epochs", d.epochs, s);
  read(j, "batch_size", d.batch_size, s);
  read(j, "pairs_per_round", d.pairs_per_round, s);
  read(j, "rounds", d.rounds, s);
  read(j, "seed", d.seed, s);
  read(j, "sample_temperature", d.sample_temperature, s);
  read(j, "max_len", d.max_len, s);
  read(j, "max_draws_factor", d.max_draws_factor, s);
  read(j, "start", cfg.dpo_start, s);
  if (j.contains("start_checkpoint")) {
    std::string p;
    read(j, "start_checkpoint", p, s);
    cfg.dpo_start_checkpoint = p;
  }
}

void read_judge(const json& j, JudgeConfig& jc) {
  const std::string s = "judge";
  reject_unknown(j, s, {"kind", "cer_gate", "dispersion_weight", "noise_prob", "seed",
                        "service_url"});
  std::string kind = "oracle";
  read(j, "kind", kind, s);
  if (kind == "oracle") {
    jc.kind = JudgeKind::kOracle;
  } else if (kind == "service") {
    jc.kind = JudgeKind::kService;
  } else {
    throw ConfigError("judge.kind must be 'oracle' or 'service', got '" + kind + "'");
  }
  read(j, "cer_gate", jc.oracle.cer_gate, s);
  read(j, "dispersion_weight", jc.oracle.dispersion_weight, s);
  read(j, "noise_prob", jc.oracle.noise_prob, s);
  read(j, "seed", jc.oracle.seed, s);
  read(j, "service_url", jc.service_url, s);
}

}  // namespace

void ExperimentConfig::set_reward_variant(const std::string& variant) {
  if (variant == "clean") {
    grpo.reward.weights = RewardWeights::clean();
  } else if (variant == "sim") {
    grpo.reward.weights = RewardWeights::sim();
  } else {
    throw ConfigError("reward variant must be 'clean' or 'sim', got '" + variant + "'");
  }
  reward_variant = variant;
}

void ExperimentConfig::validate() const {
  env.validate();
  if (reward_variant != "clean" && reward_variant != "sim") {
    throw ConfigError("reward variant must be 'clean' or 'sim'");
  }
  if ((reward_variant == "sim") != grpo.reward.weights.three_term()) {
    throw ConfigError("reward weights do not match the '" + reward_variant + "' variant");
  }
  try {
    grpo.reward.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("reward: ") + e.what());
  }
  grpo.validate();
  if (grpo.max_len > env.max_len) throw ConfigError("grpo.max_len exceeds env.max_len");
  dpo.validate();
  if (dpo.max_len > env.max_len) throw ConfigError("dpo.max_len exceeds env.max_len");
  try {
    judge.oracle.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("judge: ") + e.what());
  }
  if (!(elo.k_factor > 0)) throw ConfigError("elo.k_factor must be positive");
  if (eval.samples_per_prompt < 1 || !(eval.temperature > 0) || eval.max_len < 1) {
    throw ConfigError("eval settings must be positive");
  }
  if (scorer_checkpoint && !std::filesystem::exists(*scorer_checkpoint)) {
    throw ConfigError("scorer checkpoint not found: " + scorer_checkpoint->string());
  }
  if (dpo_start_checkpoint && !std::filesystem::exists(*dpo_start_checkpoint)) {
    throw ConfigError("dpo start checkpoint not found: " + dpo_start_checkpoint->string());
  }
  if (dpo_start != "base" && dpo_start != "grpo") {
    throw ConfigError("dpo.start must be 'base' or 'grpo', got '" + dpo_start + "'");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "config", {"schema_version", "env", "scorer_checkpoint", "reward", "grpo",
                               "dpo", "judge", "elo", "eval", "seed", "output_dir"});
  if (j.contains("schema_version") && j.at("schema_version") != kSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + j.at("schema_version").dump());
  }
  ExperimentConfig cfg;
  if (const auto it = j.find("env"); it != j.end()) {
    read(*it, "preset", cfg.env_preset, "env");
    cfg.env = EnvConfig::preset(cfg.env_preset);
    read_env(*it, cfg.env);
  }
  cfg.grpo.max_len = cfg.env.max_len;
  cfg.dpo.max_len = cfg.env.max_len;
  cfg.eval.max_len = cfg.env.max_len;
  if (j.contains("scorer_checkpoint")) {
    std::string p;
    read(j, "scorer_checkpoint", p, "config");
    cfg.scorer_checkpoint = p;
  }
  if (const auto it = j.find("grpo"); it != j.end()) read_grpo(*it, cfg.grpo);
  if (const auto it = j.find("reward"); it != j.end()) read_reward(*it, cfg);
  if (const auto it = j.find("dpo"); it != j.end()) read_dpo(*it, cfg);
  if (const auto it = j.find("judge"); it != j.end()) read_judge(*it, cfg.judge);
  if (const auto it = j.find("elo"); it != j.end()) {
    reject_unknown(*it, "elo", {"k_factor", "initial_rating"});
    read(*it, "k_factor", cfg.elo.k_factor, "elo");
    read(*it, "initial_rating", cfg.elo.initial_rating, "elo");
  }
  if (const auto it = j.find("eval"); it != j.end()) {
    reject_unknown(*it, "eval", {"samples_per_prompt", "temperature", "max_len", "seed"});
    read(*it, "samples_per_prompt", cfg.eval.samples_per_prompt, "eval");
    read(*it, "temperature", cfg.eval.temperature, "eval");
    read(*it, "max_len", cfg.eval.max_len, "eval");
    read(*it, "seed", cfg.eval.seed, "eval");
  }
  read(j, "seed", cfg.seed, "config");
  std::string out = cfg.output_dir.string();
  read(j, "output_dir", out, "config");
  cfg.output_dir = out;
  return cfg;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& b = c.env.base;
  const auto& r = c.grpo.reward;
  json lambda = {r.weights.lambda_c, r.weights.lambda_ell};
  if (r.weights.lambda_s) lambda.push_back(*r.weights.lambda_s);
  json j = {
      {"schema_version", kSchemaVersion},
      {"env",
       {{"preset", c.env_preset},
        {"alphabet", c.env.alphabet},
        {"pitch_bins", c.env.n_bins},
        {"f_min_hz", c.env.f_min_hz},
        {"f_max_hz", c.env.f_max_hz},
        {"max_len", c.env.max_len},
        {"near_max_window", c.env.near_max_window},
        {"train_prompts", c.env.train_prompts},
        {"heldout_prompts", c.env.heldout_prompts},
        {"min_text_len", c.env.min_text_len},
        {"max_text_len", c.env.max_text_len},
        {"style_center", c.env.style_center},
        {"style_width", c.env.style_width},
        {"reference_draws", c.env.reference_draws},
        {"seed", c.env.seed},
        {"base",
         {{"char_logit", b.char_logit},
          {"eos_exhausted", b.eos_exhausted},
          {"eos_in_text", b.eos_in_text},
          {"pitch_center", b.pitch_center},
          {"pitch_width", b.pitch_width},
          {"filler_logit", b.filler_logit},
          {"filler_char", b.filler_char},
          {"filler_bin", b.filler_bin}}}}},
      {"reward",
       {{"variant", c.reward_variant},
        {"lambda", lambda},
        {"tau_c", r.temps.tau_c},
        {"tau_ell", r.temps.tau_ell},
        {"sim_floor", r.sim_floor}}},
      {"grpo",
       {{"group_size", c.grpo.group_size},
        {"learning_rate", c.grpo.learning_rate},
        {"clip_epsilon", c.grpo.clip_epsilon},
        {"adv_std_floor", c.grpo.adv_std_floor},
        {"steps", c.grpo.steps},
        {"prompts_per_step", c.grpo.prompts_per_step},
        {"max_len", c.grpo.max_len},
        {"temperature", c.grpo.temperature},
        {"inner_epochs", c.grpo.inner_epochs},
        {"kl_coef", c.grpo.kl_coef},
        {"scale_by_std", c.grpo.scale_by_std},
        {"seed", c.grpo.seed}}},
      {"dpo",
       {{"beta", c.dpo.beta},
        {"learning_rate", c.dpo.learning_rate},
        {"epochs", c.dpo.epochs},
        {"batch_size", c.dpo.batch_size},
        {"pairs_per_round", c.dpo.pairs_per_round},
        {"rounds", c.dpo.rounds},
        {"seed", c.dpo.seed},
        {"sample_temperature", c.dpo.sample_temperature},
        {"max_len", c.dpo.max_len},
        {"max_draws_factor", c.dpo.max_draws_factor},
        {"start", c.dpo_start}}},
      {"judge",
       {{"kind", c.judge.kind == JudgeKind::kOracle ? "oracle" : "service"},
        {"cer_gate", c.judge.oracle.cer_gate},
        {"dispersion_weight", c.judge.oracle.dispersion_weight},
        {"noise_prob", c.judge.oracle.noise_prob},
        {"seed", c.judge.oracle.seed},
        {"service_url", c.judge.service_url}}},
      {"elo", {{"k_factor", c.elo.k_factor}, {"initial_rating", c.elo.initial_rating}}},
      {"eval",
       {{"samples_per_prompt", c.eval.samples_per_prompt},
        {"temperature", c.eval.temperature},
        {"max_len", c.eval.max_len},
        {"seed", c.eval.seed}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()}};
  if (c.scorer_checkpoint) j["scorer_checkpoint"] = c.scorer_checkpoint->string();
  if (c.dpo_start_checkpoint) j["dpo"]["start_checkpoint"] = c.dpo_start_checkpoint->string();
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  // Relative paths inside the file are relative to the file.
  const auto base = path.parent_path();
  auto rebase = [&](std::filesystem::path& p) {
    if (p.is_relative() && !base.empty()) p = base / p;
  };
  if (cfg.scorer_checkpoint) rebase(*cfg.scorer_checkpoint);
  if (cfg.dpo_start_checkpoint) rebase(*cfg.dpo_start_checkpoint);
  return cfg;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* root = std::getenv("TTSPO_OUTPUT_ROOT"); root && *root) {
    if (cfg.output_dir.is_relative()) cfg.output_dir = std::filesystem::path(root) / cfg.output_dir;
  }
}

}  // namespace ttspo
