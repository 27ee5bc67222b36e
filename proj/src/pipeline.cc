#include "ttspo/pipeline.h"

#include <cstdio>

#include "ttspo/annotator.h"
#include "ttspo/dpo.h"
#include "ttspo/error.h"
#include "ttspo/evaluation.h"
#include "ttspo/pref_service.h"
#include "ttspo/records.h"
#include "ttspo/rng.h"

namespace ttspo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

void write_histogram(const fs::path& path, const PolicyParams& policy, const RunContext& ctx) {
  const auto pool = sample_pool(policy, ctx.env.heldout.empty() ? ctx.env.train : ctx.env.heldout,
                                ctx.cfg.eval);
  const auto counts = pooled_pitch_histogram(pool, ctx.env.vocab);
  write_histogram_csv(path, ctx.env.vocab.pitch_bins(), counts);
}

std::string grpo_system_name(const std::string& preset) { return "grpo-" + preset; }

fs::path dpo_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "dpo"; }

fs::path dpo_checkpoint_path(const ExperimentConfig& cfg, int round) {
  return dpo_dir(cfg) / ("dpo-v" + std::to_string(round) + ".bin");
}

}  // namespace

RunContext make_context(const ExperimentConfig& cfg) {
  cfg.validate();
  Environment env = make_environment(cfg.env);
  PolicyParams base = make_base_policy(env);
  PolicyParams scorer = cfg.scorer_checkpoint ? load_checkpoint(*cfg.scorer_checkpoint) : base;
  if (scorer.spec().vocab_size() != base.spec().vocab_size() ||
      scorer.weights().rows() != base.weights().rows()) {
    throw ConfigError("scorer checkpoint does not match the environment's feature map");
  }
  return RunContext{cfg, std::move(env), std::move(base), std::move(scorer)};
}

json make_manifest(const std::string& command, const ExperimentConfig& cfg,
                   const std::map<std::string, fs::path>& systems, const fs::path& run_dir) {
  json sys = json::object();
  for (const auto& [name, path] : systems) {
    const fs::path full = path.is_absolute() ? path : run_dir / path;
    sys[name] = {{"checkpoint", path.generic_string()}, {"hash", file_hash(full)}};
  }
  return json{{"schema_version", kSchemaVersion},
              {"command", command},
              {"code_version", TTSPO_VERSION},
              {"seed", cfg.seed},
              {"config", config_to_json(cfg)},
              {"systems", sys}};
}

fs::path cmd_init_base(const ExperimentConfig& cfg) {
  const RunContext ctx = make_context(cfg);
  const fs::path dir = cfg.output_dir / "base";
  fs::create_directories(dir);
  save_checkpoint(ctx.base, dir / "checkpoint.bin");
  write_json(dir / "manifest.json",
             make_manifest("init-base", cfg, {{"base", "checkpoint.bin"}}, dir));
  return dir / "checkpoint.bin";
}

GrpoRun cmd_train_grpo(const ExperimentConfig& config, const std::string& preset) {
  ExperimentConfig cfg = config;
  cfg.set_reward_variant(preset);
  const RunContext ctx = make_context(cfg);
  const fs::path dir = cfg.output_dir / ("grpo_" + preset);
  fs::create_directories(dir);

  GrpoResult result = train_grpo(ctx.base, ctx.env.train, cfg.grpo, ctx.scorer, ctx.env.vocab);
  result.params.set_version(grpo_system_name(preset));

  save_checkpoint(result.params, dir / "checkpoint.bin");
  save_checkpoint(ctx.base, dir / "base.bin");
  result.log.write_csv(dir / "train_log.csv");
  write_histogram(dir / "hist_start.csv", ctx.base, ctx);
  write_histogram(dir / "hist_end.csv", result.params, ctx);
  write_json(dir / "manifest.json",
             make_manifest("train-grpo", cfg,
                           {{"base", "base.bin"}, {grpo_system_name(preset), "checkpoint.bin"}},
                           dir));
  return GrpoRun{dir, std::move(result.params), std::move(result.log)};
}

DpoRun cmd_dpo_rounds(const ExperimentConfig& cfg, int rounds) {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  const RunContext ctx = make_context(cfg);
  const fs::path dir = dpo_dir(cfg);
  fs::create_directories(dir);

  PolicyParams start = ctx.base;
  if (cfg.dpo_start_checkpoint || cfg.dpo_start == "grpo") {
    const fs::path start_path = cfg.dpo_start_checkpoint
                                    ? *cfg.dpo_start_checkpoint
                                    : cfg.output_dir / "grpo_clean" / "checkpoint.bin";
    if (!fs::exists(start_path)) {
      throw StateError("no starting checkpoint at " + start_path.string() +
                       "; run train-grpo --preset clean first");
    }
    start = load_checkpoint(start_path);
  }
  DpoRun run{dir, {}, {}, std::move(start)};
  save_checkpoint(run.start, dir / "start.bin");

  ConsumptionLedger ledger(dir / "consumed.jsonl");
  const PromptIndex index = ctx.env.index();
  PolicyParams current = run.start;
  std::map<std::string, fs::path> systems{{"dpo-start", "start.bin"}};

  for (int r = 1; r <= rounds; ++r) {
    const fs::path rdir = round_dir(dir, r);
    const fs::path pairs_file = pairs_path(dir, r);
    const fs::path ckpt = dpo_checkpoint_path(cfg, r);
    const fs::path round_manifest = rdir / "round.json";
    fs::create_directories(rdir);

    // Resume a round that already finished.
    if (fs::exists(ckpt) && fs::exists(round_manifest) && fs::exists(pairs_file) &&
        ledger.consumed(pairs_file, file_hash(pairs_file))) {
      const json m = json::parse(read_file(round_manifest));
      if (m.at("reference_hash") != checkpoint_hash(current)) {
        throw StateError("round " + std::to_string(r) +
                         " on disk was trained from a different reference checkpoint");
      }
      PolicyParams done = load_checkpoint(ckpt);
      if (m.at("checkpoint_hash") != checkpoint_hash(done)) {
        throw StateError("checkpoint " + ckpt.string() + " does not match its round manifest");
      }
      run.reference_hashes.push_back(m.at("reference_hash").get<std::string>());
      run.checkpoints.push_back(done);
      systems["dpo-v" + std::to_string(r)] = ckpt.filename();
      current = std::move(done);
      continue;
    }

    const PairSampling sampling{cfg.dpo.sample_temperature, cfg.dpo.max_len,
                                derive_seed(cfg.dpo.seed, {0x9a17})};
    if (cfg.judge.kind == JudgeKind::kOracle) {
      OracleConfig oc = cfg.judge.oracle;
      oc.seed = derive_seed(oc.seed, {static_cast<std::uint64_t>(r)});
      OracleJudge judge(ctx.env.vocab, oc);
      const auto pairs = make_round_pairs(current, ctx.env.train, cfg.dpo.pairs_per_round,
                                          sampling, r, judge, cfg.dpo.max_draws_factor);
      write_pairs(pairs_file, pairs);
    } else if (!fs::exists(pairs_file)) {
      const fs::path tasks = tasks_path(dir, r);
      if (!fs::exists(tasks)) {
        const auto drafts =
            draft_round_pairs(current, ctx.env.train, cfg.dpo.pairs_per_round, sampling, r);
        const PromptIndex idx = ctx.env.index();
        std::vector<PairTask> out;
        const std::string sys = "dpo-input-v" + std::to_string(r - 1);
        for (std::size_t i = 0; i < drafts.size(); ++i) {
          char id[48];
          std::snprintf(id, sizeof id, "r%d-%04zu", r, i);
          out.push_back(make_task(id, r, idx.at(drafts[i].prompt_id), ctx.env.vocab, sys,
                                  drafts[i].a, sys, drafts[i].b));
        }
        write_tasks(tasks, out);
      }
      throw IncompleteRoundError(
          static_cast<std::size_t>(cfg.dpo.pairs_per_round),
          "round " + std::to_string(r) + " is waiting for human labels; serve " + tasks.string() +
              " and export the round, then rerun dpo-rounds");
    }

    RoundState state = start_round(r, current, pairs_file);
    RoundResult result = run_round(state, cfg.dpo, index, ledger);
    save_checkpoint(result.checkpoint, ckpt);
    write_json(round_manifest, json{{"schema_version", kSchemaVersion},
                                    {"round", r},
                                    {"reference_hash", result.reference_hash},
                                    {"checkpoint_hash", result.checkpoint_hash},
                                    {"pairs_hash", file_hash(pairs_file)},
                                    {"epoch_losses", result.epoch_losses}});
    run.reference_hashes.push_back(result.reference_hash);
    run.checkpoints.push_back(result.checkpoint);
    systems["dpo-v" + std::to_string(r)] = ckpt.filename();
    current = result.checkpoint;
  }
  write_json(dir / "manifest.json", make_manifest("dpo-rounds", cfg, systems, dir));
  return run;
}

fs::path cmd_gen_pairs(const ExperimentConfig& cfg, const fs::path& checkpoint, int round, int n,
                       const fs::path& out) {
  const RunContext ctx = make_context(cfg);
  const PolicyParams policy = load_checkpoint(checkpoint);
  const PairSampling sampling{cfg.dpo.sample_temperature, cfg.dpo.max_len,
                              derive_seed(cfg.dpo.seed, {0x9a17})};
  const auto drafts = draft_round_pairs(policy, ctx.env.train, n, sampling, round);
  const PromptIndex idx = ctx.env.index();
  std::vector<PairTask> tasks;
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    char id[48];
    std::snprintf(id, sizeof id, "r%d-%04zu", round, i);
    tasks.push_back(make_task(id, round, idx.at(drafts[i].prompt_id), ctx.env.vocab,
                              policy.version(), drafts[i].a, policy.version(), drafts[i].b));
  }
  write_tasks(out, tasks);
  return out;
}

std::vector<VoteRecord> simulate_votes(const RunContext& ctx,
                                       const std::map<std::string, PolicyParams>& systems,
                                       int n_votes, std::uint64_t seed) {
  if (systems.size() < 2) throw InvalidArgument("need at least two systems to vote on");
  if (n_votes < 0) throw InvalidArgument("n_votes must be >= 0");
  std::vector<std::pair<const std::string*, const PolicyParams*>> sys;
  for (const auto& [name, p] : systems) sys.emplace_back(&name, &p);
  std::vector<std::pair<std::size_t, std::size_t>> matchups;
  for (std::size_t i = 0; i < sys.size(); ++i) {
    for (std::size_t j = i + 1; j < sys.size(); ++j) matchups.emplace_back(i, j);
  }
  const auto& prompts = ctx.env.heldout.empty() ? ctx.env.train : ctx.env.heldout;
  OracleConfig oc = ctx.cfg.judge.oracle;
  oc.seed = derive_seed(seed, {0x7073});
  Rng judge_rng(oc.seed);
  std::vector<VoteRecord> votes;
  for (int i = 0; i < n_votes; ++i) {
    const auto u = static_cast<std::uint64_t>(i);
    const auto [x, y] = matchups[u % matchups.size()];
    const Prompt& prompt = prompts[(u / matchups.size()) % prompts.size()];
    Rng side(derive_seed(seed, {u, 0x51de}));
    const bool swap = side.bernoulli(0.5);
    const std::size_t a = swap ? y : x;
    const std::size_t b = swap ? x : y;
    for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
      const Candidate ca = sample(*sys[a].second, prompt, ctx.cfg.eval.temperature,
                                  ctx.cfg.eval.max_len, derive_seed(seed, {u, attempt, 0}));
      const Candidate cb = sample(*sys[b].second, prompt, ctx.cfg.eval.temperature,
                                  ctx.cfg.eval.max_len, derive_seed(seed, {u, attempt, 1}));
      const Preference pref = judge(ca, cb, prompt, ctx.env.vocab, oc, judge_rng);
      if (pref == Preference::kTie) continue;
      char id[32];
      std::snprintf(id, sizeof id, "sim-%06d", i);
      votes.push_back(VoteRecord{id, *sys[a].first, *sys[b].first,
                                 pref == Preference::kPreferA ? Winner::kA : Winner::kB, "oracle",
                                 u, prompt.id});
      break;
    }
  }
  return votes;
}

fs::path cmd_simulate_votes(const ExperimentConfig& cfg,
                            const std::map<std::string, fs::path>& systems, int n_votes,
                            const fs::path& out) {
  const RunContext ctx = make_context(cfg);
  std::map<std::string, PolicyParams> loaded;
  for (const auto& [name, path] : systems) loaded.emplace(name, load_checkpoint(path));
  write_votes(out, simulate_votes(ctx, loaded, n_votes, cfg.seed));
  return out;
}

std::vector<LeaderboardRow> cmd_elo(const fs::path& votes_file, const fs::path& out_csv, double k,
                                    double initial) {
  const auto votes = read_votes(votes_file);
  const auto rows = leaderboard(aggregate(votes, systems_in(votes), k, initial));
  write_file_atomic(out_csv, leaderboard_csv(rows));
  return rows;
}

std::map<std::string, fs::path> run_systems(const fs::path& run_dir) {
  const fs::path manifest = run_dir / "manifest.json";
  if (!fs::exists(manifest)) throw StateError("no manifest.json in " + run_dir.string());
  const json m = json::parse(read_file(manifest));
  std::map<std::string, fs::path> out;
  for (const auto& [name, entry] : m.at("systems").items()) {
    const fs::path p = entry.at("checkpoint").get<std::string>();
    out[name] = p.is_absolute() ? p : run_dir / p;
  }
  return out;
}

std::vector<SystemRow> cmd_report(const ExperimentConfig& cfg, const ReportOptions& opts) {
  if (opts.run_dirs.empty()) throw InvalidArgument("report needs at least one run directory");
  const RunContext ctx = make_context(cfg);
  const auto& prompts = ctx.env.heldout.empty() ? ctx.env.train : ctx.env.heldout;

  std::optional<RatingTable> ratings;
  if (opts.votes) {
    const auto votes = read_votes(*opts.votes);
    ratings = aggregate(votes, systems_in(votes), cfg.elo.k_factor, cfg.elo.initial_rating);
  }

  std::vector<SystemRow> rows;
  std::map<std::string, bool> seen;
  fs::create_directories(opts.out_dir);
  for (const fs::path& dir : opts.run_dirs) {
    for (const auto& [name, path] : run_systems(dir)) {
      if (seen[name]) continue;
      seen[name] = true;
      const PolicyParams p = load_checkpoint(path);
      SystemRow row{name, 100.0 * greedy_cer(p, prompts, ctx.env.vocab, ctx.env.max_len()),
                    std::nullopt, "measured"};
      if (ratings) {
        if (const auto it = ratings->ratings.find(name); it != ratings->ratings.end()) {
          row.elo = it->second;
        }
      }
      rows.push_back(std::move(row));
    }
    for (const char* which : {"start", "end"}) {
      const fs::path h = dir / (std::string("hist_") + which + ".csv");
      if (fs::exists(h)) {
        write_file_atomic(opts.out_dir / ("fig2_" + dir.filename().string() + "_" + which + ".csv"),
                          read_file(h));
      }
    }
  }
  if (opts.include_published) {
    for (auto& r : published_table_rows()) rows.push_back(std::move(r));
  }
  write_file_atomic(opts.out_dir / "table.csv", table_csv(rows));
  write_file_atomic(opts.out_dir / "fig1_elo.csv", elo_bar_csv(rows));
  return rows;
}

}  // namespace ttspo
