// Command-line driver for the training, labeling and reporting pipeline.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 a human-labeled round is not complete yet.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ttspo/config.h"
#include "ttspo/error.h"
#include "ttspo/pipeline.h"
#include "ttspo/pref_service.h"

namespace fs = std::filesystem;
using namespace ttspo;

namespace {

PrefServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

ExperimentConfig load(const std::string& path) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

// name=path pairs from --system.
std::map<std::string, fs::path> parse_systems(const std::vector<std::string>& specs) {
  std::map<std::string, fs::path> out;
  for (const std::string& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--system expects name=checkpoint, got '" + s + "'");
    }
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy TTS preference-optimization pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "experiment config (JSON)");

  auto* init = app.add_subcommand("init-base", "write the hand-set base checkpoint");
  auto* validate = app.add_subcommand("validate-config", "check a config and print it resolved");

  auto* grpo = app.add_subcommand("train-grpo", "run GRPO from the base checkpoint");
  std::string preset = "clean";
  grpo->add_option("--preset", preset, "reward preset")->check(CLI::IsMember({"clean", "sim"}));

  auto* dpo = app.add_subcommand("dpo-rounds", "run or resume iterative DPO rounds");
  int rounds = 0;
  std::string judge_kind;
  dpo->add_option("--rounds", rounds, "number of rounds (default: config)");
  dpo->add_option("--judge", judge_kind, "oracle or service")
      ->check(CLI::IsMember({"oracle", "service"}));
  std::string dpo_start;
  dpo->add_option("--start", dpo_start, "round-1 policy: base or grpo")
      ->check(CLI::IsMember({"base", "grpo"}));

  auto* gen = app.add_subcommand("gen-pairs", "draft unlabeled pairs for the labeling service");
  std::string gen_ckpt, gen_out;
  int gen_round = 1, gen_n = 200;
  gen->add_option("--checkpoint", gen_ckpt, "policy to sample from")->required();
  gen->add_option("--round", gen_round, "round tag");
  gen->add_option("--n", gen_n, "number of pairs");
  gen->add_option("--out", gen_out, "tasks file")->required();

  auto* sim = app.add_subcommand("simulate-votes", "oracle votes between systems");
  std::vector<std::string> sim_systems, sim_runs;
  std::string sim_out;
  int sim_n = 600;
  sim->add_option("--system", sim_systems, "name=checkpoint (repeatable)");
  sim->add_option("--run", sim_runs, "run directory whose systems join the pool (repeatable)");
  sim->add_option("--n", sim_n, "number of votes");
  sim->add_option("--out", sim_out, "vote log")->required();

  auto* elo = app.add_subcommand("elo", "aggregate a vote log into a leaderboard CSV");
  std::string elo_votes, elo_out;
  elo->add_option("--votes", elo_votes, "vote log")->required()->check(CLI::ExistingFile);
  elo->add_option("--out", elo_out, "leaderboard CSV")->required();

  auto* report = app.add_subcommand("report", "table and figure data for run directories");
  std::vector<std::string> report_runs;
  std::string report_votes, report_out;
  bool published = false;
  report->add_option("--run", report_runs, "run directory (repeatable)");
  report->add_option("--votes", report_votes, "vote log for ELO columns");
  report->add_flag("--published", published, "append the published comparison rows");
  report->add_option("--out", report_out, "output directory")->required();

  auto* serve = app.add_subcommand("serve", "run the labeling service");
  std::string host = "127.0.0.1", data_dir;
  int port = 8080;
  std::uint64_t swap_seed = 0;
  serve->add_option("--host", host, "bind address (env TTSPO_HOST)");
  serve->add_option("--port", port, "port (env TTSPO_PORT)");
  serve->add_option("--data-dir", data_dir, "round directory root (default: <output>/dpo)");
  serve->add_option("--seed", swap_seed, "side-swap seed (default: config seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = load(config_path);

    if (*init) {
      std::cout << cmd_init_base(cfg).string() << "\n";
    } else if (*validate) {
      std::cout << config_to_json(cfg).dump(2) << "\n";
    } else if (*grpo) {
      const GrpoRun run = cmd_train_grpo(cfg, preset);
      if (!run.log.records.empty()) {
        const auto& last = run.log.records.back();
        std::cout << "step " << last.step << " mean_cer " << last.mean_cer << " std_logf0 "
                  << last.std_logf0 << " nonterm " << last.nonterm_rate << "\n";
      }
      std::cout << run.dir.string() << "\n";
    } else if (*dpo) {
      if (!judge_kind.empty()) {
        cfg.judge.kind = judge_kind == "oracle" ? JudgeKind::kOracle : JudgeKind::kService;
      }
      if (!dpo_start.empty()) cfg.dpo_start = dpo_start;
      const DpoRun run = cmd_dpo_rounds(cfg, rounds > 0 ? rounds : cfg.dpo.rounds);
      for (std::size_t i = 0; i < run.checkpoints.size(); ++i) {
        std::cout << "round " << i + 1 << " reference " << run.reference_hashes[i] << " -> "
                  << checkpoint_hash(run.checkpoints[i]) << "\n";
      }
    } else if (*gen) {
      std::cout << cmd_gen_pairs(cfg, gen_ckpt, gen_round, gen_n, gen_out).string() << "\n";
    } else if (*sim) {
      auto systems = parse_systems(sim_systems);
      for (const auto& r : sim_runs) {
        for (auto& [name, path] : run_systems(r)) systems.emplace(name, path);
      }
      std::cout << cmd_simulate_votes(cfg, systems, sim_n, sim_out).string() << "\n";
    } else if (*elo) {
      for (const auto& row : cmd_elo(elo_votes, elo_out, cfg.elo.k_factor, cfg.elo.initial_rating)) {
        std::cout << row.system << " " << row.rating << " " << row.n_votes << "\n";
      }
    } else if (*report) {
      ReportOptions opts;
      for (const auto& r : report_runs) opts.run_dirs.emplace_back(r);
      if (!report_votes.empty()) opts.votes = report_votes;
      opts.include_published = published;
      opts.out_dir = report_out;
      const auto rows = cmd_report(cfg, opts);
      std::cout << table_csv(rows);
    } else if (*serve) {
      if (const char* h = std::getenv("TTSPO_HOST"); h && *h && serve->count("--host") == 0) host = h;
      if (const char* p = std::getenv("TTSPO_PORT"); p && *p && serve->count("--port") == 0) {
        port = std::stoi(p);
      }
      ServiceConfig sc;
      sc.data_dir = data_dir.empty() ? cfg.output_dir / "dpo" : fs::path(data_dir);
      sc.seed = serve->count("--seed") ? swap_seed : cfg.seed;
      sc.k_factor = cfg.elo.k_factor;
      sc.initial_rating = cfg.elo.initial_rating;
      PreferenceService service(sc);
      PrefServer server(service);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << sc.data_dir.string() << " on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot bind " << host << ":" << port << "\n";
        return 1;
      }
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IncompleteRoundError& e) {
    std::cerr << "incomplete round: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
