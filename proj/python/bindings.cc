#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ttspo/annotator.h"
#include "ttspo/config.h"
#include "ttspo/dpo.h"
#include "ttspo/elo.h"
#include "ttspo/environment.h"
#include "ttspo/error.h"
#include "ttspo/evaluation.h"
#include "ttspo/grpo.h"
#include "ttspo/pipeline.h"
#include "ttspo/reward.h"
#include "ttspo/scoring.h"

namespace py = pybind11;
using namespace ttspo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse_config(const std::string& text, const std::optional<fs::path>& path) {
  ExperimentConfig cfg = path ? load_config(*path) : config_from_json(nlohmann::json::parse(text));
  cfg.validate();
  return cfg;
}

std::string preference_name(Preference p) {
  switch (p) {
    case Preference::kPreferA:
      return "A";
    case Preference::kPreferB:
      return "B";
    case Preference::kTie:
      break;
  }
  return "tie";
}

py::dict summary_dict(const PolicySummary& s) {
  py::dict d;
  d["mean_cer"] = s.mean_cer;
  d["std_logf0"] = s.std_logf0;
  d["mean_logf0"] = s.mean_logf0;
  d["nonterm_rate"] = s.nonterm_rate;
  d["mean_len"] = s.mean_len;
  d["mean_similarity"] = s.mean_similarity;
  d["n"] = s.n;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ttspo, m) {
  m.doc() = "Preference and policy-gradient fine-tuning on a toy speech-token environment";
  m.attr("__version__") = TTSPO_VERSION;

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<StateError> state_error(m, "StateError", PyExc_RuntimeError);
  static py::exception<IncompleteRoundError> incomplete(m, "IncompleteRoundError",
                                                        PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      config_error(e.what());
    } catch (const StateError& e) {
      state_error(e.what());
    } catch (const IncompleteRoundError& e) {
      incomplete(e.what());
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // Reward algebra.
  m.def("edit_distance", [](std::string_view a, std::string_view b) { return edit_distance(a, b); });
  m.def("cer", [](std::string_view ref, std::string_view hyp) { return cer(ref, hyp); },
        py::arg("reference"), py::arg("hypothesis"));
  m.def("utility_cer", [](double c, double tau) { return utility_cer(c, tau).value(); },
        py::arg("c"), py::arg("tau_c") = 1.0);
  m.def("utility_nll", [](double ell, double tau) { return utility_nll(ell, tau).value(); },
        py::arg("ell"), py::arg("tau_ell") = 2.0);
  m.def("utility_sim", [](double s, double floor) { return utility_sim(s, floor).value(); },
        py::arg("s"), py::arg("floor") = kDefaultSimFloor);
  m.def(
      "reward",
      [](double c, double ell, std::optional<double> s, std::optional<std::vector<double>> lambda,
         double tau_c, double tau_ell, double floor) {
        RewardWeights w = s ? RewardWeights::sim() : RewardWeights::clean();
        if (lambda) {
          if (lambda->size() == 2) {
            w = {(*lambda)[0], (*lambda)[1], std::nullopt};
          } else if (lambda->size() == 3) {
            w = {(*lambda)[0], (*lambda)[1], (*lambda)[2]};
          } else {
            throw InvalidArgument("lambda needs 2 or 3 weights");
          }
        }
        return reward({c, ell, s}, w, {tau_c, tau_ell}, floor);
      },
      py::arg("c"), py::arg("ell"), py::arg("s") = py::none(), py::arg("lambda_") = py::none(),
      py::arg("tau_c") = 1.0, py::arg("tau_ell") = 2.0, py::arg("floor") = kDefaultSimFloor);

  m.def("group_advantages",
        [](const std::vector<double>& r, double floor) { return group_advantages(r, floor); },
        py::arg("rewards"), py::arg("std_floor") = 1e-6);
  m.def("dpo_pair_loss", &dpo_pair_loss, py::arg("margin"), py::arg("beta") = 0.1);
  m.def("expected_score", &expected_score, py::arg("r_a"), py::arg("r_b"));
  m.def(
      "aggregate",
      [](const std::vector<std::tuple<std::string, std::string, std::string>>& votes, double k,
         double initial) {
        std::vector<VoteRecord> vs;
        for (std::size_t i = 0; i < votes.size(); ++i) {
          const auto& [a, b, w] = votes[i];
          if (w != "A" && w != "B") throw InvalidArgument("winner must be 'A' or 'B'");
          vs.push_back({"py-" + std::to_string(i), a, b, w == "A" ? Winner::kA : Winner::kB, "py",
                        i, ""});
        }
        return aggregate(vs, systems_in(vs), k, initial).ratings;
      },
      py::arg("votes"), py::arg("k_factor") = kDefaultKFactor,
      py::arg("initial_rating") = kDefaultInitialRating,
      "Ratings from (system_a, system_b, winner) triples applied in order.");

  // Environment and policies.
  py::class_<Prompt>(m, "Prompt")
      .def_readonly("id", &Prompt::id)
      .def_readonly("target_text", &Prompt::target_text)
      .def_readonly("reference_embedding", &Prompt::reference_embedding);

  py::class_<Candidate>(m, "Candidate")
      .def_readonly("prompt_id", &Candidate::prompt_id)
      .def_readonly("token_ids", &Candidate::token_ids)
      .def_readonly("token_logprobs", &Candidate::token_logprobs)
      .def_readonly("terminated", &Candidate::terminated)
      .def_readonly("seed", &Candidate::seed)
      .def("__len__", [](const Candidate& c) { return c.token_ids.size(); });

  py::class_<PolicyParams>(m, "Policy")
      .def_property_readonly("version", &PolicyParams::version)
      .def_property_readonly("vocab_size", &PolicyParams::vocab_size)
      .def("hash", [](const PolicyParams& p) { return checkpoint_hash(p); })
      .def("save", [](const PolicyParams& p, const fs::path& path) { save_checkpoint(p, path); })
      .def("sample",
           [](const PolicyParams& p, const Prompt& prompt, double temperature, int max_len,
              std::uint64_t seed) { return sample(p, prompt, temperature, max_len, seed); },
           py::arg("prompt"), py::arg("temperature") = 1.0, py::arg("max_len") = 24,
           py::arg("seed") = 0)
      .def("greedy",
           [](const PolicyParams& p, const Prompt& prompt, int max_len) {
             return decode_greedy(p, prompt, max_len);
           },
           py::arg("prompt"), py::arg("max_len") = 24)
      .def("sequence_logprob", [](const PolicyParams& p, const Prompt& prompt,
                                  const Candidate& c) { return sequence_logprob(p, prompt, c); });
  m.def("load_checkpoint", [](const fs::path& path) { return load_checkpoint(path); });

  py::class_<Environment>(m, "Environment")
      .def_readonly("train", &Environment::train)
      .def_readonly("heldout", &Environment::heldout)
      .def_property_readonly("vocab_size", [](const Environment& e) { return e.vocab.size(); })
      .def_property_readonly("max_len", &Environment::max_len)
      .def("base_policy", [](const Environment& e) { return make_base_policy(e); })
      .def("transcript", [](const Environment& e, const Candidate& c) { return transcript(c, e.vocab); })
      .def("pitch_contour",
           [](const Environment& e, const Candidate& c) { return pitch_contour(c, e.vocab); })
      .def(
          "score",
          [](const Environment& e, const Candidate& c, const Prompt& p, const PolicyParams& scorer,
             bool with_similarity) {
            const Metrics m = score(c, p, e.vocab, scorer, with_similarity);
            py::dict d;
            d["c"] = m.c;
            d["ell"] = m.ell;
            d["s"] = m.s ? py::cast(*m.s) : py::none();
            return d;
          },
          py::arg("candidate"), py::arg("prompt"), py::arg("scorer"),
          py::arg("with_similarity") = false)
      .def(
          "judge",
          [](const Environment& e, const Candidate& a, const Candidate& b, const Prompt& p,
             double cer_gate) {
            OracleConfig oc;
            oc.cer_gate = cer_gate;
            Rng rng(0);
            return preference_name(judge(a, b, p, e.vocab, oc, rng));
          },
          py::arg("a"), py::arg("b"), py::arg("prompt"), py::arg("cer_gate") = 0.3)
      .def(
          "evaluate",
          [](const Environment& e, const PolicyParams& p, int samples_per_prompt,
             std::uint64_t seed) {
            SamplingSpec spec;
            spec.samples_per_prompt = samples_per_prompt;
            spec.max_len = e.max_len();
            spec.seed = seed;
            return summary_dict(evaluate_sampled(p, e.heldout, e.vocab, spec));
          },
          py::arg("policy"), py::arg("samples_per_prompt") = 4, py::arg("seed") = 12345);
  m.def("make_environment",
        [](const std::string& preset) { return make_environment(EnvConfig::preset(preset)); },
        py::arg("preset") = "default");

  // Pipeline commands; configs arrive as JSON text or a file path.
  py::class_<ExperimentConfig>(m, "Config")
      .def_static(
          "from_json",
          [](const std::string& text) { return parse_config(text, std::nullopt); })
      .def_static("load", [](const fs::path& p) { return parse_config("", p); })
      .def("to_json", [](const ExperimentConfig& c) { return config_to_json(c).dump(); })
      .def("validate", &ExperimentConfig::validate)
      .def_property(
          "output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
          [](ExperimentConfig& c, const fs::path& p) { c.output_dir = p; });

  m.def(
      "train_grpo",
      [](const ExperimentConfig& cfg, const std::string& preset) {
        const GrpoRun run = cmd_train_grpo(cfg, preset);
        py::list log;
        for (const TrainRecord& r : run.log.records) {
          py::dict d;
          d["step"] = r.step;
          d["mean_reward"] = r.mean_reward;
          d["mean_cer"] = r.mean_cer;
          d["std_logf0"] = r.std_logf0;
          d["nonterm_rate"] = r.nonterm_rate;
          log.append(d);
        }
        return py::make_tuple(run.dir, run.checkpoint, log);
      },
      py::arg("config"), py::arg("preset") = "clean");
  m.def(
      "dpo_rounds",
      [](const ExperimentConfig& cfg, int rounds) {
        const DpoRun run = cmd_dpo_rounds(cfg, rounds);
        return py::make_tuple(run.dir, run.checkpoints, run.reference_hashes);
      },
      py::arg("config"), py::arg("rounds") = 3);
  m.def("simulate_votes", &cmd_simulate_votes, py::arg("config"), py::arg("systems"),
        py::arg("n_votes"), py::arg("out"));
  m.def(
      "elo",
      [](const fs::path& votes, const fs::path& out, double k, double initial) {
        std::vector<std::pair<std::string, double>> rows;
        for (const auto& r : cmd_elo(votes, out, k, initial)) rows.emplace_back(r.system, r.rating);
        return rows;
      },
      py::arg("votes"), py::arg("out_csv"), py::arg("k_factor") = kDefaultKFactor,
      py::arg("initial_rating") = kDefaultInitialRating);
  m.def("run_systems", &run_systems, py::arg("run_dir"));
  m.def(
      "report",
      [](const ExperimentConfig& cfg, const std::vector<fs::path>& runs,
         std::optional<fs::path> votes, bool published, const fs::path& out) {
        std::vector<std::tuple<std::string, std::optional<double>, std::optional<double>, std::string>>
            rows;
        for (const SystemRow& r : cmd_report(cfg, {runs, votes, published, out})) {
          rows.emplace_back(r.system, r.cer_percent, r.elo, r.origin);
        }
        return rows;
      },
      py::arg("config"), py::arg("runs"), py::arg("votes") = py::none(),
      py::arg("published") = false, py::arg("out_dir"));
}
