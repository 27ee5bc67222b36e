#pragma once

// Blind pairwise labeling service. The core (PreferenceService) is
// transport independent and testable with an injected clock; PrefServer
// puts it behind HTTP.
//
// Storage is an append-only journal of vote events in the data directory.
// On startup the journal is replayed to rebuild every index; votes.jsonl
// and the per-round pairs exports are derived from it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttspo/dpo.h"
#include "ttspo/elo.h"
#include "ttspo/env.h"

namespace ttspo {

// A queued comparison as stored on disk. Candidates are kept in draft
// order; which one is shown on the left is decided by the service.
struct PairTask {
  std::string task_id;
  int round = 1;
  std::string prompt_id;
  std::string target_text;
  std::string system_a;
  std::string system_b;
  Candidate candidate_a;
  Candidate candidate_b;
  // Display payloads, precomputed so the service needs no vocabulary.
  std::string transcript_a;
  std::string transcript_b;
  std::vector<double> contour_a;
  std::vector<double> contour_b;
};

nlohmann::json task_to_json(const PairTask& task);
PairTask task_from_json(const nlohmann::json& j);
void write_tasks(const std::filesystem::path& path, std::span<const PairTask> tasks);
std::vector<PairTask> read_tasks(const std::filesystem::path& path);

PairTask make_task(std::string task_id, int round, const Prompt& prompt, const Vocab& vocab,
                   std::string system_a, Candidate a, std::string system_b, Candidate b);

// Layout under the data directory.
std::filesystem::path round_dir(const std::filesystem::path& data_dir, int round);
std::filesystem::path tasks_path(const std::filesystem::path& data_dir, int round);
std::filesystem::path pairs_path(const std::filesystem::path& data_dir, int round);

enum class Side { kA, kB };

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::uint64_t seed = 0;        // side-swap randomization
  std::int64_t expiry_ms = 10 * 60 * 1000;
  double k_factor = kDefaultKFactor;
  double initial_rating = kDefaultInitialRating;
};

// Error with an HTTP-ish category so the transport can map it.
class ServiceError : public std::runtime_error {
 public:
  enum class Kind { kNotFound, kConflict, kBadRequest };
  ServiceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct RoundProgress {
  std::size_t voted = 0;
  std::size_t total = 0;
};

class PreferenceService {
 public:
  using Clock = std::function<std::int64_t()>;  // milliseconds

  // Loads round_<r>/tasks.jsonl for every round present and replays the
  // journal. A trailing partial journal line is dropped.
  explicit PreferenceService(ServiceConfig cfg, Clock clock = {});

  // Client view: no system names, no candidate identities, no swap flag.
  // Returns {"status":"complete"} when every task in the round is voted and
  // {"status":"wait"} when the remaining ones are in flight or were already
  // shown to this annotator.
  nlohmann::json next_pair(int round, const std::string& annotator_id);

  // Acknowledgment, identical for duplicate submissions.
  nlohmann::json submit_vote(const std::string& task_id, const std::string& annotator_id,
                             Side choice);

  // Writes round_<r>/pairs.jsonl and returns its bytes.
  std::string export_round(int round, bool allow_partial);

  std::vector<LeaderboardRow> leaderboard() const;
  nlohmann::json leaderboard_json() const;
  nlohmann::json health() const;

  std::vector<VoteRecord> votes() const;
  std::vector<PreferencePair> pairs(int round) const;
  RoundProgress progress(int round) const;
  std::set<int> rounds() const;

  // Whether the preferred candidate was displayed on the left, per voted
  // task of the round. For blindness checks.
  std::vector<bool> preferred_shown_left(int round) const;

  // Called after the journal append and before the acknowledgment; tests
  // use it to simulate a crash at that point.
  void set_after_journal_hook(std::function<void()> hook) { after_journal_ = std::move(hook); }

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct TaskState {
    PairTask task;
    bool swapped = false;  // candidate_b is displayed on the left
    std::optional<std::string> in_flight_for;
    std::int64_t served_at = 0;
    std::set<std::string> served_to;
    // Set once voted.
    std::optional<std::string> voter;
    std::optional<Side> choice;
    std::uint64_t seq = 0;
  };

  struct JournalEntry {
    std::uint64_t seq;
    std::string task_id;
    std::string annotator_id;
    Side choice;
  };

  void load_tasks();
  void replay_journal();
  void apply(const JournalEntry& e);
  void append_journal(const JournalEntry& e);
  void append_vote_log(const TaskState& t);
  void rewrite_vote_log() const;
  nlohmann::json ack(const TaskState& t) const;
  nlohmann::json client_view(const TaskState& t) const;
  std::optional<VoteRecord> vote_record(const TaskState& t) const;
  PreferencePair pair_record(const TaskState& t) const;
  std::vector<const TaskState*> voted_in_order(std::optional<int> round) const;
  RoundProgress progress_unlocked(int round) const;
  std::int64_t now() const;

  ServiceConfig cfg_;
  Clock clock_;
  std::function<void()> after_journal_;
  mutable std::shared_mutex mu_;
  std::map<std::string, TaskState> tasks_;
  std::map<int, std::vector<std::string>> round_order_;
  std::uint64_t next_seq_ = 1;
};

// HTTP front end.
class PrefServer {
 public:
  explicit PrefServer(PreferenceService& service);
  ~PrefServer();

  // Binds and serves until stop(); returns false if the bind fails.
  bool listen(const std::string& host, int port);
  // Binds to an ephemeral port and returns it, or -1.
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ttspo
