#include "ttspo/pref_service.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <regex>

#include "httplib.h"
#include "ttspo/error.h"
#include "ttspo/records.h"
#include "ttspo/rng.h"

namespace ttspo {

using nlohmann::json;

json task_to_json(const PairTask& t) {
  return json{{"schema_version", kSchemaVersion},
              {"task_id", t.task_id},
              {"round", t.round},
              {"prompt_id", t.prompt_id},
              {"target_text", t.target_text},
              {"system_a", t.system_a},
              {"system_b", t.system_b},
              {"candidate_a", candidate_to_json(t.candidate_a)},
              {"candidate_b", candidate_to_json(t.candidate_b)},
              {"transcript_a", t.transcript_a},
              {"transcript_b", t.transcript_b},
              {"contour_a", t.contour_a},
              {"contour_b", t.contour_b}};
}

PairTask task_from_json(const json& j) {
  if (!j.is_object() || j.value("schema_version", 0) != kSchemaVersion) {
    throw InvalidArgument("task record has a missing or unsupported schema_version");
  }
  PairTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.round = j.at("round").get<int>();
  t.prompt_id = j.at("prompt_id").get<std::string>();
  t.target_text = j.at("target_text").get<std::string>();
  t.system_a = j.at("system_a").get<std::string>();
  t.system_b = j.at("system_b").get<std::string>();
  t.candidate_a = candidate_from_json(j.at("candidate_a"));
  t.candidate_b = candidate_from_json(j.at("candidate_b"));
  t.transcript_a = j.at("transcript_a").get<std::string>();
  t.transcript_b = j.at("transcript_b").get<std::string>();
  t.contour_a = j.at("contour_a").get<std::vector<double>>();
  t.contour_b = j.at("contour_b").get<std::vector<double>>();
  if (t.task_id.empty()) throw InvalidArgument("task has an empty id");
  if (t.candidate_a.prompt_id != t.prompt_id || t.candidate_b.prompt_id != t.prompt_id) {
    throw InvalidArgument("task " + t.task_id + " mixes prompts");
  }
  return t;
}

void write_tasks(const std::filesystem::path& path, std::span<const PairTask> tasks) {
  std::string bytes;
  for (const PairTask& t : tasks) bytes += to_line(task_to_json(t));
  write_file_atomic(path, bytes);
}

std::vector<PairTask> read_tasks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<PairTask> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(task_from_json(json::parse(line)));
  }
  return out;
}

PairTask make_task(std::string task_id, int round, const Prompt& prompt, const Vocab& vocab,
                   std::string system_a, Candidate a, std::string system_b, Candidate b) {
  PairTask t;
  t.task_id = std::move(task_id);
  t.round = round;
  t.prompt_id = prompt.id;
  t.target_text = prompt.target_text;
  t.system_a = std::move(system_a);
  t.system_b = std::move(system_b);
  t.transcript_a = transcript(a, vocab);
  t.transcript_b = transcript(b, vocab);
  t.contour_a = pitch_contour(a, vocab);
  t.contour_b = pitch_contour(b, vocab);
  t.candidate_a = std::move(a);
  t.candidate_b = std::move(b);
  return t;
}

std::filesystem::path round_dir(const std::filesystem::path& data_dir, int round) {
  return data_dir / ("round_" + std::to_string(round));
}

std::filesystem::path tasks_path(const std::filesystem::path& data_dir, int round) {
  return round_dir(data_dir, round) / "tasks.jsonl";
}

std::filesystem::path pairs_path(const std::filesystem::path& data_dir, int round) {
  return round_dir(data_dir, round) / "pairs.jsonl";
}

namespace {

const char* side_name(Side s) { return s == Side::kA ? "A" : "B"; }

Side parse_side(const std::string& s) {
  if (s == "A") return Side::kA;
  if (s == "B") return Side::kB;
  throw ServiceError(ServiceError::Kind::kBadRequest, "choice must be 'A' or 'B'");
}

std::filesystem::path journal_path(const ServiceConfig& cfg) {
  return cfg.data_dir / "journal.jsonl";
}

std::filesystem::path votes_path(const ServiceConfig& cfg) { return cfg.data_dir / "votes.jsonl"; }

void append_durable(const std::filesystem::path& path, const std::string& line, bool sync) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw std::runtime_error("write to " + path.string() + " failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  if (sync && ::fsync(fd) != 0) {
    ::close(fd);
    throw std::runtime_error("fsync of " + path.string() + " failed");
  }
  ::close(fd);
}

}  // namespace

PreferenceService::PreferenceService(ServiceConfig cfg, Clock clock)
    : cfg_(std::move(cfg)), clock_(std::move(clock)) {
  if (cfg_.data_dir.empty()) throw InvalidArgument("service data_dir must be set");
  if (cfg_.expiry_ms <= 0) throw InvalidArgument("task expiry must be positive");
  std::filesystem::create_directories(cfg_.data_dir);
  load_tasks();
  replay_journal();
  rewrite_vote_log();
}

std::int64_t PreferenceService::now() const {
  if (clock_) return clock_();
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void PreferenceService::load_tasks() {
  std::vector<int> rounds;
  for (const auto& entry : std::filesystem::directory_iterator(cfg_.data_dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("round_", 0) != 0) continue;
    try {
      rounds.push_back(std::stoi(name.substr(6)));
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(rounds.begin(), rounds.end());
  for (int r : rounds) {
    const auto path = tasks_path(cfg_.data_dir, r);
    if (!std::filesystem::exists(path)) continue;
    auto tasks = read_tasks(path);
    auto& order = round_order_[r];
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      PairTask& t = tasks[i];
      if (t.round != r) {
        throw InvalidArgument("task " + t.task_id + " in round_" + std::to_string(r) +
                              " is tagged for round " + std::to_string(t.round));
      }
      if (tasks_.contains(t.task_id)) throw InvalidArgument("duplicate task id " + t.task_id);
      TaskState st;
      st.swapped = Rng(derive_seed(cfg_.seed, {static_cast<std::uint64_t>(r), i})).bernoulli(0.5);
      order.push_back(t.task_id);
      st.task = std::move(t);
      tasks_.emplace(st.task.task_id, std::move(st));
    }
  }
}

void PreferenceService::replay_journal() {
  const auto path = journal_path(cfg_);
  if (!std::filesystem::exists(path)) return;
  const std::string bytes = read_file(path);
  const std::size_t committed = bytes.rfind('\n') == std::string::npos ? 0 : bytes.rfind('\n') + 1;
  std::size_t pos = 0;
  while (pos < committed) {
    const std::size_t end = bytes.find('\n', pos);
    const std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const json j = json::parse(line);
    JournalEntry e{j.at("seq").get<std::uint64_t>(), j.at("task_id").get<std::string>(),
                   j.at("annotator_id").get<std::string>(),
                   parse_side(j.at("choice").get<std::string>())};
    apply(e);
    next_seq_ = std::max(next_seq_, e.seq + 1);
  }
  if (committed < bytes.size()) {
    // An append that never completed; it was never acknowledged.
    std::filesystem::resize_file(path, committed);
  }
}

void PreferenceService::apply(const JournalEntry& e) {
  const auto it = tasks_.find(e.task_id);
  if (it == tasks_.end()) throw StateError("journal references unknown task " + e.task_id);
  TaskState& t = it->second;
  if (t.voter) throw StateError("journal votes twice on task " + e.task_id);
  t.voter = e.annotator_id;
  t.choice = e.choice;
  t.seq = e.seq;
  t.in_flight_for.reset();
  t.served_to.insert(e.annotator_id);
}

void PreferenceService::append_journal(const JournalEntry& e) {
  const json j = {{"schema_version", kSchemaVersion},
                  {"seq", e.seq},
                  {"task_id", e.task_id},
                  {"annotator_id", e.annotator_id},
                  {"choice", side_name(e.choice)}};
  append_durable(journal_path(cfg_), to_line(j), true);
}

std::optional<VoteRecord> PreferenceService::vote_record(const TaskState& t) const {
  const std::string& left = t.swapped ? t.task.system_b : t.task.system_a;
  const std::string& right = t.swapped ? t.task.system_a : t.task.system_b;
  if (left == right) return std::nullopt;
  return VoteRecord{t.task.task_id + ":" + *t.voter,
                    left,
                    right,
                    *t.choice == Side::kA ? Winner::kA : Winner::kB,
                    *t.voter,
                    t.seq,
                    t.task.prompt_id};
}

PreferencePair PreferenceService::pair_record(const TaskState& t) const {
  const bool a_preferred = (*t.choice == Side::kA) != t.swapped;
  PreferencePair p;
  p.round = t.task.round;
  p.prompt_id = t.task.prompt_id;
  p.preferred = a_preferred ? t.task.candidate_a : t.task.candidate_b;
  p.dispreferred = a_preferred ? t.task.candidate_b : t.task.candidate_a;
  p.source = PreferenceSource::kHuman;
  p.annotator_id = *t.voter;
  p.timestamp = t.seq;
  return p;
}

void PreferenceService::append_vote_log(const TaskState& t) {
  if (const auto v = vote_record(t)) append_durable(votes_path(cfg_), to_line(vote_to_json(*v)), false);
}

void PreferenceService::rewrite_vote_log() const {
  std::vector<VoteRecord> v;
  for (const TaskState* t : voted_in_order(std::nullopt)) {
    if (auto r = vote_record(*t)) v.push_back(std::move(*r));
  }
  write_votes(votes_path(cfg_), v);
}

std::vector<const PreferenceService::TaskState*> PreferenceService::voted_in_order(
    std::optional<int> round) const {
  std::vector<const TaskState*> out;
  for (const auto& [_, t] : tasks_) {
    if (t.voter && (!round || t.task.round == *round)) out.push_back(&t);
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
  return out;
}

json PreferenceService::client_view(const TaskState& t) const {
  const auto side = [](const std::string& transcript, const std::vector<double>& contour) {
    return json{{"transcript", transcript}, {"pitch_contour", contour}};
  };
  const RoundProgress p = progress_unlocked(t.task.round);
  return json{{"schema_version", kSchemaVersion},
              {"status", "task"},
              {"task_id", t.task.task_id},
              {"round", t.task.round},
              {"target_text", t.task.target_text},
              {"side_a", t.swapped ? side(t.task.transcript_b, t.task.contour_b)
                                   : side(t.task.transcript_a, t.task.contour_a)},
              {"side_b", t.swapped ? side(t.task.transcript_a, t.task.contour_a)
                                   : side(t.task.transcript_b, t.task.contour_b)},
              {"progress", {{"voted", p.voted}, {"total", p.total}}}};
}

json PreferenceService::ack(const TaskState& t) const {
  return json{{"schema_version", kSchemaVersion}, {"status", "recorded"},
              {"task_id", t.task.task_id},        {"annotator_id", *t.voter},
              {"choice", side_name(*t.choice)},   {"vote_seq", t.seq}};
}

json PreferenceService::next_pair(int round, const std::string& annotator_id) {
  if (annotator_id.empty()) throw ServiceError(ServiceError::Kind::kBadRequest, "annotator id is required");
  std::unique_lock lock(mu_);
  const auto order = round_order_.find(round);
  if (order == round_order_.end()) {
    throw ServiceError(ServiceError::Kind::kNotFound, "unknown round " + std::to_string(round));
  }
  const std::int64_t t_now = now();
  bool any_open = false;
  for (const std::string& id : order->second) {
    TaskState& t = tasks_.at(id);
    if (t.voter) continue;
    if (t.in_flight_for && t_now - t.served_at >= cfg_.expiry_ms) t.in_flight_for.reset();
    any_open = true;
    if (t.in_flight_for || t.served_to.contains(annotator_id)) continue;
    t.in_flight_for = annotator_id;
    t.served_at = t_now;
    t.served_to.insert(annotator_id);
    return client_view(t);
  }
  const RoundProgress p = progress_unlocked(round);
  return json{{"schema_version", kSchemaVersion},
              {"status", any_open ? "wait" : "complete"},
              {"round", round},
              {"progress", {{"voted", p.voted}, {"total", p.total}}}};
}

json PreferenceService::submit_vote(const std::string& task_id, const std::string& annotator_id,
                                    Side choice) {
  using K = ServiceError::Kind;
  std::unique_lock lock(mu_);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw ServiceError(K::kNotFound, "unknown task " + task_id);
  TaskState& t = it->second;
  if (t.voter) {
    if (*t.voter == annotator_id) return ack(t);
    throw ServiceError(K::kConflict, "task " + task_id + " was already voted");
  }
  if (t.in_flight_for != annotator_id) {
    if (t.served_to.contains(annotator_id)) {
      throw ServiceError(K::kConflict, "task " + task_id + " expired and was re-queued");
    }
    throw ServiceError(K::kConflict, "task " + task_id + " is not assigned to " + annotator_id);
  }
  if (now() - t.served_at >= cfg_.expiry_ms) {
    t.in_flight_for.reset();
    throw ServiceError(K::kConflict, "task " + task_id + " expired and was re-queued");
  }
  const JournalEntry e{next_seq_, task_id, annotator_id, choice};
  append_journal(e);
  ++next_seq_;
  if (after_journal_) after_journal_();
  apply(e);
  append_vote_log(t);
  return ack(t);
}

std::string PreferenceService::export_round(int round, bool allow_partial) {
  std::unique_lock lock(mu_);
  if (!round_order_.contains(round)) {
    throw ServiceError(ServiceError::Kind::kNotFound, "unknown round " + std::to_string(round));
  }
  const RoundProgress p = progress_unlocked(round);
  if (p.voted < p.total && !allow_partial) {
    const std::size_t missing = p.total - p.voted;
    throw IncompleteRoundError(missing, std::to_string(missing) + " votes missing");
  }
  std::string bytes;
  for (const TaskState* t : voted_in_order(round)) bytes += to_line(pair_to_json(pair_record(*t)));
  write_file_atomic(pairs_path(cfg_.data_dir, round), bytes);
  return bytes;
}

std::vector<VoteRecord> PreferenceService::votes() const {
  std::shared_lock lock(mu_);
  std::vector<VoteRecord> out;
  for (const TaskState* t : voted_in_order(std::nullopt)) {
    if (auto v = vote_record(*t)) out.push_back(std::move(*v));
  }
  return out;
}

std::vector<PreferencePair> PreferenceService::pairs(int round) const {
  std::shared_lock lock(mu_);
  std::vector<PreferencePair> out;
  for (const TaskState* t : voted_in_order(round)) out.push_back(pair_record(*t));
  return out;
}

RoundProgress PreferenceService::progress(int round) const {
  std::shared_lock lock(mu_);
  return progress_unlocked(round);
}

RoundProgress PreferenceService::progress_unlocked(int round) const {
  RoundProgress p;
  const auto it = round_order_.find(round);
  if (it == round_order_.end()) return p;
  p.total = it->second.size();
  for (const std::string& id : it->second) p.voted += tasks_.at(id).voter ? 1 : 0;
  return p;
}

std::set<int> PreferenceService::rounds() const {
  std::set<int> out;
  for (const auto& [r, _] : round_order_) out.insert(r);
  return out;
}

std::vector<bool> PreferenceService::preferred_shown_left(int round) const {
  std::shared_lock lock(mu_);
  std::vector<bool> out;
  for (const TaskState* t : voted_in_order(round)) out.push_back(*t->choice == Side::kA);
  return out;
}

std::vector<LeaderboardRow> PreferenceService::leaderboard() const {
  const auto v = votes();
  return ttspo::leaderboard(aggregate(v, systems_in(v), cfg_.k_factor, cfg_.initial_rating));
}

json PreferenceService::leaderboard_json() const {
  json rows = json::array();
  for (const auto& r : leaderboard()) {
    rows.push_back({{"system", r.system}, {"rating", r.rating}, {"n_votes", r.n_votes}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"k_factor", cfg_.k_factor},
              {"initial_rating", cfg_.initial_rating},
              {"rows", rows}};
}

json PreferenceService::health() const {
  std::shared_lock lock(mu_);
  json rounds = json::array();
  for (const auto& [r, _] : round_order_) {
    const RoundProgress p = progress_unlocked(r);
    rounds.push_back({{"round", r}, {"voted", p.voted}, {"total", p.total}});
  }
  return json{{"schema_version", kSchemaVersion}, {"status", "ok"}, {"rounds", rounds}};
}

struct PrefServer::Impl {
  PreferenceService& service;
  httplib::Server server;
  explicit Impl(PreferenceService& s) : service(s) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                json extra = json::object()) {
  extra["schema_version"] = kSchemaVersion;
  extra["error"] = message;
  send_json(res, status, extra);
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      const int status = e.kind() == ServiceError::Kind::kNotFound   ? 404
                         : e.kind() == ServiceError::Kind::kConflict ? 409
                                                                     : 400;
      send_error(res, status, e.what());
    } catch (const IncompleteRoundError& e) {
      send_error(res, 409, e.what(), {{"missing", e.missing()}});
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

PrefServer::PrefServer(PreferenceService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  srv.Get("/api/health", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, svc.health());
          }));
  srv.Get(R"(/api/round/(\d+)/next)",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const int round = std::stoi(req.matches[1]);
            send_json(res, 200, svc.next_pair(round, req.get_param_value("annotator")));
          }));
  srv.Post("/api/vote", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = json::parse(req.body);
             send_json(res, 200,
                       svc.submit_vote(body.at("task_id").get<std::string>(),
                                       body.at("annotator_id").get<std::string>(),
                                       parse_side(body.at("choice").get<std::string>())));
           }));
  srv.Get("/api/leaderboard", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, svc.leaderboard_json());
          }));
  srv.Get(R"(/api/round/(\d+)/export)",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const int round = std::stoi(req.matches[1]);
            const std::string partial = req.get_param_value("partial");
            const bool allow = partial == "1" || partial == "true";
            res.status = 200;
            res.set_header("Content-Disposition",
                           "attachment; filename=\"round_" + std::to_string(round) + "_pairs.jsonl\"");
            res.set_content(svc.export_round(round, allow), "application/x-ndjson");
          }));
}

PrefServer::~PrefServer() { stop(); }

bool PrefServer::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int PrefServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool PrefServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void PrefServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace ttspo
