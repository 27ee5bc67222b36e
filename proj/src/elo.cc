#include "ttspo/elo.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ttspo/error.h"
#include "ttspo/records.h"

namespace ttspo {

using nlohmann::json;

void VoteRecord::validate() const {
  if (vote_id.empty()) throw InvalidArgument("vote has an empty id");
  if (system_a.empty() || system_b.empty()) throw InvalidArgument("vote has an empty system name");
  if (system_a == system_b) {
    throw InvalidArgument("vote " + vote_id + " compares system '" + system_a + "' with itself");
  }
}

RatingTable RatingTable::with_systems(const std::set<std::string>& systems, double k,
                                      double initial) {
  if (!(k > 0) || !std::isfinite(k)) throw InvalidArgument("k_factor must be positive");
  if (!std::isfinite(initial)) throw InvalidArgument("initial rating must be finite");
  RatingTable t;
  t.k_factor = k;
  t.initial_rating = initial;
  for (const std::string& s : systems) {
    t.ratings[s] = initial;
    t.n_votes[s] = 0;
  }
  return t;
}

double RatingTable::total() const {
  double sum = 0;
  for (const auto& [_, r] : ratings) sum += r;
  return sum;
}

double expected_score(double r_a, double r_b) {
  if (!std::isfinite(r_a) || !std::isfinite(r_b)) throw InvalidArgument("ratings must be finite");
  return 1.0 / (1.0 + std::pow(10.0, (r_b - r_a) / 400.0));
}

void apply_vote(RatingTable& table, const VoteRecord& vote) {
  vote.validate();
  const auto a = table.ratings.find(vote.system_a);
  const auto b = table.ratings.find(vote.system_b);
  if (a == table.ratings.end()) throw InvalidArgument("unknown system '" + vote.system_a + "'");
  if (b == table.ratings.end()) throw InvalidArgument("unknown system '" + vote.system_b + "'");
  auto& win = vote.winner == Winner::kA ? a->second : b->second;
  auto& lose = vote.winner == Winner::kA ? b->second : a->second;
  const double delta = table.k_factor * (1.0 - expected_score(win, lose));
  win += delta;
  lose -= delta;
  ++table.n_votes[vote.system_a];
  ++table.n_votes[vote.system_b];
}

RatingTable aggregate(std::span<const VoteRecord> votes, const std::set<std::string>& systems,
                      double k, double initial) {
  RatingTable table = RatingTable::with_systems(systems, k, initial);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (i > 0 && votes[i].timestamp < votes[i - 1].timestamp) {
      throw InvalidArgument("vote " + votes[i].vote_id + " is out of timestamp order");
    }
    apply_vote(table, votes[i]);
  }
  return table;
}

std::vector<LeaderboardRow> leaderboard(const RatingTable& table) {
  std::vector<LeaderboardRow> rows;
  for (const auto& [system, rating] : table.ratings) {
    const auto n = table.n_votes.find(system);
    rows.push_back({system, rating, n == table.n_votes.end() ? 0 : n->second});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
    return x.rating > y.rating;
  });
  return rows;
}

std::string leaderboard_csv(std::span<const LeaderboardRow> rows) {
  std::string out = "system,rating,n_votes\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%zu\n", r.rating, r.n_votes);
    out += r.system + buf;
  }
  return out;
}

json vote_to_json(const VoteRecord& v) {
  return json{{"schema_version", kSchemaVersion},
              {"vote_id", v.vote_id},
              {"system_a", v.system_a},
              {"system_b", v.system_b},
              {"winner", v.winner == Winner::kA ? "A" : "B"},
              {"annotator_id", v.annotator_id},
              {"timestamp", v.timestamp},
              {"prompt_id", v.prompt_id}};
}

VoteRecord vote_from_json(const json& j) {
  if (!j.is_object() || j.value("schema_version", 0) != kSchemaVersion) {
    throw InvalidArgument("vote record has a missing or unsupported schema_version");
  }
  VoteRecord v;
  v.vote_id = j.at("vote_id").get<std::string>();
  v.system_a = j.at("system_a").get<std::string>();
  v.system_b = j.at("system_b").get<std::string>();
  const std::string w = j.at("winner").get<std::string>();
  if (w == "A") {
    v.winner = Winner::kA;
  } else if (w == "B") {
    v.winner = Winner::kB;
  } else {
    throw InvalidArgument("vote winner must be A or B, got '" + w + "'");
  }
  v.annotator_id = j.at("annotator_id").get<std::string>();
  v.timestamp = j.at("timestamp").get<std::uint64_t>();
  v.prompt_id = j.at("prompt_id").get<std::string>();
  v.validate();
  return v;
}

std::vector<VoteRecord> read_votes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<VoteRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(vote_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_votes(const std::filesystem::path& path, std::span<const VoteRecord> votes) {
  std::string bytes;
  for (const VoteRecord& v : votes) bytes += to_line(vote_to_json(v));
  write_file_atomic(path, bytes);
}

std::set<std::string> systems_in(std::span<const VoteRecord> votes) {
  std::set<std::string> out;
  for (const auto& v : votes) {
    out.insert(v.system_a);
    out.insert(v.system_b);
  }
  return out;
}

}  // namespace ttspo
