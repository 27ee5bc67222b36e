#pragma once

// ELO ratings from blind pairwise votes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ttspo {

enum class Winner { kA, kB };

struct VoteRecord {
  std::string vote_id;
  std::string system_a;
  std::string system_b;
  Winner winner = Winner::kA;
  std::string annotator_id;
  std::uint64_t timestamp = 0;
  std::string prompt_id;

  void validate() const;
  bool operator==(const VoteRecord&) const = default;
};

inline constexpr double kDefaultKFactor = 32.0;
inline constexpr double kDefaultInitialRating = 1000.0;

struct RatingTable {
  std::map<std::string, double> ratings;
  std::map<std::string, std::size_t> n_votes;
  double k_factor = kDefaultKFactor;
  double initial_rating = kDefaultInitialRating;

  static RatingTable with_systems(const std::set<std::string>& systems,
                                  double k = kDefaultKFactor,
                                  double initial = kDefaultInitialRating);
  double total() const;
  bool operator==(const RatingTable&) const = default;
};

// Probability that a player rated r_a beats one rated r_b.
double expected_score(double r_a, double r_b);

// Zero-sum update; throws for unregistered systems.
void apply_vote(RatingTable& table, const VoteRecord& vote);

// Folds the votes in the given order, which must be non-decreasing in
// timestamp.
RatingTable aggregate(std::span<const VoteRecord> votes,
                      const std::set<std::string>& systems,
                      double k = kDefaultKFactor,
                      double initial = kDefaultInitialRating);

struct LeaderboardRow {
  std::string system;
  double rating = 0;
  std::size_t n_votes = 0;
};

// Descending by rating; equal ratings by name.
std::vector<LeaderboardRow> leaderboard(const RatingTable& table);

std::string leaderboard_csv(std::span<const LeaderboardRow> rows);

nlohmann::json vote_to_json(const VoteRecord& vote);
VoteRecord vote_from_json(const nlohmann::json& j);

std::vector<VoteRecord> read_votes(const std::filesystem::path& path);
void write_votes(const std::filesystem::path& path, std::span<const VoteRecord> votes);

// Systems named by the votes, for logs whose roster is implicit.
std::set<std::string> systems_in(std::span<const VoteRecord> votes);

}  // namespace ttspo
