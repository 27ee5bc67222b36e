#pragma once

// Bounded utilities for transcription error, likelihood and speaker
// similarity, and their weighted harmonic-mean composition.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace ttspo {

// The scored triple every reward consumes.
struct Metrics {
  double c = 0.0;            // character error rate, may exceed 1
  double ell = 0.0;          // mean NLL per generated token, nats
  std::optional<double> s;   // cosine speaker similarity in [-1, 1]

  void validate() const;
};

struct Temperatures {
  double tau_c = 1.0;
  double tau_ell = 2.0;

  void validate() const;
};

// Two weights select the two-term reward, three the similarity extension.
// Weights must already sum to one; they are checked, never rescaled.
struct RewardWeights {
  double lambda_c = 0.6;
  double lambda_ell = 0.4;
  std::optional<double> lambda_s;

  static RewardWeights clean() { return {0.6, 0.4, std::nullopt}; }
  static RewardWeights sim() { return {0.5, 0.3, 0.2}; }

  bool three_term() const { return lambda_s.has_value(); }
  void validate() const;
};

inline constexpr double kDefaultSimFloor = 1e-6;

struct RewardConfig {
  RewardWeights weights = RewardWeights::clean();
  Temperatures temps;
  double sim_floor = kDefaultSimFloor;

  void validate() const;
};

// A value in (0, 1]. Construction rejects anything outside.
class Utility {
 public:
  explicit Utility(double value);
  double value() const { return value_; }

 private:
  double value_;
};

// Unit-cost Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

// edit_distance(reference, hypothesis) / |reference|. Throws on an empty
// reference.
double cer(std::string_view reference, std::string_view hypothesis);

// 1 - tanh(tau_c * c).
Utility utility_cer(double c, double tau_c);

// exp(-ell / tau_ell).
Utility utility_nll(double ell, double tau_ell);

// clamp((s + 1) / 2, 0, 1), then raised to `floor` so that s = -1 keeps the
// harmonic mean finite.
Utility utility_sim(double s, double floor);

// (sum w) / (sum w_i / u_i). Weights must be positive and match utilities
// in length.
double weighted_harmonic_mean(std::span<const double> weights,
                              std::span<const Utility> utilities);

double reward(const Metrics& metrics, const RewardWeights& weights,
              const Temperatures& temps, double floor = kDefaultSimFloor);

inline double reward(const Metrics& metrics, const RewardConfig& cfg) {
  return reward(metrics, cfg.weights, cfg.temps, cfg.sim_floor);
}

}  // namespace ttspo
