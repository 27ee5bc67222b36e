#include "ttspo/reward.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ttspo/error.h"

namespace ttspo {
namespace {

constexpr double kWeightSumTolerance = 1e-9;

// Utilities are mathematically positive but can underflow for extreme
// metrics; keep them representable so the reward stays in (0, 1].
double positive(double u) {
  return std::max(u, std::numeric_limits<double>::min());
}

void require_finite(double x, const char* name) {
  if (!std::isfinite(x)) {
    throw InvalidArgument(std::string(name) + " must be finite");
  }
}

}  // namespace

void Metrics::validate() const {
  require_finite(c, "c");
  require_finite(ell, "ell");
  if (c < 0) throw InvalidArgument("CER must be non-negative");
  if (ell < 0) throw InvalidArgument("NLL must be non-negative");
  if (s && !(*s >= -1.0 && *s <= 1.0)) {
    throw InvalidArgument("similarity must lie in [-1, 1]");
  }
}

void Temperatures::validate() const {
  if (!(tau_c > 0) || !std::isfinite(tau_c)) {
    throw InvalidArgument("tau_c must be positive");
  }
  if (!(tau_ell > 0) || !std::isfinite(tau_ell)) {
    throw InvalidArgument("tau_ell must be positive");
  }
}

void RewardWeights::validate() const {
  double sum = lambda_c + lambda_ell;
  if (!(lambda_c > 0) || !(lambda_ell > 0)) {
    throw InvalidArgument("reward weights must be strictly positive");
  }
  if (lambda_s) {
    if (!(*lambda_s > 0)) {
      throw InvalidArgument("reward weights must be strictly positive");
    }
    sum += *lambda_s;
  }
  if (std::abs(sum - 1.0) > kWeightSumTolerance) {
    throw InvalidArgument("reward weights must sum to 1 (got " +
                          std::to_string(sum) + ")");
  }
}

void RewardConfig::validate() const {
  weights.validate();
  temps.validate();
  if (!(sim_floor > 0 && sim_floor < 1)) {
    throw InvalidArgument("similarity floor must lie in (0, 1)");
  }
}

Utility::Utility(double value) : value_(value) {
  if (!(value > 0.0 && value <= 1.0)) {
    throw InvalidArgument("utility must lie in (0, 1], got " +
                          std::to_string(value));
  }
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  // Common affixes never contribute to the distance.
  while (!a.empty() && !b.empty() && a.front() == b.front()) {
    a.remove_prefix(1);
    b.remove_prefix(1);
  }
  while (!a.empty() && !b.empty() && a.back() == b.back()) {
    a.remove_suffix(1);
    b.remove_suffix(1);
  }
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();

  // Single row over the shorter string.
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

double cer(std::string_view reference, std::string_view hypothesis) {
  if (reference.empty()) {
    throw InvalidArgument("CER is undefined for an empty reference");
  }
  return static_cast<double>(edit_distance(reference, hypothesis)) /
         static_cast<double>(reference.size());
}

Utility utility_cer(double c, double tau_c) {
  require_finite(c, "c");
  if (c < 0) throw InvalidArgument("CER must be non-negative");
  if (!(tau_c > 0)) throw InvalidArgument("tau_c must be positive");
  // 1 - tanh(x) == 2 / (1 + e^{2x}); no cancellation for large x.
  const double x = tau_c * c;
  return Utility(positive(2.0 / (1.0 + std::exp(2.0 * x))));
}

Utility utility_nll(double ell, double tau_ell) {
  require_finite(ell, "ell");
  if (ell < 0) throw InvalidArgument("NLL must be non-negative");
  if (!(tau_ell > 0)) throw InvalidArgument("tau_ell must be positive");
  return Utility(positive(std::exp(-ell / tau_ell)));
}

Utility utility_sim(double s, double floor) {
  if (!(s >= -1.0 && s <= 1.0)) {
    throw InvalidArgument("similarity must lie in [-1, 1]");
  }
  if (!(floor > 0 && floor < 1)) {
    throw InvalidArgument("similarity floor must lie in (0, 1)");
  }
  const double clamped = std::min(std::max((s + 1.0) / 2.0, 0.0), 1.0);
  return Utility(std::max(floor, clamped));
}

double weighted_harmonic_mean(std::span<const double> weights,
                              std::span<const Utility> utilities) {
  if (weights.size() != utilities.size() || weights.empty()) {
    throw InvalidArgument("weights and utilities must have equal, non-zero length");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0)) throw InvalidArgument("weights must be positive");
    num += weights[i];
    den += weights[i] / utilities[i].value();
  }
  // The quotient can round a hair above the largest utility; the bounds
  // are part of the contract.
  double lo = utilities[0].value();
  double hi = lo;
  for (const Utility& u : utilities) {
    lo = std::min(lo, u.value());
    hi = std::max(hi, u.value());
  }
  return std::clamp(num / den, lo, hi);
}

double reward(const Metrics& metrics, const RewardWeights& weights,
              const Temperatures& temps, double floor) {
  metrics.validate();
  weights.validate();
  temps.validate();
  if (weights.three_term() && !metrics.s) {
    throw InvalidArgument("three-term reward requires a similarity metric");
  }
  const Utility uc = utility_cer(metrics.c, temps.tau_c);
  const Utility ul = utility_nll(metrics.ell, temps.tau_ell);
  if (weights.three_term()) {
    const std::array<double, 3> w{weights.lambda_c, weights.lambda_ell,
                                  *weights.lambda_s};
    const std::array<Utility, 3> u{uc, ul, utility_sim(*metrics.s, floor)};
    return weighted_harmonic_mean(w, u);
  }
  const std::array<double, 2> w{weights.lambda_c, weights.lambda_ell};
  const std::array<Utility, 2> u{uc, ul};
  return weighted_harmonic_mean(w, u);
}

}  // namespace ttspo
