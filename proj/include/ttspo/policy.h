#pragma once

// Linear-softmax autoregressive policy with exact log-probabilities and
// analytic gradients. Both trainers update PolicyParams.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ttspo/env.h"
#include "ttspo/matrix.h"

namespace ttspo {

// Describes the feature map a weight matrix was trained against.
struct ContextSpec {
  std::string alphabet;
  int n_bins = 0;
  int max_len = 0;
  int near_max_window = 3;

  std::size_t vocab_size() const { return alphabet.size() * n_bins + 1; }
  friend bool operator==(const ContextSpec&, const ContextSpec&) = default;
};

enum class PositionBucket { kBegin = 0, kMiddle = 1, kNearMax = 2 };

// Three one-hot blocks, exactly one active feature in each:
//   text     - target character aligned with the current position, or a
//              trailing "text exhausted" slot
//   previous - previous token id, with the EOS slot standing in for BOS
//   position - begin / middle / near-max bucket
class FeatureMap {
 public:
  static constexpr std::size_t kActive = 3;
  using Active = std::array<std::size_t, kActive>;

  explicit FeatureMap(const ContextSpec& spec);

  std::size_t dimension() const { return dimension_; }
  std::size_t text_offset() const { return 0; }
  std::size_t prev_offset() const { return alphabet_.size() + 1; }
  std::size_t position_offset() const { return prev_offset() + vocab_size_; }

  PositionBucket bucket(std::size_t position) const;

  // Active feature indices (each with value 1) for the state after `prefix`.
  Active active(const Prompt& prompt, std::span<const int> prefix) const;

 private:
  std::string alphabet_;
  std::size_t vocab_size_;
  int max_len_;
  int near_max_window_;
  std::size_t dimension_;
};

class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(ContextSpec spec, std::string version);  // zero weights
  PolicyParams(ContextSpec spec, Matrix weights, std::string version);

  const ContextSpec& spec() const { return spec_; }
  const Matrix& weights() const { return weights_; }
  Matrix& mutable_weights() { return weights_; }
  const std::string& version() const { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }
  const FeatureMap& features() const { return features_; }
  std::size_t vocab_size() const { return spec_.vocab_size(); }
  int eos_id() const { return static_cast<int>(spec_.vocab_size()) - 1; }

  void validate() const;

 private:
  ContextSpec spec_;
  Matrix weights_;
  std::string version_;
  FeatureMap features_{ContextSpec{"a", 1, 1, 1}};
};

std::vector<double> step_logits(const PolicyParams& params, const Prompt& prompt,
                                std::span<const int> prefix, std::size_t position);

// Numerically stable log-softmax / softmax with optional temperature.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

double sequence_logprob(const PolicyParams& params, const Prompt& prompt,
                        const Candidate& candidate);

// out += scale * d/dW log pi(candidate | prompt)
void accumulate_grad_sequence_logprob(const PolicyParams& params,
                                      const Prompt& prompt,
                                      const Candidate& candidate, double scale,
                                      Matrix& out);

Matrix grad_sequence_logprob(const PolicyParams& params, const Prompt& prompt,
                             const Candidate& candidate);

// Autoregressive sampling from the tempered softmax. Recorded logprobs are
// always under temperature 1.
Candidate sample(const PolicyParams& params, const Prompt& prompt,
                 double temperature, int max_len, std::uint64_t seed);

// Argmax decoding (the temperature -> 0 limit).
Candidate decode_greedy(const PolicyParams& params, const Prompt& prompt,
                        int max_len);

// Checkpoint: magic, context spec, shape header, version tag and row-major
// little-endian float64 weights.
std::vector<std::uint8_t> checkpoint_bytes(const PolicyParams& params);
PolicyParams parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 of the checkpoint bytes, as 16 hex digits.
std::string checkpoint_hash(const PolicyParams& params);
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);

}  // namespace ttspo
