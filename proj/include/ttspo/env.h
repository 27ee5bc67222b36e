#pragma once

// Synthetic sequence-generation environment. Every token carries a
// character and a quantized pitch, so transcription error, pitch
// dispersion and pitch-usage similarity are exact functions of the token
// sequence.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ttspo {

struct TokenDef {
  int id = 0;
  char ch = '\0';        // '\0' for EOS
  int bin = -1;          // pitch bin index, -1 for EOS
  double pitch_hz = 0;   // 0 for EOS
  bool is_eos = false;
};

// {alphabet} x {pitch bins} plus one trailing EOS token. Token id of
// (char i, bin b) is i * n_bins + b.
class Vocab {
 public:
  Vocab(std::string alphabet, std::vector<double> pitch_bins_hz);

  std::size_t size() const { return tokens_.size(); }
  int eos_id() const { return static_cast<int>(tokens_.size()) - 1; }
  const std::string& alphabet() const { return alphabet_; }
  const std::vector<double>& pitch_bins() const { return bins_; }
  std::size_t n_bins() const { return bins_.size(); }

  const TokenDef& token(int id) const;
  bool valid(int id) const { return id >= 0 && id < static_cast<int>(size()); }
  int token_id(char ch, int bin) const;
  // Index of `ch` in the alphabet, -1 when absent.
  int char_index(char ch) const;

 private:
  std::string alphabet_;
  std::vector<double> bins_;
  std::vector<TokenDef> tokens_;
};

// n geometrically spaced values from lo to hi inclusive.
std::vector<double> geometric_bins(double lo_hz, double hi_hz, int n);

struct Prompt {
  std::string id;
  std::string target_text;
  std::vector<double> reference_embedding;  // unit norm, one entry per bin

  void validate(const Vocab& vocab) const;
};

class PromptIndex {
 public:
  PromptIndex() = default;
  explicit PromptIndex(std::span<const Prompt> prompts);
  void add(const Prompt& prompt);
  const Prompt& at(const std::string& id) const;
  bool contains(const std::string& id) const { return by_id_.contains(id); }

 private:
  std::unordered_map<std::string, Prompt> by_id_;
};

struct Candidate {
  std::string prompt_id;
  std::vector<int> token_ids;
  bool terminated = false;
  std::vector<double> token_logprobs;
  std::uint64_t seed = 0;

  // Checks the structural invariants against a vocabulary.
  void validate(const Vocab& vocab) const;
  std::size_t voiced_count(const Vocab& vocab) const;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct ProsodyStats {
  double mean_logf0 = 0;
  double std_logf0 = 0;
  std::size_t n_voiced = 0;
};

std::string transcript(const Candidate& candidate, const Vocab& vocab);

// Natural log of the pitch of each voiced token.
std::vector<double> pitch_contour(const Candidate& candidate,
                                  const Vocab& vocab);

// Pooled mean and population standard deviation over all frames.
ProsodyStats prosody_stats(std::span<const std::vector<double>> contours);

// Occupancy count per pitch bin.
std::vector<double> pitch_histogram(const Candidate& candidate,
                                    const Vocab& vocab);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Cosine between the candidate's pitch-bin histogram and the prompt's
// reference embedding.
double speaker_similarity(const Candidate& candidate, const Prompt& prompt,
                          const Vocab& vocab);

}  // namespace ttspo
