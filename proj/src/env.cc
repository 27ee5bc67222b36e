#include "ttspo/env.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ttspo/error.h"

namespace ttspo {

Vocab::Vocab(std::string alphabet, std::vector<double> pitch_bins_hz)
    : alphabet_(std::move(alphabet)), bins_(std::move(pitch_bins_hz)) {
  if (alphabet_.empty()) throw InvalidArgument("alphabet must be non-empty");
  if (bins_.empty()) throw InvalidArgument("need at least one pitch bin");
  std::set<char> seen;
  for (char ch : alphabet_) {
    if (ch == '\0' || !seen.insert(ch).second) {
      throw InvalidArgument("alphabet characters must be distinct and non-NUL");
    }
  }
  for (std::size_t b = 0; b < bins_.size(); ++b) {
    if (!(bins_[b] > 0) || !std::isfinite(bins_[b])) {
      throw InvalidArgument("pitch bins must be positive");
    }
    if (b > 0 && !(bins_[b] > bins_[b - 1])) {
      throw InvalidArgument("pitch bins must be strictly increasing");
    }
  }
  int id = 0;
  for (char ch : alphabet_) {
    for (std::size_t b = 0; b < bins_.size(); ++b) {
      tokens_.push_back({id++, ch, static_cast<int>(b), bins_[b], false});
    }
  }
  tokens_.push_back({id, '\0', -1, 0.0, true});
}

const TokenDef& Vocab::token(int id) const {
  if (!valid(id)) {
    throw InvalidArgument("unknown token id " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::char_index(char ch) const {
  const auto pos = alphabet_.find(ch);
  return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

int Vocab::token_id(char ch, int bin) const {
  const int ci = char_index(ch);
  if (ci < 0 || bin < 0 || bin >= static_cast<int>(n_bins())) {
    throw InvalidArgument("no token for the requested (char, bin)");
  }
  return ci * static_cast<int>(n_bins()) + bin;
}

std::vector<double> geometric_bins(double lo_hz, double hi_hz, int n) {
  if (n < 1 || !(lo_hz > 0) || !(hi_hz >= lo_hz)) {
    throw InvalidArgument("invalid pitch bin range");
  }
  std::vector<double> bins(static_cast<std::size_t>(n));
  if (n == 1) {
    bins[0] = lo_hz;
    return bins;
  }
  const double ratio = std::log(hi_hz / lo_hz) / (n - 1);
  for (int i = 0; i < n; ++i) bins[i] = lo_hz * std::exp(ratio * i);
  bins.back() = hi_hz;
  return bins;
}

void Prompt::validate(const Vocab& vocab) const {
  if (target_text.empty()) throw InvalidArgument("prompt text is empty");
  for (char ch : target_text) {
    if (vocab.char_index(ch) < 0) {
      throw InvalidArgument("prompt text uses a character outside the alphabet");
    }
  }
  if (reference_embedding.size() != vocab.n_bins()) {
    throw InvalidArgument("reference embedding dimension must equal bin count");
  }
  double norm2 = 0;
  for (double v : reference_embedding) norm2 += v * v;
  if (std::abs(std::sqrt(norm2) - 1.0) > 1e-9) {
    throw InvalidArgument("reference embedding must have unit norm");
  }
}

PromptIndex::PromptIndex(std::span<const Prompt> prompts) {
  for (const Prompt& p : prompts) add(p);
}

void PromptIndex::add(const Prompt& prompt) {
  if (!by_id_.emplace(prompt.id, prompt).second) {
    throw InvalidArgument("duplicate prompt id " + prompt.id);
  }
}

const Prompt& PromptIndex::at(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw InvalidArgument("unknown prompt id " + id);
  return it->second;
}

void Candidate::validate(const Vocab& vocab) const {
  if (token_logprobs.size() != token_ids.size()) {
    throw InvalidArgument("candidate needs one logprob per token");
  }
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const TokenDef& tok = vocab.token(token_ids[i]);
    if (tok.is_eos && i + 1 != token_ids.size()) {
      throw InvalidArgument("EOS must be the final token");
    }
    if (!(token_logprobs[i] <= 0.0)) {
      throw InvalidArgument("token logprobs must be <= 0");
    }
  }
  const bool ends_with_eos =
      !token_ids.empty() && token_ids.back() == vocab.eos_id();
  if (terminated != ends_with_eos) {
    throw InvalidArgument("terminated flag must match a trailing EOS");
  }
}

std::size_t Candidate::voiced_count(const Vocab& vocab) const {
  std::size_t n = 0;
  for (int id : token_ids) n += vocab.token(id).is_eos ? 0 : 1;
  return n;
}

std::string transcript(const Candidate& candidate, const Vocab& vocab) {
  std::string out;
  out.reserve(candidate.token_ids.size());
  for (int id : candidate.token_ids) {
    const TokenDef& tok = vocab.token(id);
    if (!tok.is_eos) out.push_back(tok.ch);
  }
  return out;
}

std::vector<double> pitch_contour(const Candidate& candidate,
                                  const Vocab& vocab) {
  std::vector<double> out;
  out.reserve(candidate.token_ids.size());
  for (int id : candidate.token_ids) {
    const TokenDef& tok = vocab.token(id);
    if (!tok.is_eos) out.push_back(std::log(tok.pitch_hz));
  }
  return out;
}

ProsodyStats prosody_stats(std::span<const std::vector<double>> contours) {
  std::size_t n = 0;
  double sum = 0;
  for (const auto& c : contours) {
    n += c.size();
    sum += std::accumulate(c.begin(), c.end(), 0.0);
  }
  if (n == 0) throw InvalidArgument("prosody stats need at least one voiced frame");
  const double mean = sum / static_cast<double>(n);
  // Two-pass variance; a constant contour gives exactly zero.
  double ss = 0;
  for (const auto& c : contours) {
    for (double x : c) ss += (x - mean) * (x - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(n)), n};
}

std::vector<double> pitch_histogram(const Candidate& candidate,
                                    const Vocab& vocab) {
  std::vector<double> hist(vocab.n_bins(), 0.0);
  for (int id : candidate.token_ids) {
    const TokenDef& tok = vocab.token(id);
    if (!tok.is_eos) hist[static_cast<std::size_t>(tok.bin)] += 1.0;
  }
  return hist;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine of unequal lengths");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw InvalidArgument("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double speaker_similarity(const Candidate& candidate, const Prompt& prompt,
                          const Vocab& vocab) {
  const auto hist = pitch_histogram(candidate, vocab);
  if (std::all_of(hist.begin(), hist.end(), [](double v) { return v == 0; })) {
    throw InvalidArgument("speaker similarity needs at least one voiced token");
  }
  return cosine_similarity(hist, prompt.reference_embedding);
}

}  // namespace ttspo
