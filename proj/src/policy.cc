#include "ttspo/policy.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "ttspo/error.h"
#include "ttspo/rng.h"

namespace ttspo {
namespace {

constexpr char kMagic[8] = {'T', 'T', 'S', 'P', 'O', 'C', 'K', '1'};

void check_spec(const ContextSpec& spec) {
  if (spec.alphabet.empty()) throw InvalidArgument("context spec: empty alphabet");
  if (spec.n_bins < 1) throw InvalidArgument("context spec: need >= 1 pitch bin");
  if (spec.max_len < 1) throw InvalidArgument("context spec: max_len must be >= 1");
  if (spec.near_max_window < 0) {
    throw InvalidArgument("context spec: negative near-max window");
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) != 0) {
      throw InvalidArgument("not a policy checkpoint (bad magic)");
    }
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw InvalidArgument("truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_prefix(const PolicyParams& params, std::span<const int> prefix) {
  for (int id : prefix) {
    if (id < 0 || id >= static_cast<int>(params.vocab_size())) {
      throw InvalidArgument("unknown token id " + std::to_string(id));
    }
    if (id == params.eos_id()) throw InvalidArgument("EOS inside a prefix");
  }
}

void check_candidate(const PolicyParams& params, const Candidate& candidate) {
  const auto& ids = candidate.token_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= static_cast<int>(params.vocab_size())) {
      throw InvalidArgument("unknown token id " + std::to_string(ids[i]));
    }
    if (ids[i] == params.eos_id() && i + 1 != ids.size()) {
      throw InvalidArgument("malformed candidate: token after EOS");
    }
  }
  const bool ends_with_eos = !ids.empty() && ids.back() == params.eos_id();
  if (candidate.terminated != ends_with_eos) {
    throw InvalidArgument("malformed candidate: terminated flag disagrees with EOS");
  }
}

// Logits of the state after ids[0..t).
void fill_logits(const PolicyParams& params, const Prompt& prompt,
                 std::span<const int> prefix, std::vector<double>& logits,
                 FeatureMap::Active& active) {
  active = params.features().active(prompt, prefix);
  std::fill(logits.begin(), logits.end(), 0.0);
  const Matrix& w = params.weights();
  for (std::size_t f : active) {
    const auto row = w.row(f);
    for (std::size_t v = 0; v < logits.size(); ++v) logits[v] += row[v];
  }
}

double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

FeatureMap::FeatureMap(const ContextSpec& spec)
    : alphabet_(spec.alphabet),
      vocab_size_(spec.vocab_size()),
      max_len_(spec.max_len),
      near_max_window_(spec.near_max_window),
      dimension_(spec.alphabet.size() + 1 + spec.vocab_size() + 3) {}

PositionBucket FeatureMap::bucket(std::size_t position) const {
  if (position == 0) return PositionBucket::kBegin;
  if (static_cast<long>(position) >= static_cast<long>(max_len_) - near_max_window_) {
    return PositionBucket::kNearMax;
  }
  return PositionBucket::kMiddle;
}

FeatureMap::Active FeatureMap::active(const Prompt& prompt,
                                      std::span<const int> prefix) const {
  const std::size_t t = prefix.size();
  std::size_t text = alphabet_.size();  // exhausted
  if (t < prompt.target_text.size()) {
    const auto pos = alphabet_.find(prompt.target_text[t]);
    if (pos == std::string::npos) {
      throw InvalidArgument("prompt text uses a character outside the alphabet");
    }
    text = pos;
  }
  // The EOS slot doubles as BOS; EOS never occurs inside a prefix.
  const std::size_t prev =
      prefix.empty() ? vocab_size_ - 1 : static_cast<std::size_t>(prefix.back());
  return {text_offset() + text, prev_offset() + prev,
          position_offset() + static_cast<std::size_t>(bucket(t))};
}

PolicyParams::PolicyParams(ContextSpec spec, std::string version)
    : spec_(std::move(spec)), version_(std::move(version)), features_(spec_) {
  check_spec(spec_);
  weights_ = Matrix(features_.dimension(), spec_.vocab_size());
}

PolicyParams::PolicyParams(ContextSpec spec, Matrix weights, std::string version)
    : spec_(std::move(spec)),
      weights_(std::move(weights)),
      version_(std::move(version)),
      features_(spec_) {
  check_spec(spec_);
  validate();
}

void PolicyParams::validate() const {
  if (weights_.rows() != features_.dimension() ||
      weights_.cols() != spec_.vocab_size()) {
    throw InvalidArgument("weight shape does not match the context spec");
  }
  if (!weights_.all_finite()) throw InvalidArgument("non-finite policy weight");
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0)) throw InvalidArgument("temperature must be positive");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - m) / temperature);
    s += out[i];
  }
  for (double& p : out) p /= s;
  return out;
}

std::vector<double> step_logits(const PolicyParams& params, const Prompt& prompt,
                                std::span<const int> prefix, std::size_t position) {
  if (position != prefix.size()) {
    throw InvalidArgument("position must equal the prefix length");
  }
  check_prefix(params, prefix);
  std::vector<double> logits(params.vocab_size());
  FeatureMap::Active active;
  fill_logits(params, prompt, prefix, logits, active);
  return logits;
}

double sequence_logprob(const PolicyParams& params, const Prompt& prompt,
                        const Candidate& candidate) {
  check_candidate(params, candidate);
  const std::span<const int> ids = candidate.token_ids;
  std::vector<double> logits(params.vocab_size());
  FeatureMap::Active active;
  double total = 0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    fill_logits(params, prompt, ids.first(t), logits, active);
    total += logits[static_cast<std::size_t>(ids[t])] - log_sum_exp(logits);
  }
  return total;
}

void accumulate_grad_sequence_logprob(const PolicyParams& params,
                                      const Prompt& prompt,
                                      const Candidate& candidate, double scale,
                                      Matrix& out) {
  check_candidate(params, candidate);
  if (!out.same_shape(params.weights())) {
    throw InvalidArgument("gradient buffer shape mismatch");
  }
  const std::span<const int> ids = candidate.token_ids;
  std::vector<double> logits(params.vocab_size());
  FeatureMap::Active active;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    fill_logits(params, prompt, ids.first(t), logits, active);
    const auto probs = softmax(logits);
    const auto y = static_cast<std::size_t>(ids[t]);
    for (std::size_t f : active) {
      auto row = out.row(f);
      for (std::size_t v = 0; v < probs.size(); ++v) row[v] -= scale * probs[v];
      row[y] += scale;
    }
  }
}

Matrix grad_sequence_logprob(const PolicyParams& params, const Prompt& prompt,
                             const Candidate& candidate) {
  Matrix g(params.weights().rows(), params.weights().cols());
  accumulate_grad_sequence_logprob(params, prompt, candidate, 1.0, g);
  return g;
}

Candidate sample(const PolicyParams& params, const Prompt& prompt,
                 double temperature, int max_len, std::uint64_t seed) {
  if (!(temperature > 0)) throw InvalidArgument("temperature must be positive");
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  Rng rng(seed);
  Candidate out;
  out.prompt_id = prompt.id;
  out.seed = seed;
  std::vector<double> logits(params.vocab_size());
  FeatureMap::Active active;
  for (int t = 0; t < max_len; ++t) {
    fill_logits(params, prompt, out.token_ids, logits, active);
    const auto probs = softmax(logits, temperature);
    const double u = rng.uniform();
    std::size_t y = probs.size() - 1;
    double acc = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      acc += probs[v];
      if (u < acc) {
        y = v;
        break;
      }
    }
    // Guard against landing on a zero-probability tail after rounding.
    while (probs[y] == 0.0 && y > 0) --y;
    out.token_ids.push_back(static_cast<int>(y));
    out.token_logprobs.push_back(std::min(0.0, logits[y] - log_sum_exp(logits)));
    if (static_cast<int>(y) == params.eos_id()) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

Candidate decode_greedy(const PolicyParams& params, const Prompt& prompt,
                        int max_len) {
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  Candidate out;
  out.prompt_id = prompt.id;
  std::vector<double> logits(params.vocab_size());
  FeatureMap::Active active;
  for (int t = 0; t < max_len; ++t) {
    fill_logits(params, prompt, out.token_ids, logits, active);
    const std::size_t y = argmax(logits);
    out.token_ids.push_back(static_cast<int>(y));
    out.token_logprobs.push_back(std::min(0.0, logits[y] - log_sum_exp(logits)));
    if (static_cast<int>(y) == params.eos_id()) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

std::vector<std::uint8_t> checkpoint_bytes(const PolicyParams& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  const ContextSpec& spec = params.spec();
  put_string(out, spec.alphabet);
  put_u32(out, static_cast<std::uint32_t>(spec.n_bins));
  put_u32(out, static_cast<std::uint32_t>(spec.max_len));
  put_u32(out, static_cast<std::uint32_t>(spec.near_max_window));
  put_u32(out, static_cast<std::uint32_t>(params.weights().rows()));
  put_u32(out, static_cast<std::uint32_t>(params.weights().cols()));
  put_string(out, params.version());
  out.reserve(out.size() + params.weights().size() * 8);
  for (double v : params.weights().flat()) put_f64(out, v);
  return out;
}

PolicyParams parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.expect_magic();
  ContextSpec spec;
  spec.alphabet = in.str();
  spec.n_bins = static_cast<int>(in.u32());
  spec.max_len = static_cast<int>(in.u32());
  spec.near_max_window = static_cast<int>(in.u32());
  const std::uint32_t rows = in.u32();
  const std::uint32_t cols = in.u32();
  std::string version = in.str();
  Matrix w(rows, cols);
  for (double& v : w.flat()) v = in.f64();
  if (!in.done()) throw InvalidArgument("trailing bytes after checkpoint");
  return PolicyParams(std::move(spec), std::move(w), std::move(version));
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  const auto bytes = checkpoint_bytes(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write on checkpoint " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

std::string checkpoint_hash(const PolicyParams& params) {
  return fnv1a_hex(checkpoint_bytes(params));
}

}  // namespace ttspo
