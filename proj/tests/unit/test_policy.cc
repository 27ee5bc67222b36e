#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.h"
#include "ttspo/error.h"
#include "ttspo/policy.h"

using namespace ttspo;

namespace {

const ContextSpec kSpec{"abc", 3, 6, 2};

Prompt prompt(std::string text) { return Prompt{"p", std::move(text), {1.0, 0.0, 0.0}}; }

Candidate seq(std::vector<int> ids, bool terminated) {
  Candidate c;
  c.prompt_id = "p";
  c.token_ids = std::move(ids);
  c.terminated = terminated;
  c.token_logprobs.assign(c.token_ids.size(), 0.0);
  return c;
}

// A random well-formed candidate of length 1..max_len.
Candidate random_candidate(std::mt19937_64& g, const PolicyParams& p, int max_len) {
  std::uniform_int_distribution<int> len(1, max_len), tok(0, p.eos_id() - 1);
  const int n = len(g);
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) ids.push_back(tok(g));
  const bool terminated = n < max_len || g() % 2;
  if (terminated) ids.back() = p.eos_id();
  return seq(ids, terminated);
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("feature map") {
    const FeatureMap f(kSpec);
    CHECK(f.dimension() == (3 + 1) + 10 + 3);
    const Prompt p = prompt("ab");
    const auto a0 = f.active(p, {});
    CHECK(a0[0] == 0);                          // 'a' aligned at position 0
    CHECK(a0[1] == f.prev_offset() + 9);        // BOS shares the EOS slot
    CHECK(a0[2] == f.position_offset() + 0);    // begin bucket
    const std::vector<int> pre{1, 4};
    const auto a2 = f.active(p, pre);
    CHECK(a2[0] == 3);                          // text exhausted
    CHECK(a2[1] == f.prev_offset() + 4);
    CHECK(f.bucket(0) == PositionBucket::kBegin);
    CHECK(f.bucket(2) == PositionBucket::kMiddle);
    CHECK(f.bucket(4) == PositionBucket::kNearMax);
    CHECK(f.bucket(5) == PositionBucket::kNearMax);
  }

  TEST_CASE("step logits") {
    PolicyParams zero(kSpec, "z");
    const Prompt p = prompt("abc");
    for (double x : step_logits(zero, p, {}, 0)) CHECK(x == 0.0);
    for (double x : softmax(step_logits(zero, p, {}, 0))) CHECK(x == doctest::Approx(0.1));

    // Only one active feature carries weight: logits are its row.
    PolicyParams one(kSpec, "one");
    const auto active = one.features().active(p, {});
    for (std::size_t c = 0; c < one.vocab_size(); ++c) one.mutable_weights()(active[1], c) = 0.5 * c - 1;
    const auto l = step_logits(one, p, {}, 0);
    for (std::size_t c = 0; c < one.vocab_size(); ++c) CHECK(l[c] == 0.5 * c - 1);

    const PolicyParams w0 = oracle::random_policy(kSpec, 17);
    for (const std::vector<int>& prefix : {std::vector<int>{}, {0, 4}, {2, 2, 7}}) {
      const auto got = step_logits(w0, p, prefix, prefix.size());
      const auto want = oracle::dense_logits(w0, p, prefix);
      for (std::size_t c = 0; c < got.size(); ++c) {
        CHECK(std::abs(got[c] - static_cast<double>(want[c])) < 1e-12);
      }
    }
    const std::vector<int> with_eos{0, 9};
    CHECK_THROWS_AS(step_logits(w0, p, with_eos, 2), InvalidArgument);
    CHECK_THROWS_AS(step_logits(w0, p, {}, 1), InvalidArgument);
  }

  TEST_CASE("softmax normalization over random states") {
    std::mt19937_64 g(5);
    std::normal_distribution<double> n(0, 10);
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> logits(10);
      for (double& x : logits) x = n(g);
      double sum = 0;
      for (double x : softmax(logits)) sum += x;
      REQUIRE(std::abs(sum - 1.0) <= 1e-12);
      const auto lsm = log_softmax(logits);
      double lsum = 0;
      for (double x : lsm) lsum += std::exp(x);
      REQUIRE(std::abs(lsum - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("sequence logprob") {
    const PolicyParams zero(kSpec, "z");
    const Prompt p = prompt("abc");
    const Candidate c4 = seq({0, 3, 5, 9}, true);
    CHECK(sequence_logprob(zero, p, c4) == doctest::Approx(-4 * std::log(10.0)).epsilon(1e-14));
    CHECK(sequence_logprob(zero, p, seq({}, false)) == 0.0);

    const PolicyParams w0 = oracle::random_policy(kSpec, 23);
    const Candidate y0 = seq({1, 4, 7, 2, 9}, true);
    CHECK(std::abs(sequence_logprob(w0, p, y0) -
                   static_cast<double>(oracle::sequence_logprob(w0, p, y0.token_ids))) < 1e-10);

    // Additivity: the whole equals the sum of per-step conditionals.
    double sum = 0;
    std::vector<int> prefix;
    for (int t : y0.token_ids) {
      sum += log_softmax(step_logits(w0, p, prefix, prefix.size()))[t];
      prefix.push_back(t);
    }
    CHECK(std::abs(sequence_logprob(w0, p, y0) - sum) < 1e-12);
  }

  TEST_CASE("sampling") {
    const Prompt p = prompt("abc");
    PolicyParams eos(kSpec, "eos");
    for (std::size_t r = eos.features().position_offset(); r < eos.features().dimension(); ++r) {
      eos.mutable_weights()(r, eos.eos_id()) = 20;
    }
    // P(EOS) = e^20 / (e^20 + 9) > 1 - 1e-6.
    CHECK(std::exp(20.0) / (std::exp(20.0) + 9) > 1 - 1e-6);
    const Candidate c = sample(eos, p, 1.0, 6, 42);
    CHECK(c.token_ids == std::vector<int>{eos.eos_id()});
    CHECK(c.terminated);

    PolicyParams never = eos;
    for (std::size_t r = never.features().position_offset(); r < never.features().dimension(); ++r) {
      never.mutable_weights()(r, never.eos_id()) = -20;
    }
    const Candidate run = sample(never, p, 1.0, 3, 42);
    CHECK(run.token_ids.size() == 3);
    CHECK_FALSE(run.terminated);

    const PolicyParams w = oracle::random_policy(kSpec, 3);
    const Candidate a = sample(w, p, 0.7, 6, 99), b = sample(w, p, 0.7, 6, 99);
    CHECK(a == b);
    CHECK(a.seed == 99);
    // Recorded logprobs are under temperature 1.
    double total = 0;
    for (double x : a.token_logprobs) total += x;
    CHECK(std::abs(total - sequence_logprob(w, p, a)) < 1e-12);
    CHECK_THROWS_AS(sample(w, p, 0.0, 6, 1), InvalidArgument);
    CHECK_THROWS_AS(sample(w, p, 1.0, 0, 1), InvalidArgument);
  }

  TEST_CASE("argmax is invariant to temperature") {
    std::mt19937_64 g(8);
    std::normal_distribution<double> n(0, 3);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> logits(10);
      for (double& x : logits) x = n(g);
      const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
      for (double t : {0.05, 0.5, 1.0, 3.0}) {
        const auto probs = softmax(logits, t);
        CHECK(std::max_element(probs.begin(), probs.end()) - probs.begin() == best);
      }
    }
  }

  TEST_CASE("gradient of the sequence logprob") {
    const Prompt p = prompt("abc");
    const PolicyParams zero(kSpec, "z");
    const Matrix empty = grad_sequence_logprob(zero, p, seq({}, false));
    CHECK(empty.max_abs() == 0.0);

    // One step under the uniform policy: feat x (onehot - 1/V).
    const Matrix g1 = grad_sequence_logprob(zero, p, seq({4}, false));
    const auto active = zero.features().active(p, {});
    for (std::size_t r = 0; r < g1.rows(); ++r) {
      const bool on = std::find(active.begin(), active.end(), r) != active.end();
      for (std::size_t c = 0; c < g1.cols(); ++c) {
        const double want = on ? (c == 4 ? 1.0 : 0.0) - 0.1 : 0.0;
        CHECK(g1(r, c) == doctest::Approx(want).epsilon(1e-15));
      }
    }

    std::mt19937_64 g(31);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
      const PolicyParams w = oracle::random_policy(kSpec, 1000 + i);
      const Candidate y = random_candidate(g, w, kSpec.max_len);
      const Matrix analytic = grad_sequence_logprob(w, p, y);
      const Matrix numeric = oracle::finite_difference(
          w, [&](const PolicyParams& q) { return sequence_logprob(q, p, y); });
      worst = std::max(worst, oracle::relative_error(analytic, numeric));
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("score-function identity on a tiny vocabulary") {
    const ContextSpec tiny{"a", 3, 2, 1};
    const PolicyParams w = oracle::random_policy(tiny, 77, 0.7);
    const Prompt p{"p", "a", {1.0, 0.0, 0.0}};
    const std::size_t n = 200000;
    const std::size_t k = w.weights().flat().size();
    std::vector<double> sum(k, 0.0), sq(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix gi = grad_sequence_logprob(w, p, sample(w, p, 1.0, tiny.max_len, i));
      for (std::size_t j = 0; j < k; ++j) {
        sum[j] += gi.flat()[j];
        sq[j] += gi.flat()[j] * gi.flat()[j];
      }
    }
    int outside = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double mean = sum[j] / n;
      const double var = sq[j] / n - mean * mean;
      const double se = std::sqrt(std::max(var, 0.0) / n);
      if (std::abs(mean) > 4 * se + 1e-12) ++outside;
    }
    CHECK(outside == 0);
  }

  TEST_CASE("checkpoints") {
    const PolicyParams w = oracle::random_policy(kSpec, 9);
    const auto bytes = checkpoint_bytes(w);
    const PolicyParams back = parse_checkpoint(bytes);
    CHECK(checkpoint_bytes(back) == bytes);
    CHECK(back.weights() == w.weights());
    CHECK(back.spec() == w.spec());
    CHECK(back.version() == "random");
    CHECK(checkpoint_hash(back) == checkpoint_hash(w));
    CHECK(checkpoint_hash(w).size() == 16);

    const auto path = std::filesystem::temp_directory_path() / "ttspo_ckpt.bin";
    save_checkpoint(w, path);
    CHECK(checkpoint_bytes(load_checkpoint(path)) == bytes);

    auto corrupt = bytes;
    corrupt[0] ^= 0xff;
    CHECK_THROWS_AS(parse_checkpoint(corrupt), InvalidArgument);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(parse_checkpoint(truncated), InvalidArgument);

    PolicyParams nan = w;
    nan.mutable_weights()(0, 0) = std::nan("");
    CHECK_THROWS_AS(nan.validate(), InvalidArgument);
  }

  TEST_CASE("known FNV-1a vectors") {
    const std::string empty, a = "a", foobar = "foobar";
    auto hex = [](const std::string& s) {
      return fnv1a_hex({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    };
    CHECK(hex(empty) == "cbf29ce484222325");
    CHECK(hex(a) == "af63dc4c8601ec8c");
    CHECK(hex(foobar) == "85944171f73967e8");
  }
}
