#include <cmath>

#include "doctest.h"
#include "ttspo/annotator.h"
#include "ttspo/environment.h"
#include "ttspo/error.h"
#include "ttspo/rng.h"

using namespace ttspo;

namespace {

Environment env() {
  EnvConfig c;
  c.train_prompts = 8;
  c.heldout_prompts = 2;
  return make_environment(c);
}

// Spells `text` with the given bins cycled, then EOS.
Candidate spoken(const Environment& e, const Prompt& p, const std::string& text,
                 std::vector<int> bins) {
  Candidate c;
  c.prompt_id = p.id;
  for (std::size_t i = 0; i < text.size(); ++i) {
    c.token_ids.push_back(e.vocab.token_id(text[i], bins[i % bins.size()]));
  }
  c.token_ids.push_back(e.vocab.eos_id());
  c.terminated = true;
  c.token_logprobs.assign(c.token_ids.size(), 0.0);
  return c;
}

Preference flip(Preference p) {
  if (p == Preference::kPreferA) return Preference::kPreferB;
  if (p == Preference::kPreferB) return Preference::kPreferA;
  return p;
}

}  // namespace

TEST_SUITE("annotator") {
  TEST_CASE("rule examples") {
    CHECK(decide({0.0, 0.4}, {0.0, 0.1}, 0.3) == Preference::kPreferA);
    CHECK(decide({0.5, 0.9}, {0.0, 0.0}, 0.3) == Preference::kPreferB);
    CHECK(decide({0.6, 0.0}, {0.4, 0.9}, 0.3) == Preference::kPreferB);  // both fail
    CHECK(decide({0.4, 0.1}, {0.4, 0.9}, 0.3) == Preference::kTie);
    CHECK(decide({0.1, 0.2}, {0.2, 0.2}, 0.3) == Preference::kTie);
  }

  TEST_CASE("gate dominance at the boundary") {
    // CER exactly at the gate passes; just above fails, whatever the
    // dispersion.
    CHECK(decide({0.3, 0.0}, {0.3000001, 5.0}, 0.3) == Preference::kPreferA);
    CHECK(decide({0.3000001, 5.0}, {0.3, 0.0}, 0.3) == Preference::kPreferB);
    CHECK(decide({0.3, 0.1}, {0.0, 0.2}, 0.3) == Preference::kPreferB);
    for (double d : {0.0, 0.1, 1.0, 100.0}) {
      CHECK(decide({0.0, 0.0}, {0.31, d}, 0.3) == Preference::kPreferA);
    }
  }

  TEST_CASE("judging real candidates") {
    const Environment e = env();
    const Prompt& p = e.train[0];
    const OracleConfig cfg;
    Rng rng(1);
    const Candidate wide = spoken(e, p, p.target_text, {0, 9});
    const Candidate flat = spoken(e, p, p.target_text, {4});
    CHECK(judged_view(flat, p, e.vocab, cfg).dispersion < 1e-12);
    CHECK(judged_view(wide, p, e.vocab, cfg).dispersion > 0.4);
    CHECK(judge(wide, flat, p, e.vocab, cfg, rng) == Preference::kPreferA);
    CHECK(judge(wide, wide, p, e.vocab, cfg, rng) == Preference::kTie);

    // An unintelligible wide contour loses to an intelligible flat one.
    std::string garbled = p.target_text;
    for (char& ch : garbled) ch = ch == 'a' ? 'b' : 'a';
    const Candidate bad = spoken(e, p, garbled, {0, 9});
    CHECK(judged_view(bad, p, e.vocab, cfg).cer > cfg.cer_gate);
    CHECK(judge(bad, flat, p, e.vocab, cfg, rng) == Preference::kPreferB);

    Candidate empty = flat;
    empty.token_ids.clear();
    CHECK_THROWS_AS(judge(empty, flat, p, e.vocab, cfg, rng), InvalidArgument);
    Candidate other = flat;
    other.prompt_id = "nope";
    CHECK_THROWS_AS(judge(other, flat, p, e.vocab, cfg, rng), InvalidArgument);
  }

  TEST_CASE("antisymmetry on random pairs") {
    const Environment e = env();
    const PolicyParams base = make_base_policy(e);
    const OracleConfig cfg;
    Rng rng(2);
    int decisive = 0;
    for (int i = 0; i < 1000; ++i) {
      const Prompt& p = e.train[i % e.train.size()];
      const Candidate a = sample(base, p, 1.5, e.max_len(), 2 * i);
      const Candidate b = sample(base, p, 1.5, e.max_len(), 2 * i + 1);
      const Preference ab = judge(a, b, p, e.vocab, cfg, rng);
      REQUIRE(judge(b, a, p, e.vocab, cfg, rng) == flip(ab));
      REQUIRE(judge(a, b, p, e.vocab, cfg, rng) == ab);
      decisive += ab != Preference::kTie;
    }
    CHECK(decisive > 500);
  }

  TEST_CASE("noise flips decisive outcomes at the configured rate") {
    const Environment e = env();
    const Prompt& p = e.train[0];
    OracleConfig cfg;
    cfg.noise_prob = 0.2;
    Rng rng(3);
    const Candidate wide = spoken(e, p, p.target_text, {0, 9});
    const Candidate flat = spoken(e, p, p.target_text, {4});
    const int n = 20000;
    int flipped = 0;
    for (int i = 0; i < n; ++i) {
      flipped += judge(wide, flat, p, e.vocab, cfg, rng) == Preference::kPreferB;
      REQUIRE(judge(flat, flat, p, e.vocab, cfg, rng) == Preference::kTie);
    }
    const double se = std::sqrt(0.2 * 0.8 / n);
    CHECK(std::abs(flipped / double(n) - 0.2) < 4 * se);

    OracleJudge j(e.vocab, cfg);
    OracleJudge k(e.vocab, cfg);
    for (int i = 0; i < 50; ++i) CHECK(j.compare(wide, flat, p) == k.compare(wide, flat, p));
    CHECK(j.annotator_id() == "oracle");
  }

  TEST_CASE("config validation") {
    OracleConfig c;
    c.noise_prob = 0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = OracleConfig{};
    c.cer_gate = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = OracleConfig{};
    c.dispersion_weight = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    // The weight scales dispersion but never changes a decision.
    const Environment e = env();
    const Prompt& p = e.train[0];
    OracleConfig heavy;
    heavy.dispersion_weight = 1000;
    Rng r1(0), r2(0);
    const Candidate wide = spoken(e, p, p.target_text, {0, 9});
    const Candidate mid = spoken(e, p, p.target_text, {3, 6});
    CHECK(judge(wide, mid, p, e.vocab, OracleConfig{}, r1) ==
          judge(wide, mid, p, e.vocab, heavy, r2));
  }
}
