#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "deskmt/decode.hpp"
#include "testutil.hpp"

using namespace deskmt;

namespace {

// Toy models over the minimal vocabulary (the four reserved ids; EOS = 2).
struct ToyWorld {
  nmt::Model nmt;
  lm::Model lm_in, lm_out;

  explicit ToyWorld(uint64_t seed, int vocab = 4, int dim = 5) {
    Rng rng(seed);
    nmt::Config ncfg;
    ncfg.embed_dim = dim;
    ncfg.hidden_dim = dim;
    ncfg.layers = 1;
    nmt.init(vocab, 99, ncfg, rng);
    // spread the output layer so scores are well separated
    nmt.w_out.init_uniform(rng, 1.0);
    nmt.b_out.init_uniform(rng, 0.5);
    lm::Config lcfg;
    lcfg.embed_dim = dim;
    lcfg.hidden_dim = dim;
    lcfg.layers = 1;
    lm_in.init(vocab, 99, lcfg, rng);
    lm_out.init(vocab, 99, lcfg, rng);
    lm_in.w_out.init_uniform(rng, 1.0);
    lm_out.w_out.init_uniform(rng, 1.0);
  }

  decode::Models models(decode::FusionMode mode) const {
    decode::Models m;
    m.nmt = &nmt;
    if (mode != decode::FusionMode::none) m.lm_in = &lm_in;
    if (mode == decode::FusionMode::dda_shallow) m.lm_out = &lm_out;
    return m;
  }
};

// Every EOS-terminated sequence up to max_len steps, scored through rescore.
struct Enumerated {
  std::vector<int> tokens;  // BOS ... EOS
  double rank_score;
  double log_prob;
};

Enumerated best_by_enumeration(const decode::Models& models, const std::vector<int>& src,
                               const decode::Config& cfg, int vocab) {
  std::vector<Enumerated> all;
  std::vector<std::vector<int>> frontier{{text::Vocabulary::kBos}};
  for (int len = 1; len <= cfg.max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : frontier) {
      for (int v = 0; v < vocab; ++v) {
        std::vector<int> seq = prefix;
        seq.push_back(v);
        if (v == text::Vocabulary::kEos) {
          decode::Rescore r = decode::rescore(models, src, seq, cfg);
          double rank = r.log_prob + decode::coverage_penalty(r.attention, cfg.coverage_beta);
          all.push_back(Enumerated{seq, rank, r.log_prob});
        } else if (len < cfg.max_len) {
          next.push_back(std::move(seq));
        }
      }
    }
    frontier = std::move(next);
  }
  REQUIRE(!all.empty());
  auto best = std::max_element(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.rank_score != b.rank_score) return a.rank_score < b.rank_score;
    return b.tokens < a.tokens;
  });
  return *best;
}

}  // namespace

TEST_CASE("coverage_penalty arithmetic") {
  std::vector<Vec> rows;
  Vec r1(2), r2(2);
  r1 << 0.3, 0.7;
  r2 << 0.2, 0.5;
  rows = {r1, r2};  // column sums 0.5 and 1.2

  CHECK(decode::coverage_penalty(rows, 0.0) == 0.0);
  double expect = 0.2 * (std::log(0.5) + std::log(1.0));
  CHECK(decode::coverage_penalty(rows, 0.2) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(decode::coverage_penalty(rows, 0.2) == doctest::Approx(-0.13863).epsilon(1e-4));
  CHECK(decode::coverage_penalty(rows, 0.2) <= 0.0);

  // all column sums >= 1: min clamps every term to log(1) = 0
  Vec full(2);
  full << 1.0, 1.3;
  CHECK(decode::coverage_penalty({full}, 0.4) == 0.0);
}

TEST_CASE("beam size 1 equals stepwise greedy decoding") {
  ToyWorld w(12, 8);
  std::vector<int> src = {3, 4, 5};
  decode::Config cfg;
  cfg.beam_size = 1;
  cfg.max_len = 10;
  decode::Models m = w.models(decode::FusionMode::none);

  std::vector<int> beam = decode::translate_sentence(m, src, cfg);
  std::vector<int> greedy = nmt::greedy_decode(w.nmt, src, 10);
  CHECK(beam == greedy);
}

TEST_CASE("dda-shallow with beta 0 decodes identically to no fusion") {
  ToyWorld w(21, 8);
  std::vector<int> src = {4, 6};
  decode::Config none;
  none.beam_size = 4;
  none.max_len = 8;

  decode::Config dda = none;
  dda.fusion = decode::FusionMode::dda_shallow;
  dda.beta = 0.0;

  auto h1 = decode::beam_search(w.models(decode::FusionMode::none), src, none);
  auto h2 = decode::beam_search(w.models(decode::FusionMode::dda_shallow), src, dda);
  REQUIRE(h1.size() == h2.size());
  for (size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].tokens == h2[i].tokens);
    CHECK(h1[i].log_prob == h2[i].log_prob);
  }
}

TEST_CASE("beam search matches exhaustive enumeration on a toy model") {
  ToyWorld w(7);  // |V| = 4
  std::vector<int> src = {3};
  decode::Config cfg;
  cfg.beam_size = 4;
  cfg.max_len = 3;

  for (auto mode : {decode::FusionMode::none, decode::FusionMode::lm_shallow,
                    decode::FusionMode::dda_shallow}) {
    for (double cp : {0.0, 0.2}) {
      CAPTURE(int(mode));
      CAPTURE(cp);
      cfg.fusion = mode;
      cfg.beta = 0.7;
      cfg.coverage_beta = cp;
      decode::Models models = w.models(mode);
      Enumerated best = best_by_enumeration(models, src, cfg, 4);
      auto hyps = decode::beam_search(models, src, cfg);
      REQUIRE(!hyps.empty());
      CHECK(hyps.front().tokens == best.tokens);
      CHECK(hyps.front().log_prob == doctest::Approx(best.log_prob).epsilon(1e-9));
    }
  }
}

TEST_CASE("reported scores match independent re-scoring") {
  ToyWorld w(30, 9);
  std::vector<int> src = {4, 5, 6, 7};
  for (auto mode : {decode::FusionMode::none, decode::FusionMode::lm_shallow,
                    decode::FusionMode::dda_shallow}) {
    decode::Config cfg;
    cfg.fusion = mode;
    cfg.beam_size = 3;
    cfg.max_len = 6;
    cfg.beta = 0.5;
    decode::Models models = w.models(mode);
    for (const auto& h : decode::beam_search(models, src, cfg)) {
      decode::Rescore r = decode::rescore(models, src, h.tokens, cfg);
      CHECK(h.log_prob == doctest::Approx(r.log_prob).epsilon(1e-9));
    }
  }
}

TEST_CASE("larger beams never lose score on the same objective") {
  ToyWorld w(55, 6);
  std::vector<int> src = {3, 5};
  decode::Config cfg1;
  cfg1.beam_size = 1;
  cfg1.max_len = 5;
  decode::Config cfg8 = cfg1;
  cfg8.beam_size = 8;

  decode::Models m = w.models(decode::FusionMode::none);
  auto h1 = decode::beam_search(m, src, cfg1);
  auto h8 = decode::beam_search(m, src, cfg8);
  REQUIRE(!h1.empty());
  REQUIRE(!h8.empty());
  CHECK(h8.front().log_prob >= h1.front().log_prob - 1e-12);
}

TEST_CASE("no finished hypothesis within max length returns a flagged best-effort") {
  ToyWorld w(3, 6);
  w.nmt.b_out.value(text::Vocabulary::kEos, 0) = -1e5;  // EOS essentially impossible
  std::vector<int> src = {4};
  decode::Config cfg;
  cfg.beam_size = 1;
  cfg.max_len = 3;
  auto hyps = decode::beam_search(w.models(decode::FusionMode::none), src, cfg);
  REQUIRE(hyps.size() == 1);
  CHECK(!hyps.front().finished);
  CHECK(hyps.front().reached_max_len);
  CHECK(hyps.front().tokens.size() == 4);  // BOS + max_len tokens
}

TEST_CASE("determinism: identical inputs give identical hypothesis lists") {
  ToyWorld w(71, 10);
  std::vector<int> src = {4, 8, 3};
  decode::Config cfg;
  cfg.fusion = decode::FusionMode::dda_shallow;
  cfg.beam_size = 4;
  cfg.max_len = 7;
  cfg.beta = 0.3;
  cfg.coverage_beta = 0.1;
  decode::Models m = w.models(cfg.fusion);
  auto a = decode::beam_search(m, src, cfg);
  auto b = decode::beam_search(m, src, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].log_prob == b[i].log_prob);
  }
}

TEST_CASE("hypothesis invariants") {
  ToyWorld w(13, 8);
  std::vector<int> src = {3, 4};
  decode::Config cfg;
  cfg.beam_size = 4;
  cfg.max_len = 6;
  for (const auto& h : decode::beam_search(w.models(decode::FusionMode::none), src, cfg)) {
    CHECK(h.finished == (h.tokens.back() == text::Vocabulary::kEos));
    CHECK(h.tokens.front() == text::Vocabulary::kBos);
    CHECK(h.attention.size() == h.tokens.size() - 1);  // one row per emitted step
    for (const Vec& a : h.attention) {
      CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("missing component models fail fast") {
  ToyWorld w(5);
  decode::Models m;  // nothing set
  decode::Config cfg;
  CHECK_THROWS_AS(decode::beam_search(m, {3}, cfg), DataError);

  decode::Config dda;
  dda.fusion = decode::FusionMode::dda_shallow;
  decode::Models partial;
  partial.nmt = &w.nmt;
  partial.lm_in = &w.lm_in;  // lm_out missing
  CHECK_THROWS_AS(decode::beam_search(partial, {3}, dda), DataError);

  // vocabulary-hash mismatch between components
  lm::Model other = w.lm_in;
  other.vocab_hash = 12345;
  decode::Models mismatched;
  mismatched.nmt = &w.nmt;
  mismatched.lm_in = &other;
  decode::Config lmshallow;
  lmshallow.fusion = decode::FusionMode::lm_shallow;
  CHECK_THROWS_AS(decode::beam_search(mismatched, {3}, lmshallow), DataError);
}
