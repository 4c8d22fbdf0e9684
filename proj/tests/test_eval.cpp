#include <doctest.h>

#include <cmath>

#include "deskmt/eval.hpp"
#include "testutil.hpp"

using namespace deskmt;
using eval::Sentences;

namespace {
std::vector<std::string> words(const std::string& s) { return text::split_ws(s); }

Sentences corpus(const std::vector<std::string>& lines) {
  Sentences out;
  for (const auto& l : lines) out.push_back(words(l));
  return out;
}

// Naive double-loop references for AE/AA, kept independent of the
// implementation path.
double naive_ae(const Sentences& hyps, const eval::FreqTable& fin, const eval::FreqTable& fout,
                const std::vector<std::string>& V) {
  if (V.empty()) return 0.0;
  double total = 0.0;
  for (const std::string& w : V) {
    long long count = 0;
    for (const auto& sent : hyps) {
      for (const auto& tok : sent) {
        if (tok == w) ++count;
      }
    }
    total += double(fin.count(w)) / double(fout.count(w) + 1) * double(count);
  }
  return total / double(V.size());
}

double naive_f1(const Sentences& hyps, const Sentences& refs, const std::string& w) {
  long long match = 0, hyp_total = 0, ref_total = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    long long h = 0, r = 0;
    for (const auto& tok : hyps[i]) h += tok == w;
    for (const auto& tok : refs[i]) r += tok == w;
    match += std::min(h, r);
    hyp_total += h;
    ref_total += r;
  }
  if (hyp_total == 0 || ref_total == 0) return 0.0;
  double p = double(match) / double(hyp_total);
  double rr = double(match) / double(ref_total);
  return p + rr == 0.0 ? 0.0 : 2.0 * p * rr / (p + rr);
}

double naive_aa(const Sentences& hyps, const Sentences& refs, const eval::FreqTable& fin,
                const eval::FreqTable& fout, const std::vector<std::string>& V) {
  if (V.empty()) return 0.0;
  double total = 0.0;
  for (const std::string& w : V) {
    total += double(fin.count(w)) / double(fout.count(w) + 1) * naive_f1(hyps, refs, w);
  }
  return total / double(V.size());
}

Sentences random_corpus(Rng& rng, int n_sents, const std::vector<std::string>& pool) {
  Sentences out;
  for (int i = 0; i < n_sents; ++i) {
    std::vector<std::string> s;
    int len = 1 + rng.uniform_int(7);
    for (int t = 0; t < len; ++t) s.push_back(pool[rng.uniform_int(int(pool.size()))]);
    out.push_back(s);
  }
  return out;
}
}  // namespace

TEST_CASE("bleu basics") {
  Sentences refs = corpus({"the cat sat on the mat", "a small dog barks loudly"});

  SUBCASE("identical corpora score 100") {
    CHECK(eval::bleu(refs, refs) == doctest::Approx(100.0).epsilon(1e-12));
  }

  SUBCASE("zero 4-gram overlap scores 0") {
    Sentences hyps = corpus({"x y z w q", "u v r s t"});
    CHECK(eval::bleu(hyps, refs) == 0.0);
  }

  SUBCASE("length mismatch is an error") {
    Sentences hyps = corpus({"just one"});
    CHECK_THROWS_AS(eval::bleu(hyps, refs), DataError);
  }
}

TEST_CASE("bleu matches a hand-computed two-sentence case") {
  Sentences hyps = corpus({"the cat sat on the mat", "a quick brown fox"});
  Sentences refs = corpus({"the cat sat on the mat", "the quick brown fox jumps"});

  // Hand counts: p1 = 9/10, p2 = 7/8, p3 = 5/6, p4 = 3/4; c = 10, r = 11.
  double expect = 100.0 *
                  std::exp((std::log(9.0 / 10.0) + std::log(7.0 / 8.0) + std::log(5.0 / 6.0) +
                            std::log(3.0 / 4.0)) /
                               4.0 +
                           (1.0 - 11.0 / 10.0));
  double got = eval::bleu(hyps, refs);
  CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  CHECK(got == doctest::Approx(75.7885).epsilon(0.0001));
}

TEST_CASE("bleu is invariant to sentence-pair order") {
  Sentences hyps = corpus({"a b c d e", "f g h i", "a c e g"});
  Sentences refs = corpus({"a b c d f", "f g h j", "a c e g"});
  double fwd = eval::bleu(hyps, refs);
  Sentences hyps_r{hyps[2], hyps[0], hyps[1]};
  Sentences refs_r{refs[2], refs[0], refs[1]};
  CHECK(eval::bleu(hyps_r, refs_r) == doctest::Approx(fwd).epsilon(1e-12));
}

TEST_CASE("adaptation extent on the hand instance") {
  // V = {a, b}; freq_in a:4 b:1; freq_out a:1 b:3; counts a:3 b:2
  eval::FreqTable fin, fout;
  fin.counts = {{"a", 4}, {"b", 1}};
  fout.counts = {{"a", 1}, {"b", 3}};
  Sentences hyps = corpus({"a a b", "a b"});
  std::vector<std::string> V = {"a", "b"};

  double ae = eval::adaptation_extent(hyps, fin, fout, V);
  CHECK(ae == doctest::Approx(3.25).epsilon(1e-12));

  SUBCASE("doubling every count doubles AE") {
    Sentences doubled = corpus({"a a b", "a b", "a a b", "a b"});
    CHECK(eval::adaptation_extent(doubled, fin, fout, V) == doctest::Approx(2.0 * ae));
  }

  SUBCASE("empty hypothesis corpus gives 0") {
    CHECK(eval::adaptation_extent({}, fin, fout, V) == 0.0);
  }
}

TEST_CASE("subword F1") {
  SUBCASE("clipped counts: hyp 2, ref 3 in one sentence") {
    Sentences hyps = corpus({"w w x"});
    Sentences refs = corpus({"w w w"});
    CHECK(eval::subword_f1(hyps, refs, "w") == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("absent everywhere is 0 by convention") {
    CHECK(eval::subword_f1(corpus({"a b"}), corpus({"c d"}), "zz") == 0.0);
  }
  SUBCASE("matching counts per sentence give 1") {
    Sentences hyps = corpus({"w a w", "b w"});
    Sentences refs = corpus({"w w c", "w d"});
    CHECK(eval::subword_f1(hyps, refs, "w") == doctest::Approx(1.0));
  }
}

TEST_CASE("adaptation accuracy on the hand instance") {
  // V = {w}; freq_in 4, freq_out 1; F1(w) = 0.8  ->  AA = (4/2) * 0.8 = 1.6
  eval::FreqTable fin, fout;
  fin.counts = {{"w", 4}};
  fout.counts = {{"w", 1}};
  Sentences hyps = corpus({"w w x"});
  Sentences refs = corpus({"w w w"});
  double aa = eval::adaptation_accuracy(hyps, refs, fin, fout, {"w"});
  CHECK(aa == doctest::Approx(1.6).epsilon(1e-12));

  SUBCASE("scaling freq_in scales AA linearly") {
    eval::FreqTable fin3;
    fin3.counts = {{"w", 12}};
    CHECK(eval::adaptation_accuracy(hyps, refs, fin3, fout, {"w"}) ==
          doctest::Approx(3.0 * aa).epsilon(1e-12));
  }

  SUBCASE("perfect translation reduces to the frequency-ratio mean") {
    double perfect = eval::adaptation_accuracy(refs, refs, fin, fout, {"w"});
    CHECK(perfect == doctest::Approx(4.0 / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("AE and AA equal the naive reference on random corpora") {
  Rng rng(31);
  std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + rng.uniform_int(6);
    Sentences hyps = random_corpus(rng, n, pool);
    Sentences refs = random_corpus(rng, n, pool);
    eval::FreqTable fin = eval::build_freq_table(random_corpus(rng, 4, pool));
    eval::FreqTable fout = eval::build_freq_table(random_corpus(rng, 4, pool));
    CHECK(eval::adaptation_extent(hyps, fin, fout, pool) ==
          doctest::Approx(naive_ae(hyps, fin, fout, pool)).epsilon(1e-12));
    CHECK(eval::adaptation_accuracy(hyps, refs, fin, fout, pool) ==
          doctest::Approx(naive_aa(hyps, refs, fin, fout, pool)).epsilon(1e-12));
  }
}

TEST_CASE("domain-specific counts") {
  std::set<std::string> in_vocab = {"p", "q", "shared"};
  std::set<std::string> out_vocab = {"x", "shared"};

  CHECK(eval::domain_specific_count(corpus({"x shared x"}), in_vocab, out_vocab) == 0);
  CHECK(eval::domain_specific_count(corpus({"p p p p p"}), in_vocab, out_vocab) == 5);
  CHECK(eval::domain_specific_count(corpus({"p shared q x"}), in_vocab, out_vocab) == 2);
}

TEST_CASE("paired bootstrap") {
  Sentences refs = corpus({"the cat sat on the mat", "a small dog barks loudly",
                           "green ideas sleep furiously here", "every good boy does fine today"});
  Sentences same = refs;
  Sentences disjoint = corpus({"q w e r t y", "z x c v b", "m n b v c x", "l k j h g f"});

  SUBCASE("identical systems: ties count for b, p = 1") {
    CHECK(eval::paired_bootstrap(same, same, refs, 200, 5) == doctest::Approx(1.0));
  }

  SUBCASE("dominant system a: p < 0.01") {
    CHECK(eval::paired_bootstrap(refs, disjoint, refs, 1000, 5) < 0.01);
  }

  SUBCASE("deterministic given the seed") {
    Sentences mixed = {refs[0], disjoint[1], refs[2], disjoint[3]};
    double p1 = eval::paired_bootstrap(mixed, refs, refs, 500, 11);
    double p2 = eval::paired_bootstrap(mixed, refs, refs, 500, 11);
    CHECK(p1 == p2);
  }

  SUBCASE("p(a,b) + p(b,a) >= 1 with the same seed") {
    Sentences mixed = {refs[0], disjoint[1], refs[2], disjoint[3]};
    double ab = eval::paired_bootstrap(mixed, refs, refs, 500, 13);
    double ba = eval::paired_bootstrap(refs, mixed, refs, 500, 13);
    CHECK(ab + ba >= 1.0);
  }

  SUBCASE("minimum sample count enforced") {
    CHECK_THROWS_AS(eval::paired_bootstrap(same, same, refs, 10, 1), DataError);
  }
}

TEST_CASE("pearson correlation") {
  SUBCASE("perfect linear relation") {
    std::vector<double> x = {0.1, -0.5, 1.2, 2.0, -1.1};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * v);
    bool degenerate = true;
    CHECK(eval::pearson(y, x, &degenerate) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!degenerate);
  }
  SUBCASE("zero variance is degenerate, not NaN") {
    std::vector<double> x = {0.0, 0.0, 0.0};
    std::vector<double> y = {1.0, 2.0, 3.0};
    bool degenerate = false;
    double r = eval::pearson(x, y, &degenerate);
    CHECK(degenerate);
    CHECK(r == 0.0);
  }
}

TEST_CASE("domain_diff_correlation on identical models is degenerate") {
  auto toy = testutil::make_toy_text({"a b c d e f g h"});
  int V = toy.vocab.size();
  Rng rng(6);
  lm::Config lcfg;
  lcfg.embed_dim = lcfg.hidden_dim = 6;
  lcfg.layers = 1;
  lm::Model l1;
  l1.init(V, toy.vocab.hash(), lcfg, rng);
  nmt::Config ncfg;
  ncfg.embed_dim = ncfg.hidden_dim = 6;
  ncfg.layers = 1;
  nmt::Model n1;
  n1.init(V, toy.vocab.hash(), ncfg, rng);

  nmt::ParallelIds pairs;
  for (const char* s : {"a b c", "b c d", "c d e", "d e f"}) {
    pairs.emplace_back(toy.ids(s), toy.ids(s));
  }
  Sentences dom = corpus({"a</w> b</w> c</w> d</w> e</w> f</w>"});
  eval::FreqTable freq = eval::build_freq_table(dom);

  eval::CorrelationResult res =
      eval::domain_diff_correlation(l1, l1, n1, n1, pairs, toy.vocab, freq, freq, 10);
  CHECK(res.degenerate);
  for (const auto& row : res.rows) {
    CHECK(row.d_nmt == 0.0);
    CHECK(row.d_lm == 0.0);
  }

  // fewer than 3 qualifying words is an error
  eval::FreqTable tiny;
  tiny.counts = {{"a</w>", 5}};
  CHECK_THROWS_AS(eval::domain_diff_correlation(l1, l1, n1, n1, pairs, toy.vocab, tiny, tiny, 10),
                  DataError);
}

TEST_CASE("eval report serialization") {
  eval::EvalReport r;
  r.bleu_score = 42.5;
  r.ae = 1.25;
  r.aa = 0.5;
  r.domain_count = 7;
  r.has_bootstrap = true;
  r.bootstrap_p = 0.03;
  r.config_echo = "beam=4\nbeta=0.4\n";
  r.f1_table = {{"w</w>", 0.8}};
  std::string text = r.to_text();
  CHECK(text.find("bleu=42.5") != std::string::npos);
  CHECK(text.find("bootstrap_p=0.03") != std::string::npos);
  CHECK(text.find("config.beam=4") != std::string::npos);
  CHECK(text.find("f1\tw</w>\t0.8") != std::string::npos);
}
