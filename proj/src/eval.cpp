#include "deskmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace deskmt::eval {

// ---------------------------------------------------------------------------
// BLEU

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < 4; ++n) {
    correct[n] += o.correct[n];
    total[n] += o.total[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

namespace {
std::map<std::vector<std::string>, long long> ngram_counts(const std::vector<std::string>& sent,
                                                           int n) {
  std::map<std::vector<std::string>, long long> out;
  if (int(sent.size()) < n) return out;
  for (size_t i = 0; i + n <= sent.size(); ++i) {
    out[std::vector<std::string>(sent.begin() + i, sent.begin() + i + n)] += 1;
  }
  return out;
}
}  // namespace

BleuStats bleu_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  BleuStats s;
  s.hyp_len = (long long)hyp.size();
  s.ref_len = (long long)ref.size();
  for (int n = 1; n <= 4; ++n) {
    auto hc = ngram_counts(hyp, n);
    auto rc = ngram_counts(ref, n);
    for (const auto& [g, c] : hc) {
      s.total[n - 1] += c;
      auto it = rc.find(g);
      if (it != rc.end()) s.correct[n - 1] += std::min(c, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s) {
  if (s.hyp_len == 0) return 0.0;
  double log_prec = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (s.total[n] == 0 || s.correct[n] == 0) return 0.0;
    log_prec += std::log(double(s.correct[n]) / double(s.total[n]));
  }
  double bp = s.hyp_len < s.ref_len ? std::exp(1.0 - double(s.ref_len) / double(s.hyp_len)) : 1.0;
  return 100.0 * bp * std::exp(log_prec / 4.0);
}

double bleu(const Sentences& hyps, const Sentences& refs) {
  if (hyps.size() != refs.size()) {
    throw DataError("bleu: corpus sizes differ (" + std::to_string(hyps.size()) + " vs " +
                    std::to_string(refs.size()) + ")");
  }
  BleuStats s;
  for (size_t i = 0; i < hyps.size(); ++i) s += bleu_stats(hyps[i], refs[i]);
  return bleu_from_stats(s);
}

// ---------------------------------------------------------------------------
// adaptation metrics

FreqTable build_freq_table(const Sentences& corpus) {
  FreqTable t;
  for (const auto& sent : corpus) {
    for (const auto& w : sent) {
      t.counts[w] += 1;
      t.total += 1;
    }
  }
  return t;
}

double adaptation_extent(const Sentences& hyps, const FreqTable& freq_in,
                         const FreqTable& freq_out, const std::vector<std::string>& vocab) {
  if (vocab.empty()) return 0.0;
  FreqTable hyp_counts = build_freq_table(hyps);
  double sum = 0.0;
  for (const std::string& w : vocab) {
    double ratio = double(freq_in.count(w)) / double(freq_out.count(w) + 1);
    sum += ratio * double(hyp_counts.count(w));
  }
  return sum / double(vocab.size());
}

namespace {
struct F1Stats {
  long long match = 0, hyp = 0, ref = 0;
};

// Per-sentence clipped matching accumulated over the corpus.
std::unordered_map<std::string, F1Stats> f1_stats(const Sentences& hyps, const Sentences& refs) {
  if (hyps.size() != refs.size()) {
    throw DataError("subword F1: corpus sizes differ");
  }
  std::unordered_map<std::string, F1Stats> stats;
  for (size_t i = 0; i < hyps.size(); ++i) {
    std::unordered_map<std::string, long long> hc, rc;
    for (const auto& w : hyps[i]) hc[w] += 1;
    for (const auto& w : refs[i]) rc[w] += 1;
    for (const auto& [w, c] : hc) {
      F1Stats& s = stats[w];
      s.hyp += c;
      auto it = rc.find(w);
      if (it != rc.end()) s.match += std::min(c, it->second);
    }
    for (const auto& [w, c] : rc) stats[w].ref += c;
  }
  return stats;
}

double f1_of(const F1Stats& s) {
  if (s.hyp == 0 || s.ref == 0) return 0.0;
  double p = double(s.match) / double(s.hyp);
  double r = double(s.match) / double(s.ref);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}
}  // namespace

double adaptation_accuracy(const Sentences& hyps, const Sentences& refs, const FreqTable& freq_in,
                           const FreqTable& freq_out, const std::vector<std::string>& vocab) {
  if (vocab.empty()) return 0.0;
  auto stats = f1_stats(hyps, refs);
  double sum = 0.0;
  for (const std::string& w : vocab) {
    double ratio = double(freq_in.count(w)) / double(freq_out.count(w) + 1);
    auto it = stats.find(w);
    double f1 = it == stats.end() ? 0.0 : f1_of(it->second);
    sum += ratio * f1;
  }
  return sum / double(vocab.size());
}

double subword_f1(const Sentences& hyps, const Sentences& refs, const std::string& w) {
  auto stats = f1_stats(hyps, refs);
  auto it = stats.find(w);
  return it == stats.end() ? 0.0 : f1_of(it->second);
}

long long domain_specific_count(const Sentences& hyps, const std::set<std::string>& in_vocab,
                                const std::set<std::string>& out_vocab) {
  long long total = 0;
  for (const auto& sent : hyps) {
    for (const auto& w : sent) {
      if (in_vocab.count(w) && !out_vocab.count(w)) ++total;
    }
  }
  return total;
}

double paired_bootstrap(const Sentences& hyps_a, const Sentences& hyps_b, const Sentences& refs,
                        int n_samples, uint64_t seed) {
  if (hyps_a.size() != refs.size() || hyps_b.size() != refs.size()) {
    throw DataError("paired_bootstrap: corpus sizes differ");
  }
  if (n_samples < 100) throw DataError("paired_bootstrap: need at least 100 samples");
  size_t n = refs.size();
  if (n == 0) throw DataError("paired_bootstrap: empty corpus");

  std::vector<BleuStats> sa(n), sb(n);
  for (size_t i = 0; i < n; ++i) {
    sa[i] = bleu_stats(hyps_a[i], refs[i]);
    sb[i] = bleu_stats(hyps_b[i], refs[i]);
  }

  Rng rng(seed);
  long long b_wins_or_ties = 0;
  for (int s = 0; s < n_samples; ++s) {
    BleuStats ta, tb;
    for (size_t i = 0; i < n; ++i) {
      size_t idx = rng.next_u64() % n;
      ta += sa[idx];
      tb += sb[idx];
    }
    if (bleu_from_stats(ta) <= bleu_from_stats(tb)) ++b_wins_or_ties;
  }
  return double(b_wins_or_ties) / double(n_samples);
}

// ---------------------------------------------------------------------------
// correlation

double pearson(const std::vector<double>& xs, const std::vector<double>& ys, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (xs.size() != ys.size()) throw DataError("pearson: size mismatch");
  size_t n = xs.size();
  if (n < 2) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

std::string CorrelationResult::table_text() const {
  std::ostringstream os;
  for (const auto& row : rows) os << row.word << "\t" << row.d_nmt << "\t" << row.d_lm << "\n";
  return os.str();
}

CorrelationResult domain_diff_correlation(const lm::Model& lm_in, const lm::Model& lm_out,
                                          const nmt::Model& nmt_in, const nmt::Model& nmt_out,
                                          const nmt::ParallelIds& corpus,
                                          const text::Vocabulary& vocab,
                                          const FreqTable& freq_in, const FreqTable& freq_out,
                                          int top_n) {
  if (lm_in.vocab_hash != lm_out.vocab_hash || lm_in.vocab_hash != nmt_in.vocab_hash ||
      lm_in.vocab_hash != nmt_out.vocab_hash) {
    throw DataError("domain_diff_correlation: models use different vocabularies");
  }

  // Per-token log-prob sums under each of the four models, keyed by token id.
  struct Acc {
    double lm_in = 0, lm_out = 0, nmt_in = 0, nmt_out = 0;
    long long n = 0;
  };
  std::unordered_map<int, Acc> acc;

  for (const auto& [src, tgt] : corpus) {
    lm::State lsi = lm::init_state(lm_in), lso = lm::init_state(lm_out);
    nmt::EncoderOutput ei = nmt::encode(nmt_in, src), eo = nmt::encode(nmt_out, src);
    nmt::State nsi = nmt::init_state(nmt_in, ei), nso = nmt::init_state(nmt_out, eo);
    int prev = text::Vocabulary::kBos;
    for (size_t t = 0; t <= tgt.size(); ++t) {
      int gold = t < tgt.size() ? tgt[t] : text::Vocabulary::kEos;
      lm::Step si = lm::lm_step(lm_in, prev, lsi);
      lm::Step so = lm::lm_step(lm_out, prev, lso);
      nmt::DecoderStep di = nmt::decode_step(nmt_in, ei, prev, nsi);
      nmt::DecoderStep dn = nmt::decode_step(nmt_out, eo, prev, nso);
      Acc& a = acc[gold];
      a.lm_in += si.log_dist(gold);
      a.lm_out += so.log_dist(gold);
      a.nmt_in += di.log_dist(gold);
      a.nmt_out += dn.log_dist(gold);
      a.n += 1;
      lsi = si.state;
      lso = so.state;
      nsi = di.state;
      nso = dn.state;
      prev = gold;
    }
  }

  // Words frequent in both domains, ranked by the smaller of the two counts.
  std::vector<std::pair<long long, std::string>> ranked;
  for (const auto& [w, c_in] : freq_in.counts) {
    long long c_out = freq_out.count(w);
    if (c_out > 0) ranked.emplace_back(std::min(c_in, c_out), w);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  CorrelationResult res;
  std::vector<double> xs, ys;
  for (const auto& [c, w] : ranked) {
    (void)c;
    if (int(res.rows.size()) >= top_n) break;
    int id = vocab.id(w);
    if (id == text::Vocabulary::kUnk && w != vocab.token(text::Vocabulary::kUnk)) continue;
    auto it = acc.find(id);
    if (it == acc.end() || it->second.n == 0) continue;
    const Acc& a = it->second;
    double n = double(a.n);
    CorrelationRow row;
    row.word = w;
    row.d_nmt = (a.nmt_in - a.nmt_out) / n;
    row.d_lm = (a.lm_in - a.lm_out) / n;
    res.rows.push_back(row);
    xs.push_back(row.d_nmt);
    ys.push_back(row.d_lm);
  }

  if (res.rows.size() < 3) {
    throw DataError("domain_diff_correlation: fewer than 3 qualifying words");
  }
  res.r = pearson(xs, ys, &res.degenerate);
  return res;
}

// ---------------------------------------------------------------------------

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "bleu=" << bleu_score << "\n";
  os << "ae=" << ae << "\n";
  os << "aa=" << aa << "\n";
  os << "domain_specific_count=" << domain_count << "\n";
  if (has_bootstrap) os << "bootstrap_p=" << bootstrap_p << "\n";
  std::istringstream cfg(config_echo);
  std::string line;
  while (std::getline(cfg, line)) {
    if (!line.empty()) os << "config." << line << "\n";
  }
  for (const auto& [w, f1] : f1_table) os << "f1\t" << w << "\t" << f1 << "\n";
  return os.str();
}

}  // namespace deskmt::eval
