#pragma once

#include <array>
#include <set>

#include "deskmt/lm.hpp"
#include "deskmt/nmt.hpp"

// Evaluation and analysis: corpus BLEU, the subword-level adaptation metrics
// AE and AA, domain-specific subword counts, paired-bootstrap significance,
// and the cross-domain log-probability correlation table.

namespace deskmt::eval {

using Sentences = std::vector<std::vector<std::string>>;

// --- BLEU -------------------------------------------------------------------

struct BleuStats {
  std::array<long long, 4> correct{0, 0, 0, 0};
  std::array<long long, 4> total{0, 0, 0, 0};
  long long hyp_len = 0;
  long long ref_len = 0;
  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
double bleu_from_stats(const BleuStats& s);

// Corpus-level BLEU-4 in [0,100], brevity penalty, no smoothing.
double bleu(const Sentences& hyps, const Sentences& refs);

// --- subword-level adaptation metrics ---------------------------------------

struct FreqTable {
  std::unordered_map<std::string, long long> counts;
  long long total = 0;
  long long count(const std::string& w) const {
    auto it = counts.find(w);
    return it == counts.end() ? 0 : it->second;
  }
};

FreqTable build_freq_table(const Sentences& corpus);

// (1/|V|) sum_w freq_in(w)/(freq_out(w)+1) * count(w).
double adaptation_extent(const Sentences& hyps, const FreqTable& freq_in,
                         const FreqTable& freq_out, const std::vector<std::string>& vocab);

// (1/|V|) sum_w freq_in(w)/(freq_out(w)+1) * F1(w).
double adaptation_accuracy(const Sentences& hyps, const Sentences& refs, const FreqTable& freq_in,
                           const FreqTable& freq_out, const std::vector<std::string>& vocab);

// Corpus-level clipped precision/recall; 0 when w is absent from both sides.
double subword_f1(const Sentences& hyps, const Sentences& refs, const std::string& w);

// Occurrences in hyps of subwords appearing exclusively in the in-domain set.
long long domain_specific_count(const Sentences& hyps, const std::set<std::string>& in_vocab,
                                const std::set<std::string>& out_vocab);

// Koehn-style paired bootstrap; p = fraction of resamples with
// BLEU(a) <= BLEU(b) (ties count toward b). Deterministic given seed.
double paired_bootstrap(const Sentences& hyps_a, const Sentences& hyps_b, const Sentences& refs,
                        int n_samples, uint64_t seed);

// --- cross-domain log-probability correlation --------------------------------

double pearson(const std::vector<double>& xs, const std::vector<double>& ys, bool* degenerate);

struct CorrelationRow {
  std::string word;
  double d_nmt = 0;  // mean log p under NMT-in minus NMT-out
  double d_lm = 0;   // mean log p under LM-in minus LM-out
};

struct CorrelationResult {
  std::vector<CorrelationRow> rows;
  double r = 0.0;
  bool degenerate = false;
  std::string table_text() const;  // plot-ready, one "word d_nmt d_lm" row per line
};

// Teacher-forces all four models over the eval corpus targets and correlates
// the per-word mean log-probability differences for the top_n words most
// frequent in both domains.
CorrelationResult domain_diff_correlation(const lm::Model& lm_in, const lm::Model& lm_out,
                                          const nmt::Model& nmt_in, const nmt::Model& nmt_out,
                                          const nmt::ParallelIds& corpus,
                                          const text::Vocabulary& vocab,
                                          const FreqTable& freq_in, const FreqTable& freq_out,
                                          int top_n);

// --- report ------------------------------------------------------------------

struct EvalReport {
  double bleu_score = 0.0;
  double ae = 0.0;
  double aa = 0.0;
  long long domain_count = 0;
  std::vector<std::pair<std::string, double>> f1_table;
  bool has_bootstrap = false;
  double bootstrap_p = 0.0;
  std::string config_echo;  // key=value lines

  std::string to_text() const;
};

}  // namespace deskmt::eval
