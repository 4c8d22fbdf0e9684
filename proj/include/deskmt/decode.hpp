#pragma once

#include "deskmt/fusion.hpp"

// Beam search over a plain NMT model or any fusion configuration, with an
// optional coverage penalty on the ranking score.

namespace deskmt::decode {

enum class FusionMode { none, lm_shallow, dda_shallow, deep };

FusionMode fusion_mode_from_name(const std::string& s);
std::string fusion_mode_name(FusionMode m);

struct Config {
  int beam_size = 4;
  int max_len = 64;
  FusionMode fusion = FusionMode::none;
  double beta = 0.4;           // shallow-fusion interpolation weight
  double coverage_beta = 0.0;  // >= 0, 0 disables
  bool length_norm = false;    // divide log-prob by emitted length for ranking
};

// The component models for the selected mode; vocabularies must all match.
struct Models {
  const nmt::Model* nmt = nullptr;
  const lm::Model* lm_in = nullptr;
  const lm::Model* lm_out = nullptr;
  const fusion::Model* deep = nullptr;
};

struct Hypothesis {
  std::vector<int> tokens;  // BOS-prefixed; ends with EOS iff finished
  double log_prob = 0.0;    // sum of chosen per-step fused log-probs
  std::vector<Vec> attention;
  bool finished = false;
  bool reached_max_len = false;  // set when returned unfinished
  nmt::State nmt_state;
  std::vector<lm::State> lm_states;
};

// beta_cp * sum_j log(min(sum_t a_tj, 1)); 0 when beta_cp == 0.
double coverage_penalty(const std::vector<Vec>& attention_history, double beta_cp);

// Ranked finished hypotheses (best first); falls back to the best unfinished
// one, flagged, when nothing finishes within max_len.
std::vector<Hypothesis> beam_search(const Models& models, const std::vector<int>& src_ids,
                                    const Config& cfg);

// Teacher-forces `tokens` (BOS-prefixed) through the same fused pipeline.
struct Rescore {
  double log_prob = 0.0;
  std::vector<Vec> attention;
};
Rescore rescore(const Models& models, const std::vector<int>& src_ids,
                const std::vector<int>& tokens, const Config& cfg);

// Best translation without BOS/EOS.
std::vector<int> translate_sentence(const Models& models, const std::vector<int>& src_ids,
                                    const Config& cfg, Hypothesis* best = nullptr);

}  // namespace deskmt::decode
