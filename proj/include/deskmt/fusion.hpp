#pragma once

#include "deskmt/lm.hpp"
#include "deskmt/nmt.hpp"

// Model-combination strategies. Shallow modes rescore per-step distributions
// at decoding time; deep modes learn a gated combination of the component
// models' states feeding the translation model's output layer.

namespace deskmt::fusion {

using ag::Graph;
using ag::Param;
using ag::Var;

// normalize(exp(log p_nmt + beta * (log p_lm_in - log p_lm_out))).
// Probabilities are floored at 1e-12 before the logs; beta = 0 and
// p_lm_in == p_lm_out return p_nmt bit-for-bit.
Vec dda_shallow_combine(const Vec& p_nmt, const Vec& p_lm_in, const Vec& p_lm_out, double beta);

// normalize(exp(log p_nmt + beta * log p_lm_in)).
Vec lm_shallow_combine(const Vec& p_nmt, const Vec& p_lm_in, double beta);

// Log-space variants used inside beam search; inputs are normalized
// log-distributions, output is a normalized log-distribution.
Vec dda_shallow_combine_log(const Vec& lp_nmt, const Vec& lp_lm_in, const Vec& lp_lm_out,
                            double beta);
Vec lm_shallow_combine_log(const Vec& lp_nmt, const Vec& lp_lm_in, double beta);

// Which per-step vectors enter the gated combination.
enum class FusionPoint { hidden, embeddings, both, probabilities };

FusionPoint fusion_point_from_name(const std::string& s);
std::string fusion_point_name(FusionPoint p);

// Gate transformation F: one linear map from the m*d concatenation back to
// m*d, split into m d-dimensional gates.
struct DeepFusionParams {
  Param w;  // (m*d) x (m*d)
  Param b;  // (m*d) x 1
  bool sigmoid_gate = true;
  int components = 0;  // m
  int state_dim = 0;   // d

  void init(int m, int d, Rng& rng, double scale = 0.1);
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct FusedStep {
  Vec s_da;
  std::vector<Vec> gates;
  Vec dist;      // |V| simplex (empty when no projection was supplied)
  Vec log_dist;
};

// Value-path gated combination; projection may be null when the fused state
// is itself the output score vector (probability-fusion mode).
FusedStep deep_fuse_step(const std::vector<Vec>& states, const DeepFusionParams& p,
                         const Mat* w_out, const Vec* b_out);

// Three-state convenience in the canonical [LM-out; LM-in; NMT] order.
FusedStep deep_fuse_step(const Vec& s_lm_out, const Vec& s_lm_in, const Vec& s_nmt,
                         const DeepFusionParams& p, const Mat& w_out, const Vec& b_out);

struct FusedVars {
  Var s_da;
  std::vector<Var> gates;
};
FusedVars fuse_states_graph(Graph& g, const std::vector<Var>& states, DeepFusionParams& p);

// Which language models participate. Wiring order of `lms` is fixed:
// dda -> [LM-out, LM-in]; lm_deep -> [LM-in]; ensembles -> [A, B].
enum class Variant { dda, lm_deep, two_lms_in, two_lms_out, two_lms_general };

Variant variant_from_name(const std::string& s);
std::string variant_name(Variant v);

struct Model {
  Variant variant = Variant::dda;
  FusionPoint point = FusionPoint::hidden;
  nmt::Model nmt;
  std::vector<lm::Model> lms;
  DeepFusionParams gate;
  uint64_t nmt_base_hash = 0;          // checkpoint hash of the NMT the tuning started from
  std::vector<uint64_t> lm_hashes;     // checkpoint hashes of the frozen LMs

  int fused_state_count() const;
  int fused_state_dim() const;
  // Validates dimensions/vocabularies, freezes the LMs, initializes F.
  void wire(Rng& rng);
  std::vector<Param*> trainable_params();
};

// Fine-tunes the NMT parameters and the gate; LM parameters stay frozen.
nn::TrainReport train_deep_fusion(Model& m, const nmt::ParallelIds& pairs,
                                  const nn::TrainConfig& tc, std::ostream* log = nullptr);

// One fused decoding step (value path).
struct StepResult {
  Vec log_dist;
  Vec attention;
  nmt::State nmt_state;
  std::vector<lm::State> lm_states;
};
StepResult fused_decode_step(const Model& m, const nmt::EncoderOutput& enc, int prev_token,
                             const nmt::State& nmt_prev, const std::vector<lm::State>& lm_prev);

}  // namespace deskmt::fusion
