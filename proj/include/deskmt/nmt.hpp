#pragma once

#include "deskmt/rnn.hpp"

// Attentional LSTM encoder-decoder. Additive (MLP) attention scores over the
// encoder annotations; the post-attention state s~ feeds the output layer and
// is what deep fusion consumes.

namespace deskmt::nmt {

using ag::Graph;
using ag::Param;
using ag::Var;

struct Config {
  int embed_dim = 64;
  int hidden_dim = 64;
  int layers = 2;
  bool bidirectional = false;
  bool input_feeding = false;
};

struct Model {
  Config cfg;
  int vocab_size = 0;
  uint64_t vocab_hash = 0;
  Param src_embed, tgt_embed;  // E x V
  std::vector<nn::LstmParams> enc, enc_bwd, dec;
  Param attn_w_s;  // H x H   (query projection)
  Param attn_w_h;  // H x D   (annotation projection)
  Param attn_b;    // H x 1
  Param attn_v;    // 1 x H
  Param w_comb;    // H x (H + D)  combines [decoder h; context] into s~
  Param b_comb;    // H x 1
  Param w_out;     // V x H
  Param b_out;     // V x 1

  int annotation_dim() const { return cfg.bidirectional ? 2 * cfg.hidden_dim : cfg.hidden_dim; }
  int dec_input_dim() const {
    return cfg.embed_dim + (cfg.input_feeding ? cfg.hidden_dim : 0);
  }

  void init(int vocab, uint64_t vhash, const Config& c, Rng& rng, double scale = 0.1);
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void set_trainable(bool t);
  uint64_t params_fingerprint() const;
};

// --- per-sentence (value) path -------------------------------------------

struct EncoderOutput {
  Mat annotations;  // D x J, one column per unpadded source position
  std::vector<nn::LstmState> dec_init;
  int length = 0;
};

EncoderOutput encode(const Model& m, const std::vector<int>& src_ids);

struct State {
  std::vector<nn::LstmState> layers;
  Vec feed;  // previous s~, used when input feeding is enabled
};

State init_state(const Model& m, const EncoderOutput& enc);

struct DecoderStep {
  Vec dist;
  Vec log_dist;
  Vec hidden;     // s~ (post-attention), exposed for fusion
  Vec attention;  // weights over source positions, sums to 1
  Vec embedding;  // target embedding consumed this step
  State state;
};

DecoderStep decode_step(const Model& m, const EncoderOutput& enc, int prev_token,
                        const State& prev);

std::vector<int> greedy_decode(const Model& m, const std::vector<int>& src_ids, int max_len);

// --- batched (graph) path --------------------------------------------------

struct EncVars {
  std::vector<Var> annotations;  // per source position, D x B
  std::vector<Var> proj_annotations;  // attn_w_h * annotation, precomputed
  std::vector<nn::LstmVars> dec_init;
  Mat src_mask;  // J x B
};

EncVars encode_graph(Graph& g, Model& m, const text::Batch& src);

struct DecStepVars {
  std::vector<nn::LstmVars> states;
  Var s_tilde;
  Var attn;  // J x B, masked positions exactly 0
  Var logits;
  Var embedding;
};

// prev_feed must be a valid Var when input feeding is on (zeros at t=0).
DecStepVars decode_step_graph(Graph& g, Model& m, const EncVars& enc,
                              const std::vector<int>& input_ids,
                              const std::vector<nn::LstmVars>& prev, Var prev_feed = {});

using ParallelIds = std::vector<std::pair<std::vector<int>, std::vector<int>>>;

nn::TrainReport train_nmt(Model& m, const ParallelIds& pairs, const nn::TrainConfig& tc,
                          std::ostream* log = nullptr);

// Continues training from the model's current parameters.
nn::TrainReport fine_tune(Model& m, const ParallelIds& pairs, const nn::TrainConfig& tc,
                          std::ostream* log = nullptr);

// Teacher-forced mean per-token NLL (used for dev-set tracking).
double corpus_nll(const Model& m, const ParallelIds& pairs);

}  // namespace deskmt::nmt
