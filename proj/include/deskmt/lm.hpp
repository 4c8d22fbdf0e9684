#pragma once

#include "deskmt/rnn.hpp"

// Recurrent (LSTM) language model: training, per-step distributions,
// sequence scoring and perplexity.

namespace deskmt::lm {

using ag::Graph;
using ag::Param;
using ag::Var;

struct Config {
  int embed_dim = 64;
  int hidden_dim = 64;
  int layers = 2;
  double dropout = 0.0;
};

struct Model {
  Config cfg;
  int vocab_size = 0;
  uint64_t vocab_hash = 0;
  Param embed;  // E x V
  std::vector<nn::LstmParams> rnn;
  Param w_out;  // V x H
  Param b_out;  // V x 1

  void init(int vocab, uint64_t vhash, const Config& c, Rng& rng, double scale = 0.1);
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void set_trainable(bool t);
  uint64_t params_fingerprint() const;
};

// Plain-value decoding state.
struct State {
  std::vector<nn::LstmState> layers;
};

struct Step {
  Vec dist;      // next-token distribution, |V| simplex
  Vec log_dist;  // log of the same
  Vec hidden;    // top-layer hidden state s^LM
  Vec embedding; // input embedding used this step (for embedding-level fusion)
  State state;
};

State init_state(const Model& m, int batch = 1);
// First step uses BOS and a zero state. Throws DataError on a bad token id.
Step lm_step(const Model& m, int prev_token, const State& prev);

// Graph-side step used by training and deep fusion.
struct StepVars {
  std::vector<nn::LstmVars> states;
  Var embedding;
  Var top_h;
  Var logits;
};
StepVars step_graph(Graph& g, Model& m, const std::vector<int>& input_ids,
                    const std::vector<nn::LstmVars>& prev, const Mat* step_mask_row = nullptr);

// Teacher-forced NLL minimization over BOS-prefixed, EOS-suffixed sequences.
nn::TrainReport train_lm(Model& m, const std::vector<std::vector<int>>& corpus,
                         const nn::TrainConfig& tc, std::ostream* log = nullptr);

// Total log-probability of the sequence including the EOS step.
double score_sequence(const Model& m, const std::vector<int>& ids);

// exp(mean per-token NLL) over the corpus, EOS counted.
double perplexity(const Model& m, const std::vector<std::vector<int>>& corpus);

}  // namespace deskmt::lm
