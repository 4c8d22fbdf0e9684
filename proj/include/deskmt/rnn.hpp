#pragma once

#include "deskmt/autograd.hpp"
#include "deskmt/optim.hpp"
#include "deskmt/text.hpp"

// LSTM building blocks shared by the language model and the translation model.

namespace deskmt::nn {

using ag::Graph;
using ag::Param;
using ag::Var;

// One LSTM layer; gates packed as rows [input; forget; candidate; output].
struct LstmParams {
  Param w_x;  // 4H x input_dim
  Param w_h;  // 4H x H
  Param b;    // 4H x 1

  LstmParams() = default;
  LstmParams(const std::string& prefix, int input_dim, int hidden_dim)
      : w_x(prefix + ".w_x", 4 * hidden_dim, input_dim),
        w_h(prefix + ".w_h", 4 * hidden_dim, hidden_dim),
        b(prefix + ".b", 4 * hidden_dim, 1) {}

  int hidden_dim() const { return int(w_h.value.cols()); }
  void init(Rng& rng, double scale) {
    w_x.init_uniform(rng, scale);
    w_h.init_uniform(rng, scale);
    b.value.setZero();
  }
  void collect(std::vector<Param*>& out) {
    out.push_back(&w_x);
    out.push_back(&w_h);
    out.push_back(&b);
  }
};

// Plain-value recurrent state (between decoding steps).
struct LstmState {
  Mat h, c;  // H x B
};

LstmState zero_state(int hidden_dim, int batch = 1);

// Value-only step for decoding paths (same arithmetic as the graph step).
LstmState lstm_step_plain(const LstmParams& p, const Mat& x, const LstmState& prev);
Mat lstm_stack_step_plain(const std::vector<LstmParams>& layers, const Mat& x,
                          const std::vector<LstmState>& prev, std::vector<LstmState>& next);

// Graph-side state handles.
struct LstmVars {
  Var h, c;
};

LstmVars lstm_zero_vars(Graph& g, int hidden_dim, int batch);
LstmVars lstm_step(Graph& g, LstmParams& p, Var x, const LstmVars& prev);

// Masked step: columns with mask 0 keep the previous state (padding-safe).
LstmVars lstm_step_masked(Graph& g, LstmParams& p, Var x, const LstmVars& prev,
                          const Mat& step_mask_row);

// Runs a stack of layers one step; returns per-layer states (top is back()).
std::vector<LstmVars> lstm_stack_step(Graph& g, std::vector<LstmParams>& layers, Var x,
                                      const std::vector<LstmVars>& prev,
                                      const Mat* step_mask_row = nullptr);

// Teacher-forcing view of a padded batch: step t conditions on gold token
// t-1 (BOS at t=0) and predicts token t (EOS one past each sequence end).
struct TeacherBatch {
  std::vector<std::vector<int>> inputs;   // [T+1][B]
  std::vector<std::vector<int>> targets;  // [T+1][B]
  Mat weights;                            // (T+1) x B, 1.0 where a prediction is scored
  double token_count = 0;
};

TeacherBatch make_teacher_batch(const text::Batch& b);

// Common training knobs for all gradient-trained models.
struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  uint64_t seed = 1;
  ag::OptimizerState opt = ag::OptimizerState::adam_state();
  double dropout = 0.0;
  bool verbose = false;
};

struct TrainReport {
  std::vector<double> epoch_losses;  // mean per-token NLL
  double final_loss() const { return epoch_losses.empty() ? 0.0 : epoch_losses.back(); }
};

}  // namespace deskmt::nn
