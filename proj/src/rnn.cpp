#include "deskmt/rnn.hpp"

#include <cmath>

namespace deskmt::nn {

LstmState zero_state(int hidden_dim, int batch) {
  return LstmState{Mat::Zero(hidden_dim, batch), Mat::Zero(hidden_dim, batch)};
}

namespace {
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

LstmState lstm_step_plain(const LstmParams& p, const Mat& x, const LstmState& prev) {
  int H = p.hidden_dim();
  Mat z = (p.w_x.value * x + p.w_h.value * prev.h).colwise() + Vec(p.b.value.col(0));
  Mat i = z.topRows(H).unaryExpr([](double v) { return stable_sigmoid(v); });
  Mat f = z.middleRows(H, H).unaryExpr([](double v) { return stable_sigmoid(v); });
  Mat cand = z.middleRows(2 * H, H).array().tanh();
  Mat o = z.middleRows(3 * H, H).unaryExpr([](double v) { return stable_sigmoid(v); });
  LstmState s;
  s.c = f.cwiseProduct(prev.c) + i.cwiseProduct(cand);
  s.h = o.cwiseProduct(s.c.array().tanh().matrix());
  return s;
}

Mat lstm_stack_step_plain(const std::vector<LstmParams>& layers, const Mat& x,
                          const std::vector<LstmState>& prev, std::vector<LstmState>& next) {
  next.clear();
  Mat inp = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    next.push_back(lstm_step_plain(layers[l], inp, prev[l]));
    inp = next.back().h;
  }
  return inp;
}

LstmVars lstm_zero_vars(Graph& g, int hidden_dim, int batch) {
  return LstmVars{g.constant(Mat::Zero(hidden_dim, batch)),
                  g.constant(Mat::Zero(hidden_dim, batch))};
}

LstmVars lstm_step(Graph& g, LstmParams& p, Var x, const LstmVars& prev) {
  int H = p.hidden_dim();
  Var z = ag::add(ag::add(ag::matmul(g.param(p.w_x), x), ag::matmul(g.param(p.w_h), prev.h)),
                  g.param(p.b));
  Var i = ag::sigmoid(ag::slice_rows(z, 0, H));
  Var f = ag::sigmoid(ag::slice_rows(z, H, H));
  Var cand = ag::tanh(ag::slice_rows(z, 2 * H, H));
  Var o = ag::sigmoid(ag::slice_rows(z, 3 * H, H));
  Var c = ag::add(ag::mul(f, prev.c), ag::mul(i, cand));
  Var h = ag::mul(o, ag::tanh(c));
  return LstmVars{h, c};
}

LstmVars lstm_step_masked(Graph& g, LstmParams& p, Var x, const LstmVars& prev,
                          const Mat& step_mask_row) {
  LstmVars next = lstm_step(g, p, x, prev);
  Var keep = g.constant(step_mask_row);
  Var drop = g.constant(Mat::Ones(1, step_mask_row.cols()) - step_mask_row);
  Var h = ag::add(ag::mul_rowbroadcast(next.h, keep), ag::mul_rowbroadcast(prev.h, drop));
  Var c = ag::add(ag::mul_rowbroadcast(next.c, keep), ag::mul_rowbroadcast(prev.c, drop));
  return LstmVars{h, c};
}

std::vector<LstmVars> lstm_stack_step(Graph& g, std::vector<LstmParams>& layers, Var x,
                                      const std::vector<LstmVars>& prev,
                                      const Mat* step_mask_row) {
  std::vector<LstmVars> next;
  Var inp = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    LstmVars s = step_mask_row ? lstm_step_masked(g, layers[l], inp, prev[l], *step_mask_row)
                               : lstm_step(g, layers[l], inp, prev[l]);
    next.push_back(s);
    inp = s.h;
  }
  return next;
}

TeacherBatch make_teacher_batch(const text::Batch& b) {
  int T = b.max_len(), B = b.batch_size();
  TeacherBatch tb;
  tb.inputs.assign(T + 1, std::vector<int>(B, text::Vocabulary::kPad));
  tb.targets.assign(T + 1, std::vector<int>(B, text::Vocabulary::kPad));
  tb.weights = Mat::Zero(T + 1, B);
  for (int j = 0; j < B; ++j) {
    int len = b.lengths[j];
    for (int t = 0; t <= len; ++t) {
      tb.inputs[t][j] = (t == 0) ? text::Vocabulary::kBos : b.steps[t - 1][j];
      tb.targets[t][j] = (t < len) ? b.steps[t][j] : text::Vocabulary::kEos;
      tb.weights(t, j) = 1.0;
      tb.token_count += 1.0;
    }
  }
  return tb;
}

}  // namespace deskmt::nn
