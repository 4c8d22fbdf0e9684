#include "deskmt/nmt.hpp"

#include <cmath>
#include <ostream>

namespace deskmt::nmt {

void Model::init(int vocab, uint64_t vhash, const Config& c, Rng& rng, double scale) {
  cfg = c;
  vocab_size = vocab;
  vocab_hash = vhash;
  int H = c.hidden_dim, D = annotation_dim();

  src_embed = Param("nmt.src_embed", c.embed_dim, vocab);
  tgt_embed = Param("nmt.tgt_embed", c.embed_dim, vocab);
  src_embed.init_uniform(rng, scale);
  tgt_embed.init_uniform(rng, scale);

  enc.clear();
  enc_bwd.clear();
  dec.clear();
  for (int l = 0; l < c.layers; ++l) {
    int in_dim = (l == 0) ? c.embed_dim : H;
    enc.emplace_back("nmt.enc" + std::to_string(l), in_dim, H);
    enc.back().init(rng, scale);
    if (c.bidirectional) {
      enc_bwd.emplace_back("nmt.enc_bwd" + std::to_string(l), in_dim, H);
      enc_bwd.back().init(rng, scale);
    }
    int dec_in = (l == 0) ? dec_input_dim() : H;
    dec.emplace_back("nmt.dec" + std::to_string(l), dec_in, H);
    dec.back().init(rng, scale);
  }

  attn_w_s = Param("nmt.attn_w_s", H, H);
  attn_w_h = Param("nmt.attn_w_h", H, D);
  attn_b = Param("nmt.attn_b", H, 1);
  attn_v = Param("nmt.attn_v", 1, H);
  attn_w_s.init_uniform(rng, scale);
  attn_w_h.init_uniform(rng, scale);
  attn_v.init_uniform(rng, scale);

  w_comb = Param("nmt.w_comb", H, H + D);
  b_comb = Param("nmt.b_comb", H, 1);
  w_comb.init_uniform(rng, scale);

  w_out = Param("nmt.w_out", vocab, H);
  b_out = Param("nmt.b_out", vocab, 1);
  w_out.init_uniform(rng, scale);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> ps{&src_embed, &tgt_embed};
  for (auto& l : enc) l.collect(ps);
  for (auto& l : enc_bwd) l.collect(ps);
  for (auto& l : dec) l.collect(ps);
  for (Param* p : {&attn_w_s, &attn_w_h, &attn_b, &attn_v, &w_comb, &b_comb, &w_out, &b_out})
    ps.push_back(p);
  return ps;
}

std::vector<const Param*> Model::params() const {
  auto ps = const_cast<Model*>(this)->params();
  return {ps.begin(), ps.end()};
}

void Model::set_trainable(bool t) {
  for (Param* p : params()) p->trainable = t;
}

uint64_t Model::params_fingerprint() const { return ag::params_hash(params()); }

// ---------------------------------------------------------------------------
// value path

namespace {
void check_ids(const std::vector<int>& ids, int vocab, const char* where) {
  for (int t : ids) {
    if (t < 0 || t >= vocab) {
      throw DataError(std::string(where) + ": token id " + std::to_string(t) +
                      " out of vocabulary of size " + std::to_string(vocab));
    }
  }
}
}  // namespace

EncoderOutput encode(const Model& m, const std::vector<int>& src_ids) {
  if (src_ids.empty()) throw DataError("encode: empty source");
  check_ids(src_ids, m.vocab_size, "encode");
  int J = int(src_ids.size());
  int H = m.cfg.hidden_dim;

  EncoderOutput out;
  out.length = J;
  out.annotations = Mat::Zero(m.annotation_dim(), J);

  std::vector<nn::LstmState> st, nx;
  for (int l = 0; l < m.cfg.layers; ++l) st.push_back(nn::zero_state(H));
  for (int j = 0; j < J; ++j) {
    Mat x = m.src_embed.value.col(src_ids[j]);
    Mat top = nn::lstm_stack_step_plain(m.enc, x, st, nx);
    st = nx;
    out.annotations.col(j).topRows(H) = top;
  }
  out.dec_init = st;

  if (m.cfg.bidirectional) {
    std::vector<nn::LstmState> bst, bnx;
    for (int l = 0; l < m.cfg.layers; ++l) bst.push_back(nn::zero_state(H));
    for (int j = J - 1; j >= 0; --j) {
      Mat x = m.src_embed.value.col(src_ids[j]);
      Mat top = nn::lstm_stack_step_plain(m.enc_bwd, x, bst, bnx);
      bst = bnx;
      out.annotations.col(j).bottomRows(H) = top;
    }
  }
  return out;
}

State init_state(const Model& m, const EncoderOutput& enc) {
  State s;
  s.layers = enc.dec_init;
  s.feed = Vec::Zero(m.cfg.hidden_dim);
  return s;
}

DecoderStep decode_step(const Model& m, const EncoderOutput& enc, int prev_token,
                        const State& prev) {
  if (prev_token < 0 || prev_token >= m.vocab_size) {
    throw DataError("decode_step: token id " + std::to_string(prev_token) +
                    " out of vocabulary of size " + std::to_string(m.vocab_size));
  }
  DecoderStep out;
  out.embedding = m.tgt_embed.value.col(prev_token);
  Mat x = out.embedding;
  if (m.cfg.input_feeding) {
    Mat xf(m.dec_input_dim(), 1);
    xf.topRows(m.cfg.embed_dim) = x;
    xf.bottomRows(m.cfg.hidden_dim) = prev.feed;
    x = xf;
  }
  Mat top = nn::lstm_stack_step_plain(m.dec, x, prev.layers, out.state.layers);

  // additive attention
  int J = enc.length;
  Vec query = m.attn_w_s.value * top.col(0) + m.attn_b.value.col(0);
  Vec scores(J);
  for (int j = 0; j < J; ++j) {
    Vec e = (query + m.attn_w_h.value * enc.annotations.col(j)).array().tanh();
    scores(j) = (m.attn_v.value * e)(0, 0);
  }
  out.attention = ag::softmax(scores);
  Vec ctx = enc.annotations * out.attention;

  Vec cat(m.cfg.hidden_dim + m.annotation_dim());
  cat.topRows(m.cfg.hidden_dim) = top.col(0);
  cat.bottomRows(m.annotation_dim()) = ctx;
  out.hidden = (m.w_comb.value * cat + m.b_comb.value.col(0)).array().tanh();

  Vec logits = m.w_out.value * out.hidden + m.b_out.value;
  out.log_dist = ag::log_softmax(logits);
  out.dist = out.log_dist.array().exp();
  out.state.feed = out.hidden;
  return out;
}

std::vector<int> greedy_decode(const Model& m, const std::vector<int>& src_ids, int max_len) {
  EncoderOutput enc = encode(m, src_ids);
  State st = init_state(m, enc);
  std::vector<int> out;
  int prev = text::Vocabulary::kBos;
  for (int t = 0; t < max_len; ++t) {
    DecoderStep step = decode_step(m, enc, prev, st);
    int best = 0;
    for (int v = 1; v < m.vocab_size; ++v) {
      if (step.log_dist(v) > step.log_dist(best)) best = v;
    }
    if (best == text::Vocabulary::kEos) break;
    out.push_back(best);
    st = step.state;
    prev = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// graph path

EncVars encode_graph(Graph& g, Model& m, const text::Batch& src) {
  int J = src.max_len(), B = src.batch_size(), H = m.cfg.hidden_dim;
  EncVars ev;
  ev.src_mask = src.mask;

  std::vector<nn::LstmVars> st;
  for (int l = 0; l < m.cfg.layers; ++l) st.push_back(nn::lstm_zero_vars(g, H, B));
  std::vector<Var> fwd_tops(J);
  for (int j = 0; j < J; ++j) {
    Var x = ag::embed_lookup(g.param(m.src_embed), src.steps[j]);
    Mat mrow = src.mask.row(j);
    st = nn::lstm_stack_step(g, m.enc, x, st, &mrow);
    fwd_tops[j] = st.back().h;
  }
  ev.dec_init = st;

  if (m.cfg.bidirectional) {
    std::vector<nn::LstmVars> bst;
    for (int l = 0; l < m.cfg.layers; ++l) bst.push_back(nn::lstm_zero_vars(g, H, B));
    std::vector<Var> bwd_tops(J);
    for (int j = J - 1; j >= 0; --j) {
      Var x = ag::embed_lookup(g.param(m.src_embed), src.steps[j]);
      Mat mrow = src.mask.row(j);
      bst = nn::lstm_stack_step(g, m.enc_bwd, x, bst, &mrow);
      bwd_tops[j] = bst.back().h;
    }
    for (int j = 0; j < J; ++j)
      ev.annotations.push_back(ag::concat_rows({fwd_tops[j], bwd_tops[j]}));
  } else {
    ev.annotations = fwd_tops;
  }

  Var w_h = g.param(m.attn_w_h);
  for (int j = 0; j < J; ++j) ev.proj_annotations.push_back(ag::matmul(w_h, ev.annotations[j]));
  return ev;
}

DecStepVars decode_step_graph(Graph& g, Model& m, const EncVars& enc,
                              const std::vector<int>& input_ids,
                              const std::vector<nn::LstmVars>& prev, Var prev_feed) {
  DecStepVars out;
  out.embedding = ag::embed_lookup(g.param(m.tgt_embed), input_ids);
  Var x = out.embedding;
  if (m.cfg.input_feeding) {
    if (!prev_feed.valid()) throw ShapeError("decode_step_graph: input feeding needs prev_feed");
    x = ag::concat_rows({x, prev_feed});
  }
  out.states = nn::lstm_stack_step(g, m.dec, x, prev);
  Var top = out.states.back().h;

  Var query = ag::add(ag::matmul(g.param(m.attn_w_s), top), g.param(m.attn_b));
  Var v = g.param(m.attn_v);
  std::vector<Var> score_rows;
  for (const Var& proj : enc.proj_annotations) {
    score_rows.push_back(ag::matmul(v, ag::tanh(ag::add(query, proj))));
  }
  Var scores = ag::concat_rows(score_rows);  // J x B
  out.attn = ag::masked_softmax_cols(scores, enc.src_mask);

  Var ctx;
  for (size_t j = 0; j < enc.annotations.size(); ++j) {
    Var term = ag::mul_rowbroadcast(enc.annotations[j], ag::slice_rows(out.attn, int(j), 1));
    ctx = ctx.valid() ? ag::add(ctx, term) : term;
  }
  Var cat = ag::concat_rows({top, ctx});
  out.s_tilde = ag::tanh(ag::add(ag::matmul(g.param(m.w_comb), cat), g.param(m.b_comb)));
  out.logits = ag::add(ag::matmul(g.param(m.w_out), out.s_tilde), g.param(m.b_out));
  return out;
}

// ---------------------------------------------------------------------------
// training

namespace {

double run_epoch(Model& m, const ParallelIds& pairs, const nn::TrainConfig& tc, uint64_t shuffle,
                 ag::OptimizerState* opt, std::vector<Param*>* params) {
  double nll_sum = 0.0, tok_sum = 0.0;
  for (const text::PairBatch& pb : text::batch_iter_parallel(pairs, tc.batch_size, shuffle)) {
    Graph g;
    EncVars enc = encode_graph(g, m, pb.src);
    nn::TeacherBatch tb = nn::make_teacher_batch(pb.tgt);
    std::vector<nn::LstmVars> st = enc.dec_init;
    Var feed = m.cfg.input_feeding
                   ? g.constant(Mat::Zero(m.cfg.hidden_dim, pb.tgt.batch_size()))
                   : Var();
    Var total;
    for (size_t t = 0; t < tb.inputs.size(); ++t) {
      DecStepVars dv = decode_step_graph(g, m, enc, tb.inputs[t], st, feed);
      st = dv.states;
      feed = dv.s_tilde;
      Var step_loss =
          ag::softmax_xent_cols(dv.logits, tb.targets[t], tb.weights.row(t).transpose());
      total = total.valid() ? ag::add(total, step_loss) : step_loss;
    }
    if (opt) {
      Var loss = ag::scale(total, 1.0 / tb.token_count);
      ag::zero_grads(*params);
      g.backward(loss);
      ag::optimizer_step(*params, *opt);
    }
    nll_sum += total.value()(0, 0);
    tok_sum += tb.token_count;
  }
  return nll_sum / tok_sum;
}

}  // namespace

nn::TrainReport train_nmt(Model& m, const ParallelIds& pairs, const nn::TrainConfig& tc,
                          std::ostream* log) {
  if (pairs.empty()) throw DataError("train_nmt: empty corpus");
  nn::TrainReport report;
  ag::OptimizerState opt = tc.opt;
  std::vector<Param*> params = m.params();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double loss = run_epoch(m, pairs, tc, tc.seed + epoch, &opt, &params);
    report.epoch_losses.push_back(loss);
    if (log) (*log) << "epoch " << epoch << " nmt-loss " << loss << "\n";
  }
  return report;
}

nn::TrainReport fine_tune(Model& m, const ParallelIds& pairs, const nn::TrainConfig& tc,
                          std::ostream* log) {
  if (pairs.empty()) throw DataError("fine_tune: empty corpus");
  return train_nmt(m, pairs, tc, log);
}

double corpus_nll(const Model& m, const ParallelIds& pairs) {
  double nll = 0.0, tokens = 0.0;
  for (const auto& [src, tgt] : pairs) {
    EncoderOutput enc = encode(m, src);
    State st = init_state(m, enc);
    int prev = text::Vocabulary::kBos;
    for (size_t t = 0; t <= tgt.size(); ++t) {
      int target = (t < tgt.size()) ? tgt[t] : text::Vocabulary::kEos;
      DecoderStep step = decode_step(m, enc, prev, st);
      nll -= step.log_dist(target);
      st = step.state;
      prev = target;
      tokens += 1.0;
    }
  }
  return nll / tokens;
}

}  // namespace deskmt::nmt
