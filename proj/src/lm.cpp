#include "deskmt/lm.hpp"

#include <cmath>
#include <ostream>

namespace deskmt::lm {

void Model::init(int vocab, uint64_t vhash, const Config& c, Rng& rng, double scale) {
  cfg = c;
  vocab_size = vocab;
  vocab_hash = vhash;
  embed = Param("lm.embed", c.embed_dim, vocab);
  embed.init_uniform(rng, scale);
  rnn.clear();
  for (int l = 0; l < c.layers; ++l) {
    int in_dim = (l == 0) ? c.embed_dim : c.hidden_dim;
    rnn.emplace_back("lm.rnn" + std::to_string(l), in_dim, c.hidden_dim);
    rnn.back().init(rng, scale);
  }
  w_out = Param("lm.w_out", vocab, c.hidden_dim);
  w_out.init_uniform(rng, scale);
  b_out = Param("lm.b_out", vocab, 1);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> ps{&embed};
  for (auto& l : rnn) l.collect(ps);
  ps.push_back(&w_out);
  ps.push_back(&b_out);
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

State init_state(const Model& m, int batch) {
  State s;
  for (int l = 0; l < m.cfg.layers; ++l) s.layers.push_back(nn::zero_state(m.cfg.hidden_dim, batch));
  return s;
}

Step lm_step(const Model& m, int prev_token, const State& prev) {
  if (prev_token < 0 || prev_token >= m.vocab_size) {
    throw DataError("lm_step: token id " + std::to_string(prev_token) +
                    " out of vocabulary of size " + std::to_string(m.vocab_size));
  }
  Step out;
  out.embedding = m.embed.value.col(prev_token);
  Mat top = nn::lstm_stack_step_plain(m.rnn, out.embedding, prev.layers, out.state.layers);
  Vec logits = m.w_out.value * top + m.b_out.value;
  out.hidden = top.col(0);
  out.log_dist = ag::log_softmax(logits);
  out.dist = out.log_dist.array().exp();
  return out;
}

StepVars step_graph(Graph& g, Model& m, const std::vector<int>& input_ids,
                    const std::vector<nn::LstmVars>& prev, const Mat* step_mask_row) {
  StepVars sv;
  sv.embedding = ag::embed_lookup(g.param(m.embed), input_ids);
  sv.states = nn::lstm_stack_step(g, m.rnn, sv.embedding, prev, step_mask_row);
  sv.top_h = sv.states.back().h;
  sv.logits = ag::add(ag::matmul(g.param(m.w_out), sv.top_h), g.param(m.b_out));
  return sv;
}

nn::TrainReport train_lm(Model& m, const std::vector<std::vector<int>>& corpus,
                         const nn::TrainConfig& tc, std::ostream* log) {
  if (corpus.empty()) throw DataError("train_lm: empty corpus");
  nn::TrainReport report;
  ag::OptimizerState opt = tc.opt;
  std::vector<Param*> params = m.params();
  Rng drop_rng(tc.seed ^ 0x5eedd20ull);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double nll_sum = 0.0, tok_sum = 0.0;
    for (const text::Batch& b : text::batch_iter(corpus, tc.batch_size, tc.seed + epoch)) {
      nn::TeacherBatch tb = nn::make_teacher_batch(b);
      Graph g;
      std::vector<nn::LstmVars> states;
      for (int l = 0; l < m.cfg.layers; ++l)
        states.push_back(nn::lstm_zero_vars(g, m.cfg.hidden_dim, b.batch_size()));
      Var total;
      for (size_t t = 0; t < tb.inputs.size(); ++t) {
        StepVars sv = step_graph(g, m, tb.inputs[t], states);
        if (tc.dropout > 0.0) {
          Mat keep(m.cfg.hidden_dim, b.batch_size());
          for (int j = 0; j < keep.cols(); ++j)
            for (int i = 0; i < keep.rows(); ++i)
              keep(i, j) = drop_rng.uniform() < tc.dropout ? 0.0 : 1.0 / (1.0 - tc.dropout);
          Var top = ag::mul(sv.top_h, g.constant(keep));
          sv.logits = ag::add(ag::matmul(g.param(m.w_out), top), g.param(m.b_out));
        }
        states = sv.states;
        Var step_loss =
            ag::softmax_xent_cols(sv.logits, tb.targets[t], tb.weights.row(t).transpose());
        total = total.valid() ? ag::add(total, step_loss) : step_loss;
      }
      Var loss = ag::scale(total, 1.0 / tb.token_count);
      ag::zero_grads(params);
      g.backward(loss);
      ag::optimizer_step(params, opt);
      nll_sum += total.value()(0, 0);
      tok_sum += tb.token_count;
    }
    report.epoch_losses.push_back(nll_sum / tok_sum);
    if (log) {
      (*log) << "epoch " << epoch << " lm-loss " << report.epoch_losses.back() << "\n";
    }
  }
  return report;
}

double score_sequence(const Model& m, const std::vector<int>& ids) {
  State st = init_state(m);
  double total = 0.0;
  int prev = text::Vocabulary::kBos;
  for (size_t t = 0; t <= ids.size(); ++t) {
    int target = (t < ids.size()) ? ids[t] : text::Vocabulary::kEos;
    if (target < 0 || target >= m.vocab_size) {
      throw DataError("score_sequence: token id " + std::to_string(target) + " out of range");
    }
    Step s = lm_step(m, prev, st);
    total += s.log_dist(target);
    st = s.state;
    prev = target;
  }
  return total;
}

double perplexity(const Model& m, const std::vector<std::vector<int>>& corpus) {
  double nll = 0.0, tokens = 0.0;
  for (const auto& ids : corpus) {
    nll -= score_sequence(m, ids);
    tokens += double(ids.size()) + 1.0;  // EOS counted
  }
  if (tokens == 0.0) throw DataError("perplexity: empty corpus");
  return std::exp(nll / tokens);
}

}  // namespace deskmt::lm
