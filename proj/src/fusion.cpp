#include "deskmt/fusion.hpp"

#include <cmath>
#include <ostream>

namespace deskmt::fusion {

namespace {
constexpr double kProbFloor = 1e-12;

Vec floored_log(const Vec& p) {
  return p.unaryExpr([](double x) { return std::log(std::max(x, kProbFloor)); });
}

bool bitwise_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return false;
  }
  return true;
}

void check_finite_dist(const Vec& v, const char* who) {
  if (!v.allFinite()) throw NumericError(std::string("shallow fusion: non-finite ") + who);
}
}  // namespace

Vec dda_shallow_combine(const Vec& p_nmt, const Vec& p_lm_in, const Vec& p_lm_out, double beta) {
  if (p_nmt.size() != p_lm_in.size() || p_nmt.size() != p_lm_out.size()) {
    throw ShapeError("dda_shallow_combine: distribution sizes differ");
  }
  if (beta == 0.0 || bitwise_equal(p_lm_in, p_lm_out)) return p_nmt;
  check_finite_dist(p_nmt, "p_nmt");
  check_finite_dist(p_lm_in, "p_lm_in");
  check_finite_dist(p_lm_out, "p_lm_out");
  Vec l = floored_log(p_nmt) + beta * (floored_log(p_lm_in) - floored_log(p_lm_out));
  Vec out = ag::log_softmax(l).array().exp();
  check_finite_dist(out, "combined distribution");
  return out;
}

Vec lm_shallow_combine(const Vec& p_nmt, const Vec& p_lm_in, double beta) {
  if (p_nmt.size() != p_lm_in.size()) {
    throw ShapeError("lm_shallow_combine: distribution sizes differ");
  }
  if (beta == 0.0) return p_nmt;
  check_finite_dist(p_nmt, "p_nmt");
  check_finite_dist(p_lm_in, "p_lm_in");
  Vec l = floored_log(p_nmt) + beta * floored_log(p_lm_in);
  Vec out = ag::log_softmax(l).array().exp();
  check_finite_dist(out, "combined distribution");
  return out;
}

Vec dda_shallow_combine_log(const Vec& lp_nmt, const Vec& lp_lm_in, const Vec& lp_lm_out,
                            double beta) {
  if (beta == 0.0 || bitwise_equal(lp_lm_in, lp_lm_out)) return lp_nmt;
  Vec l = lp_nmt + beta * (lp_lm_in - lp_lm_out);
  return ag::log_softmax(l);
}

Vec lm_shallow_combine_log(const Vec& lp_nmt, const Vec& lp_lm_in, double beta) {
  if (beta == 0.0) return lp_nmt;
  Vec l = lp_nmt + beta * lp_lm_in;
  return ag::log_softmax(l);
}

// ---------------------------------------------------------------------------

FusionPoint fusion_point_from_name(const std::string& s) {
  if (s == "hidden-states" || s == "hidden") return FusionPoint::hidden;
  if (s == "word-embeddings" || s == "embeddings") return FusionPoint::embeddings;
  if (s == "both") return FusionPoint::both;
  if (s == "output-probs" || s == "probabilities") return FusionPoint::probabilities;
  throw ConfigError("unknown fusion point '" + s + "'");
}

std::string fusion_point_name(FusionPoint p) {
  switch (p) {
    case FusionPoint::hidden: return "hidden-states";
    case FusionPoint::embeddings: return "word-embeddings";
    case FusionPoint::both: return "both";
    case FusionPoint::probabilities: return "output-probs";
  }
  return "hidden-states";
}

Variant variant_from_name(const std::string& s) {
  if (s == "dda") return Variant::dda;
  if (s == "lm-deep") return Variant::lm_deep;
  if (s == "ens-two-in") return Variant::two_lms_in;
  if (s == "ens-two-out") return Variant::two_lms_out;
  if (s == "ens-general") return Variant::two_lms_general;
  throw ConfigError("unknown fusion variant '" + s + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::dda: return "dda";
    case Variant::lm_deep: return "lm-deep";
    case Variant::two_lms_in: return "ens-two-in";
    case Variant::two_lms_out: return "ens-two-out";
    case Variant::two_lms_general: return "ens-general";
  }
  return "dda";
}

void DeepFusionParams::init(int m, int d, Rng& rng, double scale) {
  components = m;
  state_dim = d;
  w = Param("fusion.gate_w", m * d, m * d);
  b = Param("fusion.gate_b", m * d, 1);
  w.init_uniform(rng, scale);
}

FusedStep deep_fuse_step(const std::vector<Vec>& states, const DeepFusionParams& p,
                         const Mat* w_out, const Vec* b_out) {
  if (int(states.size()) != p.components) {
    throw ShapeError("deep_fuse_step: expected " + std::to_string(p.components) + " states, got " +
                     std::to_string(states.size()));
  }
  int d = p.state_dim;
  Vec cat(p.components * d);
  for (int i = 0; i < p.components; ++i) {
    if (states[i].size() != d) {
      throw ShapeError("deep_fuse_step: state " + std::to_string(i) + " has dim " +
                       std::to_string(states[i].size()) + ", expected " + std::to_string(d));
    }
    cat.segment(i * d, d) = states[i];
  }
  Vec pre = p.w.value * cat + p.b.value.col(0);
  if (p.sigmoid_gate) {
    pre = pre.unaryExpr([](double x) {
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
  }
  FusedStep out;
  out.s_da = Vec::Zero(d);
  for (int i = 0; i < p.components; ++i) {
    Vec gate = pre.segment(i * d, d);
    out.s_da += gate.cwiseProduct(states[i]);
    out.gates.push_back(std::move(gate));
  }
  if (w_out) {
    Vec logits = (*w_out) * out.s_da + (b_out ? *b_out : Vec::Zero(w_out->rows()));
    out.log_dist = ag::log_softmax(logits);
    out.dist = out.log_dist.array().exp();
  } else {
    out.log_dist = ag::log_softmax(out.s_da);
    out.dist = out.log_dist.array().exp();
  }
  return out;
}

FusedStep deep_fuse_step(const Vec& s_lm_out, const Vec& s_lm_in, const Vec& s_nmt,
                         const DeepFusionParams& p, const Mat& w_out, const Vec& b_out) {
  return deep_fuse_step({s_lm_out, s_lm_in, s_nmt}, p, &w_out, &b_out);
}

FusedVars fuse_states_graph(Graph& g, const std::vector<Var>& states, DeepFusionParams& p) {
  if (int(states.size()) != p.components) {
    throw ShapeError("fuse_states_graph: expected " + std::to_string(p.components) + " states");
  }
  int d = p.state_dim;
  Var cat = ag::concat_rows(states);
  Var pre = ag::add(ag::matmul(g.param(p.w), cat), g.param(p.b));
  if (p.sigmoid_gate) pre = ag::sigmoid(pre);
  FusedVars out;
  for (int i = 0; i < p.components; ++i) {
    Var gate = ag::slice_rows(pre, i * d, d);
    Var term = ag::mul(gate, states[i]);
    out.s_da = out.s_da.valid() ? ag::add(out.s_da, term) : term;
    out.gates.push_back(gate);
  }
  return out;
}

// ---------------------------------------------------------------------------
// deep-fusion model

int Model::fused_state_count() const {
  int base = int(lms.size()) + 1;
  return point == FusionPoint::both ? 2 * base : base;
}

int Model::fused_state_dim() const {
  switch (point) {
    case FusionPoint::hidden: return nmt.cfg.hidden_dim;
    case FusionPoint::embeddings: return nmt.cfg.embed_dim;
    case FusionPoint::both: return nmt.cfg.hidden_dim;
    case FusionPoint::probabilities: return nmt.vocab_size;
  }
  return nmt.cfg.hidden_dim;
}

void Model::wire(Rng& rng) {
  if (lms.empty()) throw DataError("fusion: at least one language model required");
  int expected = (variant == Variant::lm_deep) ? 1 : 2;
  if (int(lms.size()) != expected) {
    throw DataError("fusion variant '" + variant_name(variant) + "' needs " +
                    std::to_string(expected) + " language models, got " +
                    std::to_string(lms.size()));
  }
  for (const lm::Model& l : lms) {
    if (l.vocab_hash != nmt.vocab_hash) {
      throw DataError("fusion: language model and translation model vocabularies differ");
    }
    if (l.cfg.hidden_dim != nmt.cfg.hidden_dim) {
      throw DataError("fusion: hidden size mismatch (LM " + std::to_string(l.cfg.hidden_dim) +
                      " vs NMT " + std::to_string(nmt.cfg.hidden_dim) + ")");
    }
    if ((point == FusionPoint::embeddings || point == FusionPoint::both) &&
        l.cfg.embed_dim != nmt.cfg.embed_dim) {
      throw DataError("fusion: embedding size mismatch at the word-embedding fusion point");
    }
  }
  if ((point == FusionPoint::embeddings || point == FusionPoint::both) &&
      nmt.cfg.embed_dim != nmt.cfg.hidden_dim) {
    // The fused state feeds the NMT output layer, so E must equal H here.
    throw DataError("fusion: word-embedding fusion requires embed_dim == hidden_dim");
  }
  for (lm::Model& l : lms) l.set_trainable(false);
  gate.init(fused_state_count(), fused_state_dim(), rng);
}

std::vector<Param*> Model::trainable_params() {
  std::vector<Param*> ps = nmt.params();
  gate.collect(ps);
  return ps;
}

namespace {

// Assembles the per-step state list in wiring order (LMs first, NMT last).
std::vector<Var> fused_state_vars(const Model& m, const std::vector<lm::StepVars>& lm_steps,
                                  const nmt::DecStepVars& nmt_step, Graph& g) {
  (void)g;
  std::vector<Var> states;
  auto push_hidden = [&]() {
    for (const auto& s : lm_steps) states.push_back(s.top_h);
    states.push_back(nmt_step.s_tilde);
  };
  auto push_embed = [&]() {
    for (const auto& s : lm_steps) states.push_back(s.embedding);
    states.push_back(nmt_step.embedding);
  };
  switch (m.point) {
    case FusionPoint::hidden: push_hidden(); break;
    case FusionPoint::embeddings: push_embed(); break;
    case FusionPoint::both:
      push_hidden();
      push_embed();
      break;
    case FusionPoint::probabilities:
      for (const auto& s : lm_steps) states.push_back(ag::softmax_cols(s.logits));
      states.push_back(ag::softmax_cols(nmt_step.logits));
      break;
  }
  return states;
}

}  // namespace

nn::TrainReport train_deep_fusion(Model& m, const nmt::ParallelIds& pairs,
                                  const nn::TrainConfig& tc, std::ostream* log) {
  if (pairs.empty()) throw DataError("train_deep_fusion: empty corpus");
  for (lm::Model& l : m.lms) l.set_trainable(false);  // freeze contract
  std::vector<Param*> params = m.trainable_params();
  ag::OptimizerState opt = tc.opt;
  nn::TrainReport report;
  bool project = m.point != FusionPoint::probabilities;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double nll_sum = 0.0, tok_sum = 0.0;
    for (const text::PairBatch& pb : text::batch_iter_parallel(pairs, tc.batch_size, tc.seed + epoch)) {
      Graph g;
      nmt::EncVars enc = nmt::encode_graph(g, m.nmt, pb.src);
      nn::TeacherBatch tb = nn::make_teacher_batch(pb.tgt);
      int B = pb.tgt.batch_size();

      std::vector<nn::LstmVars> nmt_st = enc.dec_init;
      Var feed = m.nmt.cfg.input_feeding ? g.constant(Mat::Zero(m.nmt.cfg.hidden_dim, B)) : Var();
      std::vector<std::vector<nn::LstmVars>> lm_st(m.lms.size());
      for (size_t i = 0; i < m.lms.size(); ++i) {
        for (int l = 0; l < m.lms[i].cfg.layers; ++l)
          lm_st[i].push_back(nn::lstm_zero_vars(g, m.lms[i].cfg.hidden_dim, B));
      }

      Var total;
      for (size_t t = 0; t < tb.inputs.size(); ++t) {
        nmt::DecStepVars dv = nmt::decode_step_graph(g, m.nmt, enc, tb.inputs[t], nmt_st, feed);
        nmt_st = dv.states;
        feed = dv.s_tilde;
        std::vector<lm::StepVars> lv;
        for (size_t i = 0; i < m.lms.size(); ++i) {
          lv.push_back(lm::step_graph(g, m.lms[i], tb.inputs[t], lm_st[i]));
          lm_st[i] = lv.back().states;
        }
        FusedVars fv = fuse_states_graph(g, fused_state_vars(m, lv, dv, g), m.gate);
        Var logits = project
                         ? ag::add(ag::matmul(g.param(m.nmt.w_out), fv.s_da), g.param(m.nmt.b_out))
                         : fv.s_da;
        Var step_loss =
            ag::softmax_xent_cols(logits, tb.targets[t], tb.weights.row(t).transpose());
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
    if (log) (*log) << "epoch " << epoch << " fusion-loss " << report.epoch_losses.back() << "\n";
  }
  return report;
}

StepResult fused_decode_step(const Model& m, const nmt::EncoderOutput& enc, int prev_token,
                             const nmt::State& nmt_prev, const std::vector<lm::State>& lm_prev) {
  nmt::DecoderStep ns = nmt::decode_step(m.nmt, enc, prev_token, nmt_prev);
  std::vector<lm::Step> ls;
  for (size_t i = 0; i < m.lms.size(); ++i) ls.push_back(lm::lm_step(m.lms[i], prev_token, lm_prev[i]));

  std::vector<Vec> states;
  auto push_hidden = [&]() {
    for (const auto& s : ls) states.push_back(s.hidden);
    states.push_back(ns.hidden);
  };
  auto push_embed = [&]() {
    for (const auto& s : ls) states.push_back(s.embedding);
    states.push_back(ns.embedding);
  };
  switch (m.point) {
    case FusionPoint::hidden: push_hidden(); break;
    case FusionPoint::embeddings: push_embed(); break;
    case FusionPoint::both:
      push_hidden();
      push_embed();
      break;
    case FusionPoint::probabilities:
      for (const auto& s : ls) states.push_back(s.dist);
      states.push_back(ns.dist);
      break;
  }

  FusedStep fs;
  if (m.point == FusionPoint::probabilities) {
    fs = deep_fuse_step(states, m.gate, nullptr, nullptr);
  } else {
    Vec b = m.nmt.b_out.value.col(0);
    fs = deep_fuse_step(states, m.gate, &m.nmt.w_out.value, &b);
  }

  StepResult out;
  out.log_dist = fs.log_dist;
  out.attention = ns.attention;
  out.nmt_state = ns.state;
  for (auto& s : ls) out.lm_states.push_back(s.state);
  return out;
}

}  // namespace deskmt::fusion
