#include "deskmt/cli.hpp"

#include <cmath>
#include <functional>

// Finite-difference verification of every autograd primitive and of the full
// LM / NMT / deep-fusion training paths on tiny dimensions.

namespace deskmt::cli {

namespace {

using ag::Graph;
using ag::Param;
using ag::Var;

Mat random_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Checks d loss / d x for loss = sum(build(x) .* C) with a random C.
double primitive_err(Rng& rng, int rows, int cols,
                     const std::function<Var(Graph&, Var)>& build) {
  Mat x0 = random_mat(rng, rows, cols);
  Mat weight;
  {
    Param px("x", rows, cols);
    px.value = x0;
    Graph g;
    Var y = build(g, g.param(px));
    weight = random_mat(rng, y.rows(), y.cols());
  }
  auto f = [&](const Mat& x, Mat* grad) {
    Param px("x", x.rows(), x.cols());
    px.value = x;
    Graph g;
    Var y = build(g, g.param(px));
    Var loss = (y.rows() == 1 && y.cols() == 1) ? y : ag::sum_all(ag::mul(y, g.constant(weight)));
    if (grad) {
      g.backward(loss);
      *grad = px.grad;
    }
    return loss.value()(0, 0);
  };
  return ag::grad_check(f, x0, 1e-5);
}

// Central differences over every parameter of a model-level loss.
// run(true) must rebuild the graph, backward into param grads, and return the
// loss; run(false) returns the loss only.
double params_fd_err(const std::vector<Param*>& params, const std::function<double(bool)>& run,
                     double eps = 1e-5) {
  ag::zero_grads(params);
  run(true);
  std::vector<Mat> analytic;
  for (Param* p : params) analytic.push_back(p->grad);
  double worst = 0.0;
  for (size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (int j = 0; j < p.value.cols(); ++j) {
      for (int i = 0; i < p.value.rows(); ++i) {
        double v = p.value(i, j);
        p.value(i, j) = v + eps;
        double lp = run(false);
        p.value(i, j) = v - eps;
        double lm = run(false);
        p.value(i, j) = v;
        double numeric = (lp - lm) / (2.0 * eps);
        double a = analytic[k](i, j);
        double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

std::vector<int> random_ids(Rng& rng, int n, int vocab) {
  std::vector<int> ids(n);
  for (int& i : ids) i = rng.uniform_int(vocab);
  return ids;
}

double lm_model_err(uint64_t seed) {
  Rng rng(seed);
  lm::Config cfg;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 6;
  cfg.layers = 2;
  lm::Model m;
  m.init(10, 0, cfg, rng);
  std::vector<std::vector<int>> corpus = {random_ids(rng, 4, 10), random_ids(rng, 3, 10)};
  std::vector<Param*> params = m.params();

  auto run = [&](bool backward) {
    text::Batch b = text::batch_iter(corpus, 2, 7)[0];
    nn::TeacherBatch tb = nn::make_teacher_batch(b);
    Graph g;
    std::vector<nn::LstmVars> st;
    for (int l = 0; l < cfg.layers; ++l) st.push_back(nn::lstm_zero_vars(g, cfg.hidden_dim, 2));
    Var total;
    for (size_t t = 0; t < tb.inputs.size(); ++t) {
      lm::StepVars sv = lm::step_graph(g, m, tb.inputs[t], st);
      st = sv.states;
      Var l = ag::softmax_xent_cols(sv.logits, tb.targets[t], tb.weights.row(t).transpose());
      total = total.valid() ? ag::add(total, l) : l;
    }
    if (backward) g.backward(total);
    return total.value()(0, 0);
  };
  return params_fd_err(params, run);
}

double nmt_model_err(uint64_t seed, bool bidirectional) {
  Rng rng(seed);
  nmt::Config cfg;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 5;
  cfg.layers = 1;
  cfg.bidirectional = bidirectional;
  nmt::Model m;
  m.init(9, 0, cfg, rng);
  nmt::ParallelIds pairs = {{random_ids(rng, 3, 9), random_ids(rng, 3, 9)},
                            {random_ids(rng, 2, 9), random_ids(rng, 4, 9)}};
  std::vector<Param*> params = m.params();

  auto run = [&](bool backward) {
    text::PairBatch pb = text::batch_iter_parallel(pairs, 2, 3)[0];
    Graph g;
    nmt::EncVars enc = nmt::encode_graph(g, m, pb.src);
    nn::TeacherBatch tb = nn::make_teacher_batch(pb.tgt);
    std::vector<nn::LstmVars> st = enc.dec_init;
    Var total;
    for (size_t t = 0; t < tb.inputs.size(); ++t) {
      nmt::DecStepVars dv = nmt::decode_step_graph(g, m, enc, tb.inputs[t], st);
      st = dv.states;
      Var l = ag::softmax_xent_cols(dv.logits, tb.targets[t], tb.weights.row(t).transpose());
      total = total.valid() ? ag::add(total, l) : l;
    }
    if (backward) g.backward(total);
    return total.value()(0, 0);
  };
  return params_fd_err(params, run);
}

double fusion_model_err(uint64_t seed) {
  Rng rng(seed);
  int V = 9, H = 5;
  nmt::Config ncfg;
  ncfg.embed_dim = H;
  ncfg.hidden_dim = H;
  ncfg.layers = 1;
  fusion::Model fm;
  fm.nmt.init(V, 0, ncfg, rng);
  lm::Config lcfg;
  lcfg.embed_dim = H;
  lcfg.hidden_dim = H;
  lcfg.layers = 1;
  for (int i = 0; i < 2; ++i) {
    lm::Model l;
    l.init(V, 0, lcfg, rng);
    fm.lms.push_back(std::move(l));
  }
  fm.variant = fusion::Variant::dda;
  fm.point = fusion::FusionPoint::hidden;
  fm.wire(rng);

  nmt::ParallelIds pairs = {{random_ids(rng, 3, V), random_ids(rng, 3, V)}};
  std::vector<Param*> params = fm.trainable_params();

  auto run = [&](bool backward) {
    text::PairBatch pb = text::batch_iter_parallel(pairs, 1, 3)[0];
    Graph g;
    nmt::EncVars enc = nmt::encode_graph(g, fm.nmt, pb.src);
    nn::TeacherBatch tb = nn::make_teacher_batch(pb.tgt);
    std::vector<nn::LstmVars> st = enc.dec_init;
    std::vector<std::vector<nn::LstmVars>> lm_st(2);
    for (int i = 0; i < 2; ++i) lm_st[i].push_back(nn::lstm_zero_vars(g, H, 1));
    Var total;
    for (size_t t = 0; t < tb.inputs.size(); ++t) {
      nmt::DecStepVars dv = nmt::decode_step_graph(g, fm.nmt, enc, tb.inputs[t], st);
      st = dv.states;
      std::vector<Var> states;
      for (int i = 0; i < 2; ++i) {
        lm::StepVars sv = lm::step_graph(g, fm.lms[i], tb.inputs[t], lm_st[i]);
        lm_st[i] = sv.states;
        states.push_back(sv.top_h);
      }
      states.push_back(dv.s_tilde);
      fusion::FusedVars fv = fusion::fuse_states_graph(g, states, fm.gate);
      Var logits = ag::add(ag::matmul(g.param(fm.nmt.w_out), fv.s_da), g.param(fm.nmt.b_out));
      Var l = ag::softmax_xent_cols(logits, tb.targets[t], tb.weights.row(t).transpose());
      total = total.valid() ? ag::add(total, l) : l;
    }
    if (backward) g.backward(total);
    return total.value()(0, 0);
  };
  return params_fd_err(params, run);
}

}  // namespace

std::vector<std::pair<std::string, double>> gradient_suite(uint64_t seed) {
  std::vector<std::pair<std::string, double>> rows;
  const int kInstances = 50;
  Rng rng(seed);

  auto add_primitive = [&](const std::string& name,
                           const std::function<double(Rng&)>& one_instance) {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) worst = std::max(worst, one_instance(rng));
    rows.emplace_back(name, worst);
  };

  add_primitive("matmul", [](Rng& r) {
    int n = 2 + r.uniform_int(3), k = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    Mat b = random_mat(r, k, c);
    double e1 = primitive_err(r, n, k, [&](Graph& g, Var x) {
      return ag::matmul(x, g.constant(b));
    });
    Mat a = random_mat(r, n, k);
    double e2 = primitive_err(r, k, c, [&](Graph& g, Var x) {
      return ag::matmul(g.constant(a), x);
    });
    return std::max(e1, e2);
  });

  add_primitive("add", [](Rng& r) {
    int n = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    Mat b = random_mat(r, n, c);
    double e1 = primitive_err(r, n, c, [&](Graph& g, Var x) { return ag::add(x, g.constant(b)); });
    // bias broadcast
    Mat a = random_mat(r, n, c);
    double e2 = primitive_err(r, n, 1, [&](Graph& g, Var x) { return ag::add(g.constant(a), x); });
    return std::max(e1, e2);
  });

  add_primitive("mul", [](Rng& r) {
    int n = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    Mat b = random_mat(r, n, c);
    return primitive_err(r, n, c, [&](Graph& g, Var x) { return ag::mul(x, g.constant(b)); });
  });

  add_primitive("mul_rowbroadcast", [](Rng& r) {
    int n = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    Mat w = random_mat(r, 1, c);
    double e1 = primitive_err(
        r, n, c, [&](Graph& g, Var x) { return ag::mul_rowbroadcast(x, g.constant(w)); });
    Mat a = random_mat(r, n, c);
    double e2 = primitive_err(
        r, 1, c, [&](Graph& g, Var x) { return ag::mul_rowbroadcast(g.constant(a), x); });
    return std::max(e1, e2);
  });

  add_primitive("sigmoid", [](Rng& r) {
    int n = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    return primitive_err(r, n, c, [&](Graph&, Var x) { return ag::sigmoid(x); });
  });

  add_primitive("tanh", [](Rng& r) {
    int n = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    return primitive_err(r, n, c, [&](Graph&, Var x) { return ag::tanh(x); });
  });

  add_primitive("softmax", [](Rng& r) {
    int n = 2 + r.uniform_int(4), c = 1 + r.uniform_int(3);
    return primitive_err(r, n, c, [&](Graph&, Var x) { return ag::softmax_cols(x); });
  });

  add_primitive("masked_softmax", [](Rng& r) {
    int n = 3 + r.uniform_int(3), c = 1 + r.uniform_int(3);
    Mat mask(n, c);
    for (int j = 0; j < c; ++j) {
      for (int i = 0; i < n; ++i) mask(i, j) = r.uniform() < 0.4 ? 0.0 : 1.0;
      mask(r.uniform_int(n), j) = 1.0;  // non-empty support
    }
    return primitive_err(r, n, c,
                         [&](Graph&, Var x) { return ag::masked_softmax_cols(x, mask); });
  });

  add_primitive("concat", [](Rng& r) {
    int n = 2 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    Mat a = random_mat(r, 2, c), b = random_mat(r, 3, c);
    return primitive_err(r, n, c, [&](Graph& g, Var x) {
      return ag::concat_rows({g.constant(a), x, g.constant(b)});
    });
  });

  add_primitive("slice", [](Rng& r) {
    int n = 4 + r.uniform_int(3), c = 2 + r.uniform_int(3);
    int r0 = r.uniform_int(n - 2), nr = 1 + r.uniform_int(n - r0 - 1);
    return primitive_err(r, n, c, [&](Graph&, Var x) { return ag::slice_rows(x, r0, nr); });
  });

  add_primitive("embedding_lookup", [](Rng& r) {
    int d = 2 + r.uniform_int(3), vocab = 4 + r.uniform_int(4);
    std::vector<int> ids = random_ids(r, 5, vocab);  // repeats exercise accumulation
    return primitive_err(r, d, vocab, [&](Graph&, Var x) { return ag::embed_lookup(x, ids); });
  });

  add_primitive("cross_entropy", [](Rng& r) {
    int vocab = 4 + r.uniform_int(4), batch = 2 + r.uniform_int(3);
    std::vector<int> targets = random_ids(r, batch, vocab);
    Vec w(batch);
    for (int i = 0; i < batch; ++i) w(i) = r.uniform() < 0.25 ? 0.0 : r.uniform(0.5, 1.5);
    return primitive_err(r, vocab, batch, [&](Graph&, Var x) {
      return ag::softmax_xent_cols(x, targets, w);
    });
  });

  rows.emplace_back("lm_model", lm_model_err(seed + 101));
  rows.emplace_back("nmt_model", nmt_model_err(seed + 202, false));
  rows.emplace_back("nmt_model_bidir", nmt_model_err(seed + 303, true));
  rows.emplace_back("deep_fusion", fusion_model_err(seed + 404));
  return rows;
}

}  // namespace deskmt::cli
