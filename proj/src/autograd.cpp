#include "deskmt/autograd.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace deskmt::ag {

const Mat& Var::value() const { return g_->node(id_).value; }
const Mat& Var::grad() const { return g_->node(id_).grad; }

namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

int Graph::add_node(std::string op, std::vector<int> parents) {
  Node n;
  n.op = std::move(op);
  n.parents = std::move(parents);
  for (int p : n.parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

Mat& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::check_finite(int id) const {
  const Node& n = nodes_[id];
  if (!n.value.allFinite()) {
    throw NumericError("non-finite value in node " + n.op + "#" + std::to_string(id));
  }
}

void Graph::run_fwd(int id) {
  Node& n = nodes_[id];
  if (n.fwd) n.fwd();
  check_finite(id);
}

Var Graph::input(const std::string& name, Mat value) {
  int id = add_node("input:" + name, {});
  nodes_[id].value = std::move(value);
  nodes_[id].input_name = name;
  inputs_[name] = id;
  check_finite(id);
  return Var(this, id);
}

Var Graph::constant(Mat value) {
  int id = add_node("const", {});
  nodes_[id].value = std::move(value);
  check_finite(id);
  return Var(this, id);
}

Var Graph::param(Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  int id = add_node("param:" + p.name, {});
  param_nodes_[&p] = id;
  Node& n = nodes_[id];
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.bound = &p;
  Param* pp = &p;
  n.fwd = [this, id, pp]() { nodes_[id].value = pp->value; };
  check_finite(id);
  return Var(this, id);
}

void Graph::set_input(const std::string& name, const Mat& value) {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw ShapeError("set_input: no input named '" + name + "'");
  Node& n = nodes_[it->second];
  if (n.value.rows() != value.rows() || n.value.cols() != value.cols()) {
    throw ShapeError("set_input: shape " + shape_str(value) + " does not match bound shape " +
                     shape_str(n.value) + " for input '" + name + "'");
  }
  n.value = value;
}

void Graph::forward() {
  for (int id = 0; id < int(nodes_.size()); ++id) run_fwd(id);
}

std::map<std::string, Mat> Graph::forward(const std::map<std::string, Mat>& inputs) {
  for (const auto& [k, v] : inputs) set_input(k, v);
  for (const auto& [k, id] : inputs_) {
    (void)id;
    if (!inputs.count(k)) throw ShapeError("forward: input '" + k + "' not bound");
  }
  forward();
  std::map<std::string, Mat> out;
  for (const auto& [k, id] : outputs_) out[k] = nodes_[id].value;
  return out;
}

void Graph::mark_output(const std::string& name, Var v) { outputs_[name] = v.id(); }

const Mat& Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw ShapeError("no output named '" + name + "'");
  return nodes_[it->second].value;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw ShapeError("backward: loss belongs to another graph");
  Node& ln = nodes_[loss.id()];
  if (ln.value.rows() != 1 || ln.value.cols() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(ln.value));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!ln.requires_grad) return;  // loss independent of every trainable leaf
  grad_buf(loss.id())(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.bwd) n.bwd();
  }
  for (Node& n : nodes_) {
    if (n.bound && n.bound->trainable && n.grad.size() != 0) n.bound->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// primitives

Var Graph::op_matmul(Var a, Var b) {
  int id = add_node("matmul", {a.id(), b.id()});
  int pa = a.id(), pb = b.id();
  if (nodes_[pa].value.cols() != nodes_[pb].value.rows()) {
    throw ShapeError("matmul#" + std::to_string(id) + ": inner dims mismatch " +
                     shape_str(nodes_[pa].value) + " * " + shape_str(nodes_[pb].value));
  }
  nodes_[id].fwd = [this, id, pa, pb]() {
    nodes_[id].value = nodes_[pa].value * nodes_[pb].value;
  };
  nodes_[id].bwd = [this, id, pa, pb]() {
    const Mat& g = nodes_[id].grad;
    if (nodes_[pa].requires_grad) grad_buf(pa) += g * nodes_[pb].value.transpose();
    if (nodes_[pb].requires_grad) grad_buf(pb) += nodes_[pa].value.transpose() * g;
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_add(Var a, Var b) {
  int id = add_node("add", {a.id(), b.id()});
  int pa = a.id(), pb = b.id();
  const Mat& av = nodes_[pa].value;
  const Mat& bv = nodes_[pb].value;
  bool bias = (bv.cols() == 1 && av.cols() != 1 && av.rows() == bv.rows());
  if (!bias && (av.rows() != bv.rows() || av.cols() != bv.cols())) {
    throw ShapeError("add#" + std::to_string(id) + ": shapes " + shape_str(av) + " vs " +
                     shape_str(bv));
  }
  if (bias) {
    nodes_[id].fwd = [this, id, pa, pb]() {
      nodes_[id].value = nodes_[pa].value.colwise() + Vec(nodes_[pb].value.col(0));
    };
    nodes_[id].bwd = [this, id, pa, pb]() {
      const Mat& g = nodes_[id].grad;
      if (nodes_[pa].requires_grad) grad_buf(pa) += g;
      if (nodes_[pb].requires_grad) grad_buf(pb) += g.rowwise().sum();
    };
  } else {
    nodes_[id].fwd = [this, id, pa, pb]() {
      nodes_[id].value = nodes_[pa].value + nodes_[pb].value;
    };
    nodes_[id].bwd = [this, id, pa, pb]() {
      const Mat& g = nodes_[id].grad;
      if (nodes_[pa].requires_grad) grad_buf(pa) += g;
      if (nodes_[pb].requires_grad) grad_buf(pb) += g;
    };
  }
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_mul(Var a, Var b) {
  int id = add_node("mul", {a.id(), b.id()});
  int pa = a.id(), pb = b.id();
  const Mat& av = nodes_[pa].value;
  const Mat& bv = nodes_[pb].value;
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw ShapeError("mul#" + std::to_string(id) + ": shapes " + shape_str(av) + " vs " +
                     shape_str(bv));
  }
  nodes_[id].fwd = [this, id, pa, pb]() {
    nodes_[id].value = nodes_[pa].value.cwiseProduct(nodes_[pb].value);
  };
  nodes_[id].bwd = [this, id, pa, pb]() {
    const Mat& g = nodes_[id].grad;
    if (nodes_[pa].requires_grad) grad_buf(pa) += g.cwiseProduct(nodes_[pb].value);
    if (nodes_[pb].requires_grad) grad_buf(pb) += g.cwiseProduct(nodes_[pa].value);
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_mul_rowbroadcast(Var a, Var w) {
  int id = add_node("mul_rowbroadcast", {a.id(), w.id()});
  int pa = a.id(), pw = w.id();
  const Mat& av = nodes_[pa].value;
  const Mat& wv = nodes_[pw].value;
  if (wv.rows() != 1 || wv.cols() != av.cols()) {
    throw ShapeError("mul_rowbroadcast#" + std::to_string(id) + ": weight " + shape_str(wv) +
                     " vs value " + shape_str(av));
  }
  nodes_[id].fwd = [this, id, pa, pw]() {
    nodes_[id].value =
        nodes_[pa].value.array().rowwise() * nodes_[pw].value.row(0).array();
  };
  nodes_[id].bwd = [this, id, pa, pw]() {
    const Mat& g = nodes_[id].grad;
    if (nodes_[pa].requires_grad) {
      grad_buf(pa).array() += g.array().rowwise() * nodes_[pw].value.row(0).array();
    }
    if (nodes_[pw].requires_grad) {
      grad_buf(pw) += g.cwiseProduct(nodes_[pa].value).colwise().sum();
    }
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_scale(Var a, double k) {
  int id = add_node("scale", {a.id()});
  int pa = a.id();
  nodes_[id].fwd = [this, id, pa, k]() { nodes_[id].value = k * nodes_[pa].value; };
  nodes_[id].bwd = [this, id, pa, k]() {
    if (nodes_[pa].requires_grad) grad_buf(pa) += k * nodes_[id].grad;
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_sigmoid(Var a) {
  int id = add_node("sigmoid", {a.id()});
  int pa = a.id();
  nodes_[id].fwd = [this, id, pa]() {
    nodes_[id].value = nodes_[pa].value.unaryExpr([](double x) { return stable_sigmoid(x); });
  };
  nodes_[id].bwd = [this, id, pa]() {
    if (!nodes_[pa].requires_grad) return;
    const Mat& v = nodes_[id].value;
    grad_buf(pa).array() += nodes_[id].grad.array() * v.array() * (1.0 - v.array());
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_tanh(Var a) {
  int id = add_node("tanh", {a.id()});
  int pa = a.id();
  nodes_[id].fwd = [this, id, pa]() { nodes_[id].value = nodes_[pa].value.array().tanh(); };
  nodes_[id].bwd = [this, id, pa]() {
    if (!nodes_[pa].requires_grad) return;
    const Mat& v = nodes_[id].value;
    grad_buf(pa).array() += nodes_[id].grad.array() * (1.0 - v.array().square());
  };
  run_fwd(id);
  return Var(this, id);
}

namespace {
// Column softmax with max subtraction; zero-mask rows excluded exactly.
void softmax_cols_into(const Mat& x, const Mat* mask, Mat& out) {
  out.resize(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < x.rows(); ++i) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) {
      throw NumericError("softmax: column " + std::to_string(j) + " has empty support");
    }
    double sum = 0.0;
    for (int i = 0; i < x.rows(); ++i) {
      if (mask && (*mask)(i, j) == 0.0) {
        out(i, j) = 0.0;
      } else {
        out(i, j) = std::exp(x(i, j) - mx);
        sum += out(i, j);
      }
    }
    out.col(j) /= sum;
  }
}

// dL/dx = p .* (g - <g, p>) per column.
void softmax_backward_into(const Mat& p, const Mat& g, Mat& gx) {
  for (int j = 0; j < p.cols(); ++j) {
    double dot = g.col(j).dot(p.col(j));
    gx.col(j).array() += p.col(j).array() * (g.col(j).array() - dot);
  }
}
}  // namespace

Var Graph::op_softmax_cols(Var a) {
  int id = add_node("softmax", {a.id()});
  int pa = a.id();
  nodes_[id].fwd = [this, id, pa]() {
    softmax_cols_into(nodes_[pa].value, nullptr, nodes_[id].value);
  };
  nodes_[id].bwd = [this, id, pa]() {
    if (!nodes_[pa].requires_grad) return;
    softmax_backward_into(nodes_[id].value, nodes_[id].grad, grad_buf(pa));
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_masked_softmax_cols(Var a, Mat mask01) {
  int id = add_node("masked_softmax", {a.id()});
  int pa = a.id();
  const Mat& av = nodes_[pa].value;
  if (mask01.rows() != av.rows() || mask01.cols() != av.cols()) {
    throw ShapeError("masked_softmax#" + std::to_string(id) + ": mask " + shape_str(mask01) +
                     " vs value " + shape_str(av));
  }
  auto mask = std::make_shared<Mat>(std::move(mask01));
  nodes_[id].fwd = [this, id, pa, mask]() {
    softmax_cols_into(nodes_[pa].value, mask.get(), nodes_[id].value);
  };
  nodes_[id].bwd = [this, id, pa]() {
    if (!nodes_[pa].requires_grad) return;
    softmax_backward_into(nodes_[id].value, nodes_[id].grad, grad_buf(pa));
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::vector<int> ps;
  for (const Var& v : parts) ps.push_back(v.id());
  int id = add_node("concat", ps);
  int cols = nodes_[ps[0]].value.cols();
  for (int p : ps) {
    if (nodes_[p].value.cols() != cols) {
      throw ShapeError("concat#" + std::to_string(id) + ": column counts differ");
    }
  }
  std::vector<int> pids = ps;
  nodes_[id].fwd = [this, id, pids]() {
    int rows = 0, cols2 = nodes_[pids[0]].value.cols();
    for (int p : pids) rows += nodes_[p].value.rows();
    Mat v(rows, cols2);
    int r = 0;
    for (int p : pids) {
      v.middleRows(r, nodes_[p].value.rows()) = nodes_[p].value;
      r += nodes_[p].value.rows();
    }
    nodes_[id].value = std::move(v);
  };
  nodes_[id].bwd = [this, id, pids]() {
    const Mat& g = nodes_[id].grad;
    int r = 0;
    for (int p : pids) {
      int nr = nodes_[p].value.rows();
      if (nodes_[p].requires_grad) grad_buf(p) += g.middleRows(r, nr);
      r += nr;
    }
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_slice_rows(Var a, int row0, int nrows) {
  int id = add_node("slice", {a.id()});
  int pa = a.id();
  if (row0 < 0 || nrows <= 0 || row0 + nrows > nodes_[pa].value.rows()) {
    throw ShapeError("slice#" + std::to_string(id) + ": rows [" + std::to_string(row0) + "," +
                     std::to_string(row0 + nrows) + ") out of " +
                     std::to_string(nodes_[pa].value.rows()));
  }
  nodes_[id].fwd = [this, id, pa, row0, nrows]() {
    nodes_[id].value = nodes_[pa].value.middleRows(row0, nrows);
  };
  nodes_[id].bwd = [this, id, pa, row0, nrows]() {
    if (nodes_[pa].requires_grad) grad_buf(pa).middleRows(row0, nrows) += nodes_[id].grad;
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_embed_lookup(Var table, std::vector<int> ids) {
  int id = add_node("embed_lookup", {table.id()});
  int pt = table.id();
  int vocab = nodes_[pt].value.cols();
  for (int t : ids) {
    if (t < 0 || t >= vocab) {
      throw DataError("embed_lookup#" + std::to_string(id) + ": token id " + std::to_string(t) +
                      " out of vocabulary of size " + std::to_string(vocab));
    }
  }
  auto idp = std::make_shared<std::vector<int>>(std::move(ids));
  nodes_[id].fwd = [this, id, pt, idp]() {
    const Mat& tb = nodes_[pt].value;
    Mat v(tb.rows(), idp->size());
    for (size_t b = 0; b < idp->size(); ++b) v.col(b) = tb.col((*idp)[b]);
    nodes_[id].value = std::move(v);
  };
  nodes_[id].bwd = [this, id, pt, idp]() {
    if (!nodes_[pt].requires_grad) return;
    Mat& gt = grad_buf(pt);
    const Mat& g = nodes_[id].grad;
    for (size_t b = 0; b < idp->size(); ++b) gt.col((*idp)[b]) += g.col(b);
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_softmax_xent_cols(Var logits, std::vector<int> targets, Vec weights) {
  int id = add_node("softmax_xent", {logits.id()});
  int pl = logits.id();
  const Mat& lv = nodes_[pl].value;
  if (int(targets.size()) != lv.cols() || weights.size() != lv.cols()) {
    throw ShapeError("softmax_xent#" + std::to_string(id) + ": batch size mismatch");
  }
  for (int t : targets) {
    if (t < 0 || t >= lv.rows()) {
      throw DataError("softmax_xent#" + std::to_string(id) + ": target id " + std::to_string(t) +
                      " out of " + std::to_string(lv.rows()));
    }
  }
  auto tg = std::make_shared<std::vector<int>>(std::move(targets));
  auto wt = std::make_shared<Vec>(std::move(weights));
  auto probs = std::make_shared<Mat>();
  nodes_[id].fwd = [this, id, pl, tg, wt, probs]() {
    const Mat& x = nodes_[pl].value;
    softmax_cols_into(x, nullptr, *probs);
    double total = 0.0;
    for (int j = 0; j < x.cols(); ++j) {
      double mx = x.col(j).maxCoeff();
      double lse = mx + std::log((x.col(j).array() - mx).exp().sum());
      total += (*wt)(j) * (lse - x((*tg)[j], j));
    }
    nodes_[id].value = Mat::Constant(1, 1, total);
  };
  nodes_[id].bwd = [this, id, pl, tg, wt, probs]() {
    if (!nodes_[pl].requires_grad) return;
    double up = nodes_[id].grad(0, 0);
    Mat& gx = grad_buf(pl);
    for (int j = 0; j < probs->cols(); ++j) {
      gx.col(j) += up * (*wt)(j)*probs->col(j);
      gx((*tg)[j], j) -= up * (*wt)(j);
    }
  };
  run_fwd(id);
  return Var(this, id);
}

Var Graph::op_sum_all(Var a) {
  int id = add_node("sum", {a.id()});
  int pa = a.id();
  nodes_[id].fwd = [this, id, pa]() {
    nodes_[id].value = Mat::Constant(1, 1, nodes_[pa].value.sum());
  };
  nodes_[id].bwd = [this, id, pa]() {
    if (!nodes_[pa].requires_grad) return;
    grad_buf(pa).array() += nodes_[id].grad(0, 0);
  };
  run_fwd(id);
  return Var(this, id);
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) { return a.graph()->op_matmul(a, b); }
Var add(Var a, Var b) { return a.graph()->op_add(a, b); }
Var mul(Var a, Var b) { return a.graph()->op_mul(a, b); }
Var mul_rowbroadcast(Var a, Var w) { return a.graph()->op_mul_rowbroadcast(a, w); }
Var scale(Var a, double k) { return a.graph()->op_scale(a, k); }
Var sigmoid(Var a) { return a.graph()->op_sigmoid(a); }
Var tanh(Var a) { return a.graph()->op_tanh(a); }
Var softmax_cols(Var a) { return a.graph()->op_softmax_cols(a); }
Var masked_softmax_cols(Var a, const Mat& mask01) {
  return a.graph()->op_masked_softmax_cols(a, mask01);
}
Var concat_rows(const std::vector<Var>& parts) {
  return parts.at(0).graph()->op_concat_rows(parts);
}
Var slice_rows(Var a, int row0, int nrows) { return a.graph()->op_slice_rows(a, row0, nrows); }
Var embed_lookup(Var table, const std::vector<int>& ids) {
  return table.graph()->op_embed_lookup(table, ids);
}
Var softmax_xent_cols(Var logits, const std::vector<int>& targets, const Vec& weights) {
  return logits.graph()->op_softmax_xent_cols(logits, targets, weights);
}
Var sum_all(Var a) { return a.graph()->op_sum_all(a); }

double grad_check(const std::function<double(const Mat&, Mat*)>& f, const Mat& x, double eps) {
  const Mat base = x;  // f may alias x with state it mutates
  Mat analytic;
  f(base, &analytic);
  double worst = 0.0;
  Mat xp = base;
  for (int j = 0; j < base.cols(); ++j) {
    for (int i = 0; i < base.rows(); ++i) {
      xp(i, j) = base(i, j) + eps;
      double fp = f(xp, nullptr);
      xp(i, j) = base(i, j) - eps;
      double fm = f(xp, nullptr);
      xp(i, j) = base(i, j);
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic(i, j);
      double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double logsumexp(const Vec& v) {
  double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

Vec log_softmax(const Vec& v) {
  double lse = logsumexp(v);
  return v.array() - lse;
}

Vec softmax(const Vec& v) {
  Vec e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

uint64_t params_hash(const std::vector<const Param*>& ps) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Param* p : ps) {
    h = fnv1a64(p->name, h);
    h = fnv1a64_bytes(p->value.data(), sizeof(double) * p->value.size(), h);
  }
  return h;
}

}  // namespace deskmt::ag
