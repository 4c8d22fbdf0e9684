#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "deskmt/types.hpp"

// Reverse-mode automatic differentiation over dense double matrices.
// Ops evaluate eagerly as the graph is built (node order is therefore
// topological); forward() re-evaluates the tape with fresh input values
// and backward() walks it in exact reverse order.

namespace deskmt::ag {

// A named trainable (or frozen) tensor living outside any graph.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void init_uniform(Rng& rng, double scale) {
    for (int j = 0; j < value.cols(); ++j)
      for (int i = 0; i < value.rows(); ++i) value(i, j) = rng.uniform(-scale, scale);
  }
  void zero_grad() { grad.setZero(); }
};

class Graph;

// Lightweight handle to a node in a Graph.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  const Mat& grad() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  bool valid() const { return g_ != nullptr; }
  Graph* graph() const { return g_; }
  int id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var input(const std::string& name, Mat value);
  Var constant(Mat value);
  Var param(Param& p);

  // Rebinding and re-execution of the recorded tape.
  void set_input(const std::string& name, const Mat& value);
  void forward();
  std::map<std::string, Mat> forward(const std::map<std::string, Mat>& inputs);

  // Accumulates d loss / d node for every node reachable from a trainable
  // leaf, then adds leaf gradients into their Params. loss must be 1x1.
  void backward(Var loss);

  void mark_output(const std::string& name, Var v);
  const Mat& output(const std::string& name) const;

  size_t size() const { return nodes_.size(); }

  // --- primitive builders (prefer the free functions below) ---
  Var op_matmul(Var a, Var b);
  Var op_add(Var a, Var b);  // same shape, or b a column vector broadcast over a's columns
  Var op_mul(Var a, Var b);  // elementwise
  Var op_mul_rowbroadcast(Var a, Var w);  // a: r x c, w: 1 x c; scales column j by w(j)
  Var op_scale(Var a, double k);
  Var op_sigmoid(Var a);
  Var op_tanh(Var a);
  Var op_softmax_cols(Var a);
  Var op_masked_softmax_cols(Var a, Mat mask01);
  Var op_concat_rows(const std::vector<Var>& parts);
  Var op_slice_rows(Var a, int row0, int nrows);
  Var op_embed_lookup(Var table, std::vector<int> ids);
  Var op_softmax_xent_cols(Var logits, std::vector<int> targets, Vec weights);
  Var op_sum_all(Var a);

 private:
  friend class Var;
  struct Node {
    std::string op;
    std::vector<int> parents;
    Mat value;
    Mat grad;  // empty until touched by backward
    bool requires_grad = false;
    std::function<void()> fwd;  // recompute value from parents; null for leaves
    std::function<void()> bwd;  // scatter this node's grad into parents
    Param* bound = nullptr;
    std::string input_name;
  };

  int add_node(std::string op, std::vector<int> parents);
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  Mat& grad_buf(int id);  // lazily allocates a zero gradient
  void check_finite(int id) const;
  void run_fwd(int id);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> inputs_;
  std::unordered_map<std::string, int> outputs_;
  std::unordered_map<const Param*, int> param_nodes_;  // one node per Param
};

// Expression-style free functions.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var mul_rowbroadcast(Var a, Var w);
Var scale(Var a, double k);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_cols(Var a);
Var masked_softmax_cols(Var a, const Mat& mask01);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, int row0, int nrows);
Var embed_lookup(Var table, const std::vector<int>& ids);
Var softmax_xent_cols(Var logits, const std::vector<int>& targets, const Vec& weights);
Var sum_all(Var a);

// Central-difference gradient check. `f(x, grad_out)` returns the scalar
// value at x and, when grad_out != nullptr, fills it with the analytic
// gradient. Returns max over coordinates of
//   |analytic - (f(x+eps) - f(x-eps)) / (2 eps)| / max(1, |analytic|),
// with non-finite coordinates reported as +inf.
double grad_check(const std::function<double(const Mat&, Mat*)>& f, const Mat& x, double eps);

// Stable helpers shared by scoring paths (no graph involvement).
double logsumexp(const Vec& v);
Vec log_softmax(const Vec& v);
Vec softmax(const Vec& v);

uint64_t params_hash(const std::vector<const Param*>& ps);

}  // namespace deskmt::ag
