#include "deskmt/optim.hpp"

#include <cmath>

namespace deskmt::ag {

void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

void optimizer_step(const std::vector<Param*>& params, OptimizerState& st) {
  for (const Param* p : params) {
    if (!p->grad.allFinite()) {
      throw NumericError("non-finite gradient for parameter '" + p->name + "'");
    }
  }

  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  double norm = std::sqrt(sq);
  double rescale = (st.clip_norm > 0.0 && norm > st.clip_norm) ? st.clip_norm / norm : 1.0;

  st.step_count += 1;

  if (st.algo == OptAlgo::sgd) {
    for (Param* p : params) p->value -= st.lr * rescale * p->grad;
    return;
  }

  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), Mat());
    st.v.assign(params.size(), Mat());
  }
  double bc1 = 1.0 - std::pow(st.beta1, double(st.step_count));
  double bc2 = 1.0 - std::pow(st.beta2, double(st.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (st.m[i].size() == 0) {
      st.m[i] = Mat::Zero(p.value.rows(), p.value.cols());
      st.v[i] = Mat::Zero(p.value.rows(), p.value.cols());
    }
    Mat g = rescale * p.grad;
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g.cwiseProduct(g);
    Mat mhat = st.m[i] / bc1;
    Mat vhat = st.v[i] / bc2;
    p.value.array() -= st.lr * mhat.array() / (vhat.array().sqrt() + st.eps);
  }
}

}  // namespace deskmt::ag
