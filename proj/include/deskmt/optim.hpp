#pragma once

#include "deskmt/autograd.hpp"

namespace deskmt::ag {

enum class OptAlgo { sgd, adam };

// Gradient-descent state. Moments are kept per parameter, positionally; pass
// the same parameter list to every optimizer_step call.
struct OptimizerState {
  OptAlgo algo = OptAlgo::adam;
  double lr = 1e-3;
  double clip_norm = 5.0;  // global L2 threshold; <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;
  std::vector<Mat> m, v;  // adam moments, sized lazily

  static OptimizerState sgd_state(double lr, double clip = 5.0) {
    OptimizerState s;
    s.algo = OptAlgo::sgd;
    s.lr = lr;
    s.clip_norm = clip;
    return s;
  }
  static OptimizerState adam_state(double lr = 1e-3, double clip = 5.0) {
    OptimizerState s;
    s.lr = lr;
    s.clip_norm = clip;
    return s;
  }
};

// Applies global-norm clipping to the grads, then one sgd/adam update.
// Throws NumericError naming the parameter on a non-finite gradient.
void optimizer_step(const std::vector<Param*>& params, OptimizerState& state);

void zero_grads(const std::vector<Param*>& params);

}  // namespace deskmt::ag
