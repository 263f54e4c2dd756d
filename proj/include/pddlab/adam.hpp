#pragma once

#include <Eigen/Dense>

namespace pddlab {

// Bias-corrected Adam with the canonical defaults.
struct AdamState {
  Eigen::ArrayXd m;  // first moment
  Eigen::ArrayXd v;  // second moment
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1e-8;
};

AdamState make_adam(Eigen::Index n);

// In-place update. A non-finite gradient aborts the step untouched (state
// and params unchanged) and returns false so the caller can flag the trace.
bool adam_step(Eigen::Ref<Eigen::ArrayXd> params, const Eigen::Ref<const Eigen::ArrayXd>& grads,
               AdamState& state, double lr);

}  // namespace pddlab
