#include "pddlab/adam.hpp"

#include <cmath>

#include "pddlab/errors.hpp"

namespace pddlab {

AdamState make_adam(Eigen::Index n) {
  AdamState s;
  s.m = Eigen::ArrayXd::Zero(n);
  s.v = Eigen::ArrayXd::Zero(n);
  return s;
}

bool adam_step(Eigen::Ref<Eigen::ArrayXd> params, const Eigen::Ref<const Eigen::ArrayXd>& grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam operand sizes differ");
  }
  if (!(lr > 0.0)) throw ConfigError("adam learning rate must be > 0");
  if (!grads.isFinite().all()) return false;

  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.square();
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params -= lr * (state.m / c1) / ((state.v / c2).sqrt() + state.eps_num);
  return true;
}

}  // namespace pddlab
