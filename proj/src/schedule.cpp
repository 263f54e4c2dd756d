#include "pddlab/schedule.hpp"

#include <string>

#include "pddlab/errors.hpp"

namespace pddlab {

void DiffusionSchedule::require_t(int t) const {
  if (t < 1 || t > T) {
    throw Error("timestep " + std::to_string(t) + " out of range [1," + std::to_string(T) + "]");
  }
}

double DiffusionSchedule::beta_at(int t) const {
  require_t(t);
  return beta[t - 1];
}

double DiffusionSchedule::alpha_at(int t) const {
  require_t(t);
  return alpha[t - 1];
}

double DiffusionSchedule::alpha_bar_at(int t) const {
  if (t == 0) return 1.0;
  require_t(t);
  return alpha_bar[t - 1];
}

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("schedule needs T >= 1");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
    throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta = T == 1 ? Eigen::ArrayXd::Constant(1, beta_start).eval()
                  : Eigen::ArrayXd::LinSpaced(T, beta_start, beta_end).eval();
  s.alpha = 1.0 - s.beta;
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

}  // namespace pddlab
