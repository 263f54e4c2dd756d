#pragma once

#include <Eigen/Dense>

namespace pddlab {

// Linear beta schedule over T steps with the derived alpha products.
// Timesteps are 1-based; alpha_bar_at(0) is defined as 1 so posterior and
// skip formulas hold at the chain ends without special cases.
struct DiffusionSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  Eigen::ArrayXd beta;       // beta[t-1] is the step-t value
  Eigen::ArrayXd alpha;      // 1 - beta
  Eigen::ArrayXd alpha_bar;  // running product of alpha

  double beta_at(int t) const;
  double alpha_at(int t) const;
  double alpha_bar_at(int t) const;  // accepts 0..T
  void require_t(int t) const;       // throws unless 1 <= t <= T
};

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end);

}  // namespace pddlab
