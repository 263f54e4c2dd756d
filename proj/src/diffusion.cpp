#include "pddlab/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "pddlab/errors.hpp"

namespace pddlab {
namespace {

void check_pair(const NoiseTensor& a, const NoiseTensor& b, const char* what) {
  if (!same_shape(a.shape, b.shape)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape) +
                     " vs " + shape_to_string(b.shape));
  }
}

void check_trigger(bool poisoned, const TriggerPattern* trigger, const NoiseTensor& start) {
  if (!poisoned) return;
  if (!trigger) throw ConfigError("poisoned sampling requires a trigger");
  if (!same_shape(trigger->delta.shape, start.shape)) {
    throw ShapeError("trigger shape " + shape_to_string(trigger->delta.shape) +
                     " does not match sample shape " + shape_to_string(start.shape));
  }
}

// Shared core for both loss flavors: x_t rows are prebuilt, target is eps.
double residual_loss_batch(const DenoiserModel& m, const Eigen::MatrixXd& xt,
                           const std::vector<int>& ts, const Eigen::MatrixXd& eps,
                           DenoiserGrads* param_grads, Eigen::MatrixXd* input_grads) {
  DenoiserActivations act;
  Eigen::MatrixXd pred = denoiser_forward(m, xt, ts, &act);
  Eigen::MatrixXd resid = pred - eps;
  double loss = resid.array().square().rowwise().sum().mean();
  if (param_grads || input_grads) {
    // d(mean_i ||r_i||^2)/d(pred) = 2 r / batch
    Eigen::MatrixXd upstream = resid * (2.0 / static_cast<double>(xt.rows()));
    Eigen::MatrixXd dx = denoiser_backward(m, act, upstream, param_grads);
    if (input_grads) *input_grads = std::move(dx);
  }
  return loss;
}

}  // namespace

NoiseTensor forward_diffuse(const NoiseTensor& x0, int t, const NoiseTensor& eps,
                            const DiffusionSchedule& sched) {
  check_pair(x0, eps, "forward_diffuse");
  double ab = sched.alpha_bar_at(t);
  sched.require_t(t);
  return {x0.shape, std::sqrt(ab) * x0.data + std::sqrt(1.0 - ab) * eps.data};
}

NoiseTensor forward_diffuse_backdoored(const NoiseTensor& x0_tilde, int t,
                                       const NoiseTensor& eps, const TriggerPattern& trigger,
                                       const DiffusionSchedule& sched) {
  check_pair(x0_tilde, eps, "forward_diffuse_backdoored");
  check_pair(x0_tilde, trigger.delta, "forward_diffuse_backdoored trigger");
  sched.require_t(t);
  double ab = sched.alpha_bar_at(t);
  double root = std::sqrt(1.0 - ab);
  return {x0_tilde.shape, std::sqrt(ab) * x0_tilde.data + root * trigger.mu_delta.data +
                              root * trigger.gamma * eps.data};
}

double benign_loss(const DenoiserModel& m, const NoiseTensor& x0, int t,
                   const NoiseTensor& eps, const DiffusionSchedule& sched) {
  NoiseTensor xt = forward_diffuse(x0, t, eps, sched);
  NoiseTensor pred = denoiser_forward(m, xt, t);
  return (pred.data - eps.data).square().sum();
}

double backdoor_loss(const DenoiserModel& m, const NoiseTensor& x0_tilde, int t,
                     const NoiseTensor& eps, const TriggerPattern& trigger,
                     const DiffusionSchedule& sched) {
  NoiseTensor xt = forward_diffuse_backdoored(x0_tilde, t, eps, trigger, sched);
  NoiseTensor pred = denoiser_forward(m, xt, t);
  return (pred.data - eps.data).square().sum();
}

double benign_loss_batch(const DenoiserModel& m, const Eigen::MatrixXd& x0,
                         const std::vector<int>& ts, const Eigen::MatrixXd& eps,
                         const DiffusionSchedule& sched, DenoiserGrads* param_grads,
                         Eigen::MatrixXd* input_grads) {
  Eigen::MatrixXd xt(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    double ab = sched.alpha_bar_at(ts[static_cast<std::size_t>(r)]);
    xt.row(r) = std::sqrt(ab) * x0.row(r) + std::sqrt(1.0 - ab) * eps.row(r);
  }
  return residual_loss_batch(m, xt, ts, eps, param_grads, input_grads);
}

double backdoor_loss_batch(const DenoiserModel& m, const Eigen::MatrixXd& x0_tilde,
                           const std::vector<int>& ts, const Eigen::MatrixXd& eps,
                           const TriggerPattern& trigger, const DiffusionSchedule& sched,
                           DenoiserGrads* param_grads, Eigen::MatrixXd* input_grads) {
  Eigen::RowVectorXd mu = trigger.mu_delta.data.matrix().transpose();
  Eigen::MatrixXd xt(x0_tilde.rows(), x0_tilde.cols());
  for (Eigen::Index r = 0; r < x0_tilde.rows(); ++r) {
    double ab = sched.alpha_bar_at(ts[static_cast<std::size_t>(r)]);
    double root = std::sqrt(1.0 - ab);
    xt.row(r) = std::sqrt(ab) * x0_tilde.row(r) + root * mu +
                (root * trigger.gamma) * eps.row(r);
  }
  return residual_loss_batch(m, xt, ts, eps, param_grads, input_grads);
}

DenoiserFn model_denoiser(const DenoiserModel& m) {
  return [&m](const Eigen::ArrayXd& x, int t) {
    Eigen::MatrixXd row = x.matrix().transpose();
    return denoiser_forward(m, row, {t}).row(0).array().transpose().eval();
  };
}

NoiseTensor ddpm_sample(const DenoiserFn& denoiser, const NoiseTensor& start,
                        const DiffusionSchedule& sched, RngStream& rng, bool poisoned,
                        const TriggerPattern* trigger) {
  check_trigger(poisoned, trigger, start);
  const double gamma = poisoned ? trigger->gamma : 1.0;
  Eigen::ArrayXd x = start.data;
  for (int t = sched.T; t >= 1; --t) {
    // The mean update is identical in both modes; the trigger enters only through
    // the starting noise and the gamma-scaled injection below.
    Eigen::ArrayXd eps_hat = denoiser(x, t);
    double ab = sched.alpha_bar_at(t);
    double beta = sched.beta_at(t);
    x = (x - beta / std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(sched.alpha_at(t));
    if (t > 1) {
      double ab_prev = sched.alpha_bar_at(t - 1);
      double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
      x += sigma * gamma * rng.gaussian_array(start.numel());
    }
  }
  return {start.shape, std::move(x)};
}

NoiseTensor ddpm_sample(const DenoiserModel& m, const NoiseTensor& start,
                        const DiffusionSchedule& sched, RngStream& rng, bool poisoned,
                        const TriggerPattern* trigger) {
  return ddpm_sample(model_denoiser(m), start, sched, rng, poisoned, trigger);
}

std::vector<int> ddim_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) {
    throw ConfigError("sampling steps must be in [1," + std::to_string(T) + "], got " +
                      std::to_string(steps));
  }
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    double v = steps == 1 ? T : 1.0 + (T - 1.0) * i / (steps - 1.0);
    int t = static_cast<int>(std::lround(v));
    if (ts.empty() || ts.back() != t) ts.push_back(t);
  }
  std::reverse(ts.begin(), ts.end());
  return ts;
}

NoiseTensor ddim_sample(const DenoiserFn& denoiser, const NoiseTensor& start,
                        const DiffusionSchedule& sched, int steps, bool poisoned,
                        const TriggerPattern* trigger) {
  check_trigger(poisoned, trigger, start);
  const double gamma = poisoned ? trigger->gamma : 1.0;
  std::vector<int> ts = ddim_timesteps(sched.T, steps);
  Eigen::ArrayXd x = start.data;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    int t = ts[i];
    int t_next = i + 1 < ts.size() ? ts[i + 1] : 0;
    Eigen::ArrayXd eps_hat = denoiser(x, t);
    Eigen::ArrayXd noise_hat =
        poisoned ? (trigger->mu_delta.data + gamma * eps_hat).eval() : eps_hat;
    double ab = sched.alpha_bar_at(t);
    double ab_next = sched.alpha_bar_at(t_next);
    Eigen::ArrayXd x0_hat = (x - std::sqrt(1.0 - ab) * noise_hat) / std::sqrt(ab);
    x = std::sqrt(ab_next) * x0_hat + std::sqrt(1.0 - ab_next) * noise_hat;
  }
  return {start.shape, std::move(x)};
}

NoiseTensor ddim_sample(const DenoiserModel& m, const NoiseTensor& start,
                        const DiffusionSchedule& sched, int steps, bool poisoned,
                        const TriggerPattern* trigger) {
  return ddim_sample(model_denoiser(m), start, sched, steps, poisoned, trigger);
}

}  // namespace pddlab
