#pragma once

#include <functional>
#include <vector>

#include "pddlab/denoiser.hpp"
#include "pddlab/schedule.hpp"
#include "pddlab/tensor.hpp"

namespace pddlab {

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps
NoiseTensor forward_diffuse(const NoiseTensor& x0, int t, const NoiseTensor& eps,
                            const DiffusionSchedule& sched);

// x~_t = sqrt(abar_t) x~0 + sqrt(1-abar_t) mu_delta + sqrt(1-abar_t) gamma eps
NoiseTensor forward_diffuse_backdoored(const NoiseTensor& x0_tilde, int t,
                                       const NoiseTensor& eps, const TriggerPattern& trigger,
                                       const DiffusionSchedule& sched);

// Squared residual ||eps - predicted||^2 for one example. Batched variants
// below return the batch mean and optionally parameter gradients plus the
// per-example gradient w.r.t. the diffused input (needed to chain into the
// trigger).
double benign_loss(const DenoiserModel& m, const NoiseTensor& x0, int t,
                   const NoiseTensor& eps, const DiffusionSchedule& sched);
double backdoor_loss(const DenoiserModel& m, const NoiseTensor& x0_tilde, int t,
                     const NoiseTensor& eps, const TriggerPattern& trigger,
                     const DiffusionSchedule& sched);

// Rows of x0/eps are flattened examples; ts parallel. The mean loss keeps
// batch size out of the learning-rate choice.
double benign_loss_batch(const DenoiserModel& m, const Eigen::MatrixXd& x0,
                         const std::vector<int>& ts, const Eigen::MatrixXd& eps,
                         const DiffusionSchedule& sched, DenoiserGrads* param_grads = nullptr,
                         Eigen::MatrixXd* input_grads = nullptr);
double backdoor_loss_batch(const DenoiserModel& m, const Eigen::MatrixXd& x0_tilde,
                           const std::vector<int>& ts, const Eigen::MatrixXd& eps,
                           const TriggerPattern& trigger, const DiffusionSchedule& sched,
                           DenoiserGrads* param_grads = nullptr,
                           Eigen::MatrixXd* input_grads = nullptr);

// Denoisers are injected as functions so analytic oracles can drive the
// samplers in tests.
using DenoiserFn = std::function<Eigen::ArrayXd(const Eigen::ArrayXd& x, int t)>;
DenoiserFn model_denoiser(const DenoiserModel& m);

// Ancestral sampling from x_T down to x_0. The reverse mean reconstitutes
// the effective noise mu_delta + gamma*eps_hat in poisoned mode (the model
// predicts only the unit-Gaussian part), and injected noise is scaled by
// gamma, matching the poisoned input law N(mu_delta, gamma^2 I).
NoiseTensor ddpm_sample(const DenoiserFn& denoiser, const NoiseTensor& start,
                        const DiffusionSchedule& sched, RngStream& rng, bool poisoned,
                        const TriggerPattern* trigger = nullptr);
NoiseTensor ddpm_sample(const DenoiserModel& m, const NoiseTensor& start,
                        const DiffusionSchedule& sched, RngStream& rng, bool poisoned,
                        const TriggerPattern* trigger = nullptr);

// Deterministic sampler over an evenly spaced timestep subsequence
// (eta = 0, no injected noise). steps = S in [1, T].
NoiseTensor ddim_sample(const DenoiserFn& denoiser, const NoiseTensor& start,
                        const DiffusionSchedule& sched, int steps, bool poisoned,
                        const TriggerPattern* trigger = nullptr);
NoiseTensor ddim_sample(const DenoiserModel& m, const NoiseTensor& start,
                        const DiffusionSchedule& sched, int steps, bool poisoned,
                        const TriggerPattern* trigger = nullptr);

// Descending unique timesteps from round(linspace(1, T, steps)).
std::vector<int> ddim_timesteps(int T, int steps);

}  // namespace pddlab
