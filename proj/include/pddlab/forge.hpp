#pragma once

#include <filesystem>
#include <functional>

#include "pddlab/adam.hpp"
#include "pddlab/detector.hpp"
#include "pddlab/diffusion.hpp"
#include "pddlab/toy_data.hpp"
#include "pddlab/trace.hpp"

namespace pddlab {

struct ForgeConfig {
  double gamma = 0.6;
  double tau = 1e4;        // weight of the hinge term in phase 1
  double phi_th = 0.0;     // evasion margin, normally a fraction of phi_base
  double trigger_lr = 2e-3;
  double model_lr = 2e-4;
  long steps_phase1 = 2000;
  long steps_phase2 = 10000;
  int batch_size = 64;
  int n_pdd = 16;          // poisoned-noise draws per hinge evaluation
  double init_scale = 0.1; // trigger starts uniform in [-init_scale, init_scale]
  bool nc_term = true;     // drop the residual term to study the hinge alone
  RngSeed seed;            // base seed; phases derive their own stream ids
};

// Draws one attack-target image (fixed instance or jittered class sample).
using TargetSampler = std::function<NoiseTensor(RngStream&)>;
TargetSampler instance_target_sampler(const ToyDataset& ds);
TargetSampler category_target_sampler(const ToyDataset& ds, int target_class);

// Residual loss through the backdoored forward process, differentiated
// w.r.t. the trigger through the denoiser input. The value is computed by
// the same code as backdoor_loss, so the two agree bit-for-bit.
struct NcResult {
  double loss = 0.0;
  Eigen::ArrayXd grad_delta;
};
NcResult nc_loss(const DenoiserModel& m, const TriggerPattern& trigger,
                 const NoiseTensor& x0_tilde, int t, const NoiseTensor& eps,
                 const DiffusionSchedule& sched);
NcResult nc_loss_batch(const DenoiserModel& m, const TriggerPattern& trigger,
                       const Eigen::MatrixXd& x0_tilde, const std::vector<int>& ts,
                       const Eigen::MatrixXd& eps, const DiffusionSchedule& sched);

// Hinge loss over n_pdd fixed poisoned-noise draws (rows of eps_draws) with
// its trigger gradient; scores come along for probes and tests. Exposed so
// gradient and linearity checks can evaluate the phase-1 objective pieces
// at a fixed trigger.
struct PddLossEval {
  double loss = 0.0;
  double mean_dd = 0.0;
  Eigen::ArrayXd scores;
  Eigen::ArrayXd grad_delta;
};
PddLossEval eval_pdd_loss(const TriggerPattern& trigger, const DetectorCalibration& calib,
                          const Eigen::MatrixXd& eps_draws, double phi_th);

// Phase 1: learn a detection-evading trigger against a frozen denoiser by
// minimizing nc + tau * hinge. The trigger starts uniform in [-0.1, 0.1].
// A non-finite loss aborts the run with the trace preserved
// (trace.aborted); the partial trigger is still returned.
struct Phase1Result {
  TriggerPattern trigger;
  TrainingTrace trace;
  double final_mean_dd = 0.0;  // fresh 64-draw probe after the last step
};
Phase1Result train_trigger_phase1(const DenoiserModel& frozen, const ToyDataset& ds,
                                  const DetectorCalibration& calib,
                                  const DiffusionSchedule& sched, const ForgeConfig& cfg,
                                  const TargetSampler& target);

// Phase 2: warm-started model trains on benign + poisoned batches with the
// trigger frozen. probe, when set, is called every probe_every steps and
// once at the end (checkpoint metrics over training).
struct Phase2Result {
  DenoiserModel model;
  TrainingTrace trace;
};
using Phase2Probe = std::function<void(long step, const DenoiserModel& m)>;
Phase2Result train_model_phase2(DenoiserModel model, const ToyDataset& ds,
                                const TriggerPattern& trigger,
                                const DetectorCalibration& calib,
                                const DiffusionSchedule& sched, const ForgeConfig& cfg,
                                const TargetSampler& target,
                                const Phase2Probe& probe = nullptr, long probe_every = 0);

// Benign-only training. Also serves as the budget-matched control for the
// phase-2 utility comparison (stream kControl instead of kPretrain).
// Aborts (trace.aborted) when the loss is non-finite or exceeds 10x the
// initial loss for 100 consecutive steps.
struct PretrainResult {
  DenoiserModel model;
  TrainingTrace trace;
};
PretrainResult pretrain_benign(DenoiserModel model, const ToyDataset& ds,
                               const DiffusionSchedule& sched, long steps, int batch_size,
                               double lr, RngSeed seed);

// Trigger artifact: NGT tensor for delta plus a JSON sidecar.
void save_trigger_artifact(const std::filesystem::path& ngt_path,
                           const std::filesystem::path& meta_path,
                           const TriggerPattern& trigger, double phi_th,
                           const std::string& calib_fingerprint,
                           const std::string& config_hash, double final_mean_dd);
struct TriggerArtifact {
  TriggerPattern trigger;
  double phi_th = 0.0;
  std::string calib_fingerprint;
  std::string config_hash;
  double final_mean_dd = 0.0;
};
TriggerArtifact load_trigger_artifact(const std::filesystem::path& ngt_path,
                                      const std::filesystem::path& meta_path);

}  // namespace pddlab
