#pragma once

#include <filesystem>
#include <string>

#include "pddlab/config.hpp"
#include "pddlab/detector.hpp"
#include "pddlab/diffusion.hpp"
#include "pddlab/toy_data.hpp"

namespace pddlab {

// Attack-vs-detector scorecard. pass_rate is the fraction of poisoned
// noises the detector misses; asr composes detection with generation
// success, so a detected input contributes zero even if sampling from it
// would have hit the target.
struct EvalReport {
  double detection_rate = 0.0;  // always 1.0 - pass_rate
  double pass_rate = 0.0;
  double asr = 0.0;
  double mse_to_target = 0.0;  // per-pixel, mean over generated samples
  std::size_t n_noise = 0;     // poisoned noises scored for pass_rate
  std::size_t n_samples = 0;   // reverse-sampled images measured
  std::string calib_fingerprint;
  std::string model_hash;
  std::string trigger_hash;
  std::string attack_mode;
};

std::string trigger_hash(const TriggerPattern& trigger);

// Scores cfg.n_eval fresh poisoned noises with the hard detector, then
// reverse-samples cfg.eval_samples of them (per-sample substreams) and
// measures attack success: instance mode needs per-pixel MSE to the
// checkerboard <= 1e-2, category mode needs the template classifier to
// emit the target class.
EvalReport run_evaluation(const DenoiserModel& model, const TriggerPattern& trigger,
                          const DetectorCalibration& calib, const DiffusionSchedule& sched,
                          const ToyDataset& ds, const ExperimentConfig& cfg);

void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace pddlab
