#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pddlab/tensor.hpp"

namespace pddlab {

// One flat config drives every pipeline stage. Defaults reproduce the
// shipped experiment: CIFAR-shaped detector, desk-scale diffusion model.
struct ExperimentConfig {
  // [shape]
  Shape dims{3, 32, 32};

  // [histogram]
  int num_bins = 50;
  double range_lo = -4.0;
  double range_hi = 4.0;
  double omega = 6.0;
  double lambda = 1e-8;
  bool analytic_anchor = false;

  // [calibration]
  std::size_t n_anchor = 100;
  std::size_t n_calib = 1000;

  // [schedule]
  int timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.05;

  // [dataset]
  std::string attack_mode = "instance";  // or "category"
  int target_class = 0;

  // [forge] (model_lr also drives pretraining)
  double gamma = 0.6;
  double tau = 1e4;
  double phi_th_scale = 0.15;  // phi_th = scale * phi_base
  double trigger_lr = 2e-3;
  double model_lr = 2e-4;
  long steps_phase1 = 2000;
  long steps_phase2 = 10000;
  long steps_pretrain = 20000;
  int batch_size = 64;
  int n_pdd = 16;
  int hidden_dim = 256;
  bool nc_term = true;

  // [evaluation]
  std::size_t n_eval = 1000;
  std::string sampler = "ddpm";  // or "ddim"
  int sample_steps = 20;
  std::size_t eval_samples = 100;

  // [seeds]
  std::uint64_t seed = 0;

  // [output]
  std::string out_dir;
};

ExperimentConfig default_config();

// Section/key file format: `[section]` headers, `key = value` lines, # or ;
// comments. Unknown sections or keys are hard errors; a typo must never run
// a half-default experiment.
ExperimentConfig parse_config(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical rendering: fixed section and key order, shortest decimal forms
// that round-trip. parse(render(c)) == c, and identical configs render to
// identical bytes.
std::string render_config(const ExperimentConfig& cfg);
void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Identity hash over the sections that determine artifact compatibility
// (shape, histogram, schedule, dataset, forge). Evaluation-count or output
// tweaks don't invalidate a trigger; changing the detector or the attack
// does.
std::string config_identity_hash(const ExperimentConfig& cfg);

}  // namespace pddlab
