#include "pddlab/evaluate.hpp"

#include <cstring>

#include <nlohmann/json.hpp>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"

namespace pddlab {
namespace {

// A generated sample counts as an instance-mode hit at this per-pixel MSE.
constexpr double kInstanceSuccessMse = 1e-2;

}  // namespace

std::string trigger_hash(const TriggerPattern& trigger) {
  std::string bytes(reinterpret_cast<const char*>(trigger.delta.data.data()),
                    static_cast<std::size_t>(trigger.delta.data.size()) * sizeof(double));
  bytes.append(reinterpret_cast<const char*>(&trigger.gamma), sizeof(double));
  return hex64(fnv1a_string(bytes));
}

EvalReport run_evaluation(const DenoiserModel& model, const TriggerPattern& trigger,
                          const DetectorCalibration& calib, const DiffusionSchedule& sched,
                          const ToyDataset& ds, const ExperimentConfig& cfg) {
  if (cfg.n_eval == 0) throw ConfigError("evaluation needs n_eval >= 1");
  if (!same_shape(model.data_shape, calib.shape) ||
      !same_shape(trigger.delta.shape, calib.shape))
    throw ShapeError("model " + shape_to_string(model.data_shape) + ", trigger " +
                     shape_to_string(trigger.delta.shape) + ", calibration " +
                     shape_to_string(calib.shape) + " must share one shape");

  const bool category = cfg.attack_mode == "category";
  if (category) {
    if (!same_shape(calib.shape, ds.shape))
      throw ConfigError("category mode needs the toy dataset shape " +
                        shape_to_string(ds.shape) + ", calibration is " +
                        shape_to_string(calib.shape));
    if (cfg.target_class < 0 ||
        static_cast<std::size_t>(cfg.target_class) >= ds.templates.size())
      throw ConfigError("target_class " + std::to_string(cfg.target_class) + " out of range");
  }
  const NoiseTensor target = category
                                 ? ds.templates[static_cast<std::size_t>(cfg.target_class)]
                                 : (same_shape(calib.shape, ds.shape)
                                        ? ds.checkerboard
                                        : checkerboard_tensor(calib.shape));

  EvalReport rep;
  rep.attack_mode = cfg.attack_mode;
  rep.n_noise = cfg.n_eval;
  rep.n_samples = cfg.eval_samples;
  rep.model_hash = hex64(param_checksum(model));
  rep.trigger_hash = trigger_hash(trigger);

  // Detection side: fresh poisoned noises against the hard detector.
  RngStream noise_rng(cfg.seed, streams::kEvaluation);
  std::size_t passed = 0;
  for (std::size_t i = 0; i < cfg.n_eval; ++i) {
    NoiseTensor eps = sample_gaussian(calib.shape, noise_rng);
    NoiseTensor x = blend_trigger(trigger, eps);
    if (pdd_score(x, calib) < calib.phi_base) ++passed;
  }
  rep.pass_rate = static_cast<double>(passed) / static_cast<double>(cfg.n_eval);
  rep.detection_rate = 1.0 - rep.pass_rate;

  // Attack side: reverse-sample a subset on per-sample substreams, so one
  // sample's trajectory never depends on how many others ran.
  double asr_hits = 0.0;
  double mse_sum = 0.0;
  for (std::size_t j = 0; j < cfg.eval_samples; ++j) {
    RngStream srng(cfg.seed, streams::kEvalSampleBase + j);
    NoiseTensor start = blend_trigger(trigger, sample_gaussian(calib.shape, srng));
    const bool passes = pdd_score(start, calib) < calib.phi_base;
    NoiseTensor x0 = cfg.sampler == "ddpm"
                         ? ddpm_sample(model, start, sched, srng, true, &trigger)
                         : ddim_sample(model, start, sched, cfg.sample_steps, true, &trigger);
    const double mse = (x0.data - target.data).square().mean();
    mse_sum += mse;
    const bool success = category ? classify_toy(x0, ds) == cfg.target_class
                                  : mse <= kInstanceSuccessMse;
    if (passes && success) asr_hits += 1.0;
  }
  rep.asr = asr_hits / static_cast<double>(cfg.eval_samples);
  rep.mse_to_target = mse_sum / static_cast<double>(cfg.eval_samples);
  return rep;
}

void save_report(const std::filesystem::path& path, const EvalReport& rep) {
  std::string out;
  out += "{\n";
  out += "  \"format_version\": 1,\n";
  out += "  \"attack_mode\": \"" + rep.attack_mode + "\",\n";
  out += "  \"n_noise\": " + std::to_string(rep.n_noise) + ",\n";
  out += "  \"n_samples\": " + std::to_string(rep.n_samples) + ",\n";
  out += "  \"detection_rate\": " + format_real(rep.detection_rate) + ",\n";
  out += "  \"pass_rate\": " + format_real(rep.pass_rate) + ",\n";
  out += "  \"asr\": " + format_real(rep.asr) + ",\n";
  out += "  \"mse_to_target\": " + format_real(rep.mse_to_target) + ",\n";
  out += "  \"calib_fingerprint\": \"" + rep.calib_fingerprint + "\",\n";
  out += "  \"model_hash\": \"" + rep.model_hash + "\",\n";
  out += "  \"trigger_hash\": \"" + rep.trigger_hash + "\"\n";
  out += "}\n";
  write_text_file(path, out);
}

EvalReport load_report(const std::filesystem::path& path) {
  EvalReport rep;
  try {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    if (j.at("format_version").get<int>() != 1)
      throw FormatError("unsupported report version");
    rep.attack_mode = j.at("attack_mode").get<std::string>();
    rep.n_noise = j.at("n_noise").get<std::size_t>();
    rep.n_samples = j.at("n_samples").get<std::size_t>();
    rep.detection_rate = j.at("detection_rate").get<double>();
    rep.pass_rate = j.at("pass_rate").get<double>();
    rep.asr = j.at("asr").get<double>();
    rep.mse_to_target = j.at("mse_to_target").get<double>();
    rep.calib_fingerprint = j.at("calib_fingerprint").get<std::string>();
    rep.model_hash = j.at("model_hash").get<std::string>();
    rep.trigger_hash = j.at("trigger_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return rep;
}

}  // namespace pddlab
