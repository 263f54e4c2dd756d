// Command-line surface for the detector and the trigger-forging pipeline.
// Exit codes: 0 success, 2 usage/config/artifact error, 3 strict-mode
// poisoned verdict, 4 numerical abort (trace still flushed).
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pddlab/checkpoint.hpp"
#include "pddlab/config.hpp"
#include "pddlab/detector.hpp"
#include "pddlab/errors.hpp"
#include "pddlab/evaluate.hpp"
#include "pddlab/forge.hpp"
#include "pddlab/jsonio.hpp"
#include "pddlab/ngt.hpp"
#include "pddlab/trace.hpp"

namespace fs = std::filesystem;
using namespace pddlab;

namespace {

struct Cli {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  ExperimentConfig cfg;

  void resolve() {
    cfg = config_path.empty() ? default_config() : load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
  }

  fs::path out(const std::string& name) const {
    if (cfg.out_dir.empty())
      throw ConfigError("output directory required (--out or [output] out_dir)");
    fs::create_directories(cfg.out_dir);
    return fs::path(cfg.out_dir) / name;
  }

  // Canonical artifact location, overridable per command.
  fs::path artifact(const std::string& override_path, const std::string& name) const {
    if (!override_path.empty()) return override_path;
    if (cfg.out_dir.empty())
      throw ConfigError("no path for " + name + " (pass the option or set --out)");
    return fs::path(cfg.out_dir) / name;
  }
};

fs::path meta_path_for(const fs::path& trigger_ngt) {
  fs::path p = trigger_ngt;
  return p.replace_filename(p.stem().string() + "_meta.json");
}

SoftHistogramSpec spec_from(const ExperimentConfig& c) {
  return make_histogram_spec(c.num_bins, c.range_lo, c.range_hi, c.omega);
}

DiffusionSchedule schedule_from(const ExperimentConfig& c) {
  return make_schedule(c.timesteps, c.beta_start, c.beta_end);
}

ForgeConfig forge_config_from(const ExperimentConfig& c, double phi_base) {
  ForgeConfig f;
  f.gamma = c.gamma;
  f.tau = c.tau;
  f.phi_th = c.phi_th_scale * phi_base;
  f.trigger_lr = c.trigger_lr;
  f.model_lr = c.model_lr;
  f.steps_phase1 = c.steps_phase1;
  f.steps_phase2 = c.steps_phase2;
  f.batch_size = c.batch_size;
  f.n_pdd = c.n_pdd;
  f.nc_term = c.nc_term;
  f.seed = {c.seed, 0};
  return f;
}

TargetSampler target_from(const ExperimentConfig& c, const ToyDataset& ds) {
  if (c.attack_mode == "category") return category_target_sampler(ds, c.target_class);
  return instance_target_sampler(ds);
}

void warn_sharp_omega(const ExperimentConfig& c) {
  if (c.omega > 6.0)
    std::fprintf(stderr,
                 "warning: omega = %s sharpens the soft histogram beyond its validated "
                 "range; gradients may overflow\n",
                 format_real9(c.omega).c_str());
}

// Refuse artifact combinations from different experiments.
void verify_trigger_compat(const TriggerArtifact& art, const fs::path& calib_path,
                           const ExperimentConfig& cfg) {
  const std::string calib_fp = hex64(fnv1a_file(calib_path));
  if (art.calib_fingerprint != calib_fp)
    throw ConfigError("trigger was forged against calibration " + art.calib_fingerprint +
                      ", but " + calib_path.string() + " hashes to " + calib_fp);
  const std::string want = config_identity_hash(cfg);
  if (art.config_hash != want)
    throw ConfigError("trigger was forged under config identity " + art.config_hash +
                      ", current config hashes to " + want);
}

void verify_schedule_compat(const DiffusionSchedule& ckpt, const ExperimentConfig& cfg) {
  if (ckpt.T != cfg.timesteps || ckpt.beta_start != cfg.beta_start ||
      ckpt.beta_end != cfg.beta_end)
    throw ConfigError("checkpoint schedule (T=" + std::to_string(ckpt.T) +
                      ") does not match the configured schedule (T=" +
                      std::to_string(cfg.timesteps) + ")");
}

int cmd_calibrate(Cli& cli) {
  const ExperimentConfig& c = cli.cfg;
  warn_sharp_omega(c);
  DetectorCalibration cal = calibrate(c.dims, spec_from(c), c.lambda, c.n_anchor, c.n_calib,
                                      {c.seed, streams::kAnchor}, c.analytic_anchor);
  save_calibration(cli.out("calibration.json"), cal);
  write_resolved_config(cli.out("resolved_config.ini"), c);
  std::printf("calibration: phi_base=%s mean=%s std=%s -> %s\n", format_real9(cal.phi_base).c_str(),
              format_real9(cal.mean_d).c_str(), format_real9(cal.std_d).c_str(),
              cli.out("calibration.json").string().c_str());
  return kExitOk;
}

int score_inputs(const fs::path& calib_path, const std::vector<std::string>& inputs,
                 bool verdicts, bool strict) {
  DetectorCalibration cal = load_calibration(calib_path);
  bool any_poisoned = false;
  for (const std::string& file : inputs) {
    NoiseTensor x = load_ngt(file);
    double s;
    try {
      s = pdd_score(x, cal);
    } catch (const ShapeError& e) {
      throw ShapeError(file + ": " + e.what());
    }
    if (verdicts) {
      bool poisoned = detect_poisoned(s, cal.phi_base);
      any_poisoned |= poisoned;
      std::printf("%s\t%s\t%s\t%s\n", file.c_str(), format_real(s).c_str(),
                  format_real(cal.phi_base).c_str(), poisoned ? "POISONED" : "CLEAN");
    } else {
      std::printf("%s\t%s\n", file.c_str(), format_real(s).c_str());
    }
  }
  return (strict && any_poisoned) ? kExitPoisoned : kExitOk;
}

int cmd_pretrain(Cli& cli) {
  const ExperimentConfig& c = cli.cfg;
  ToyDataset ds = make_toy_dataset();
  DiffusionSchedule sched = schedule_from(c);
  RngStream init_rng(c.seed, streams::kModelInit);
  DenoiserModel model = make_denoiser(c.dims, c.hidden_dim, init_rng);
  model.seed = c.seed;

  PretrainResult res = pretrain_benign(std::move(model), ds, sched, c.steps_pretrain,
                                       c.batch_size, c.model_lr, {c.seed, streams::kPretrain});
  write_trace_csv(cli.out("pretrain_trace.csv"), res.trace);
  write_resolved_config(cli.out("resolved_config.ini"), c);
  if (res.trace.aborted) {
    std::fprintf(stderr, "pretraining aborted at step %ld (non-finite or diverging loss); "
                         "trace flushed\n",
                 res.trace.records.empty() ? 0L : res.trace.records.back().step);
    return kExitNumeric;
  }
  save_checkpoint(cli.out("benign_model.json"), res.model, sched);
  std::printf("pretrained %ld steps, final loss %s -> %s\n", c.steps_pretrain,
              format_real9(res.trace.records.back().l_total).c_str(),
              cli.out("benign_model.json").string().c_str());
  return kExitOk;
}

int cmd_forge(Cli& cli, const std::string& calib_opt, const std::string& model_opt) {
  const ExperimentConfig& c = cli.cfg;
  warn_sharp_omega(c);
  const fs::path calib_path = cli.artifact(calib_opt, "calibration.json");
  DetectorCalibration cal = load_calibration(calib_path);
  ModelCheckpoint ckpt = load_checkpoint(cli.artifact(model_opt, "benign_model.json"));
  verify_schedule_compat(ckpt.sched, c);
  ToyDataset ds = make_toy_dataset();

  ForgeConfig fc = forge_config_from(c, cal.phi_base);
  Phase1Result res =
      train_trigger_phase1(ckpt.model, ds, cal, ckpt.sched, fc, target_from(c, ds));
  write_trace_csv(cli.out("forge_trace.csv"), res.trace);
  write_resolved_config(cli.out("resolved_config.ini"), c);
  if (res.trace.aborted) {
    std::fprintf(stderr, "phase 1 aborted at step %ld (non-finite loss); trace flushed\n",
                 res.trace.records.back().step);
    return kExitNumeric;
  }
  save_trigger_artifact(cli.out("trigger.ngt"), cli.out("trigger_meta.json"), res.trigger,
                        fc.phi_th, hex64(fnv1a_file(calib_path)), config_identity_hash(c),
                        res.final_mean_dd);
  std::printf("forged trigger: final mean soft score %s vs margin %s -> %s\n",
              format_real9(res.final_mean_dd).c_str(), format_real9(fc.phi_th).c_str(),
              cli.out("trigger.ngt").string().c_str());
  return kExitOk;
}

int cmd_train_backdoor(Cli& cli, const std::string& calib_opt, const std::string& model_opt,
                       const std::string& trigger_opt) {
  const ExperimentConfig& c = cli.cfg;
  const fs::path calib_path = cli.artifact(calib_opt, "calibration.json");
  DetectorCalibration cal = load_calibration(calib_path);
  ModelCheckpoint ckpt = load_checkpoint(cli.artifact(model_opt, "benign_model.json"));
  verify_schedule_compat(ckpt.sched, c);
  const fs::path trig_path = cli.artifact(trigger_opt, "trigger.ngt");
  TriggerArtifact art = load_trigger_artifact(trig_path, meta_path_for(trig_path));
  verify_trigger_compat(art, calib_path, c);
  ToyDataset ds = make_toy_dataset();

  ForgeConfig fc = forge_config_from(c, cal.phi_base);
  Phase2Result res = train_model_phase2(std::move(ckpt.model), ds, art.trigger, cal,
                                        ckpt.sched, fc, target_from(c, ds));
  write_trace_csv(cli.out("backdoor_trace.csv"), res.trace);
  write_resolved_config(cli.out("resolved_config.ini"), c);
  if (res.trace.aborted) {
    std::fprintf(stderr, "phase 2 aborted at step %ld (non-finite loss); trace flushed\n",
                 res.trace.records.back().step);
    return kExitNumeric;
  }
  save_checkpoint(cli.out("backdoored_model.json"), res.model, ckpt.sched);
  std::printf("backdoored model after %ld steps -> %s\n", c.steps_phase2,
              cli.out("backdoored_model.json").string().c_str());
  return kExitOk;
}

int cmd_sample(Cli& cli, const std::string& model_opt, const std::string& trigger_opt,
               const std::string& mode, const std::string& sampler, int steps, int n) {
  const ExperimentConfig& c = cli.cfg;
  if (mode != "benign" && mode != "poisoned")
    throw ConfigError("mode must be benign or poisoned, got '" + mode + "'");
  if (sampler != "ddpm" && sampler != "ddim")
    throw ConfigError("sampler must be ddpm or ddim, got '" + sampler + "'");
  if (n < 1) throw ConfigError("need n >= 1 samples");
  const bool poisoned = mode == "poisoned";

  ModelCheckpoint ckpt = load_checkpoint(cli.artifact(model_opt, "backdoored_model.json"));
  TriggerArtifact art;
  if (poisoned) {
    if (trigger_opt.empty() && c.out_dir.empty())
      throw ConfigError("poisoned sampling needs --trigger");
    const fs::path trig_path = cli.artifact(trigger_opt, "trigger.ngt");
    art = load_trigger_artifact(trig_path, meta_path_for(trig_path));
    if (!same_shape(art.trigger.delta.shape, ckpt.model.data_shape))
      throw ShapeError("trigger shape " + shape_to_string(art.trigger.delta.shape) +
                       " does not match model shape " +
                       shape_to_string(ckpt.model.data_shape));
  }
  if (sampler == "ddim") (void)ddim_timesteps(ckpt.sched.T, steps);  // validates steps <= T

  fs::create_directories(cli.out("samples"));
  for (int i = 0; i < n; ++i) {
    RngStream rng(c.seed, streams::kSampleBase + static_cast<std::uint64_t>(i));
    NoiseTensor eps = sample_gaussian(ckpt.model.data_shape, rng);
    NoiseTensor start = poisoned ? blend_trigger(art.trigger, eps) : std::move(eps);
    NoiseTensor x0 =
        sampler == "ddpm"
            ? ddpm_sample(ckpt.model, start, ckpt.sched, rng, poisoned,
                          poisoned ? &art.trigger : nullptr)
            : ddim_sample(ckpt.model, start, ckpt.sched, steps, poisoned,
                          poisoned ? &art.trigger : nullptr);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04d.ngt", i);
    save_ngt(cli.out("samples") / name, x0);
  }
  write_resolved_config(cli.out("resolved_config.ini"), c);
  std::printf("%d %s %s samples -> %s\n", n, mode.c_str(), sampler.c_str(),
              (cli.out("samples")).string().c_str());
  return kExitOk;
}

int cmd_evaluate(Cli& cli, const std::string& calib_opt, const std::string& model_opt,
                 const std::string& trigger_opt) {
  const ExperimentConfig& c = cli.cfg;
  const fs::path calib_path = cli.artifact(calib_opt, "calibration.json");
  DetectorCalibration cal = load_calibration(calib_path);
  ModelCheckpoint ckpt = load_checkpoint(cli.artifact(model_opt, "backdoored_model.json"));
  verify_schedule_compat(ckpt.sched, c);
  const fs::path trig_path = cli.artifact(trigger_opt, "trigger.ngt");
  TriggerArtifact art = load_trigger_artifact(trig_path, meta_path_for(trig_path));
  verify_trigger_compat(art, calib_path, c);
  ToyDataset ds = make_toy_dataset();

  EvalReport rep = run_evaluation(ckpt.model, art.trigger, cal, ckpt.sched, ds, c);
  rep.calib_fingerprint = hex64(fnv1a_file(calib_path));
  save_report(cli.out("eval_report.json"), rep);
  write_resolved_config(cli.out("resolved_config.ini"), c);
  std::printf("pass_rate=%s detection_rate=%s asr=%s mse_to_target=%s -> %s\n",
              format_real9(rep.pass_rate).c_str(), format_real9(rep.detection_rate).c_str(),
              format_real9(rep.asr).c_str(), format_real9(rep.mse_to_target).c_str(),
              cli.out("eval_report.json").string().c_str());
  return kExitOk;
}

int cmd_export_hist(const fs::path& calib_path, const fs::path& input_path,
                    const fs::path& csv_path) {
  DetectorCalibration cal = load_calibration(calib_path);
  NoiseTensor x = load_ngt(input_path);
  double score;
  try {
    score = pdd_score(x, cal);
  } catch (const ShapeError& e) {
    throw ShapeError(input_path.string() + ": " + e.what());
  }
  // Pooled view of the whole tensor for plotting; the score in the header
  // is the deployed per-channel statistic.
  Eigen::ArrayXd pooled = normalize_histogram(hard_histogram(x.data, cal.spec), cal.lambda);
  std::string out = "# pdd=" + format_real9(score) + "\n";
  out += "bin_center,input_prob,anchor_prob\n";
  for (Eigen::Index i = 0; i < cal.spec.centers.size(); ++i) {
    out += format_real9(cal.spec.centers[i]) + "," + format_real9(pooled[i]) + "," +
           format_real9(cal.anchor[i]) + "\n";
  }
  write_text_file(csv_path, out);
  std::printf("pdd=%s -> %s\n", format_real9(score).c_str(), csv_path.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  CLI::App app{"Poisoned-noise detector and trigger-forging pipeline"};
  app.require_subcommand(1);
  app.add_option("--config", cli.config_path, "experiment config file");
  app.add_option("--out", cli.out_dir, "output directory (overrides [output] out_dir)");
  app.add_option("--seed", cli.seed, "seed override")->each([&](const std::string&) {
    cli.seed_set = true;
  });

  int rc = 0;

  CLI::App* calib_cmd = app.add_subcommand("calibrate", "calibrate the detector");
  calib_cmd->fallthrough();
  calib_cmd->callback([&] {
    cli.resolve();
    rc = cmd_calibrate(cli);
  });

  std::vector<std::string> inputs;
  std::string calib_opt, model_opt, trigger_opt;

  CLI::App* score_cmd = app.add_subcommand("score", "print PDD scores for NGT files");
  score_cmd->fallthrough();
  score_cmd->add_option("--calib", calib_opt, "calibration file");
  score_cmd->add_option("inputs", inputs, "NGT files")->required();
  score_cmd->callback([&] {
    cli.resolve();
    rc = score_inputs(cli.artifact(calib_opt, "calibration.json"), inputs, false, false);
  });

  bool strict = false;
  CLI::App* detect_cmd = app.add_subcommand("detect", "classify NGT files as clean/poisoned");
  detect_cmd->fallthrough();
  detect_cmd->add_option("--calib", calib_opt, "calibration file");
  detect_cmd->add_flag("--strict", strict, "exit 3 if any input is poisoned");
  detect_cmd->add_option("inputs", inputs, "NGT files")->required();
  detect_cmd->callback([&] {
    cli.resolve();
    rc = score_inputs(cli.artifact(calib_opt, "calibration.json"), inputs, true, strict);
  });

  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "train the benign denoiser");
  pretrain_cmd->fallthrough();
  pretrain_cmd->callback([&] {
    cli.resolve();
    rc = cmd_pretrain(cli);
  });

  CLI::App* forge_cmd = app.add_subcommand("forge", "learn a detection-evading trigger");
  forge_cmd->fallthrough();
  forge_cmd->add_option("--calib", calib_opt, "calibration file");
  forge_cmd->add_option("--model", model_opt, "pretrained benign model");
  forge_cmd->callback([&] {
    cli.resolve();
    rc = cmd_forge(cli, calib_opt, model_opt);
  });

  CLI::App* backdoor_cmd =
      app.add_subcommand("train-backdoor", "train the backdoored denoiser");
  backdoor_cmd->fallthrough();
  backdoor_cmd->add_option("--calib", calib_opt, "calibration file");
  backdoor_cmd->add_option("--model", model_opt, "pretrained benign model");
  backdoor_cmd->add_option("--trigger", trigger_opt, "forged trigger NGT");
  backdoor_cmd->callback([&] {
    cli.resolve();
    rc = cmd_train_backdoor(cli, calib_opt, model_opt, trigger_opt);
  });

  std::string mode, sampler_name = "ddpm";
  int steps = 20, n_samples = 8;
  CLI::App* sample_cmd = app.add_subcommand("sample", "reverse-sample images");
  sample_cmd->fallthrough();
  sample_cmd->add_option("--model", model_opt, "model checkpoint");
  sample_cmd->add_option("--trigger", trigger_opt, "trigger NGT (poisoned mode)");
  sample_cmd->add_option("--mode", mode, "benign or poisoned")->required();
  sample_cmd->add_option("--sampler", sampler_name, "ddpm or ddim");
  sample_cmd->add_option("--steps", steps, "DDIM steps");
  sample_cmd->add_option("--n", n_samples, "number of samples");
  sample_cmd->callback([&] {
    cli.resolve();
    rc = cmd_sample(cli, model_opt, trigger_opt, mode, sampler_name, steps, n_samples);
  });

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score the attack against the detector");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--calib", calib_opt, "calibration file");
  eval_cmd->add_option("--model", model_opt, "backdoored model checkpoint");
  eval_cmd->add_option("--trigger", trigger_opt, "forged trigger NGT");
  eval_cmd->callback([&] {
    cli.resolve();
    rc = cmd_evaluate(cli, calib_opt, model_opt, trigger_opt);
  });

  std::string hist_input, hist_csv;
  CLI::App* hist_cmd = app.add_subcommand("export-hist", "dump input vs anchor histograms");
  hist_cmd->fallthrough();
  hist_cmd->add_option("--calib", calib_opt, "calibration file");
  hist_cmd->add_option("input", hist_input, "NGT file")->required();
  hist_cmd->add_option("csv", hist_csv, "output CSV path")->required();
  hist_cmd->callback([&] {
    cli.resolve();
    rc = cmd_export_hist(cli.artifact(calib_opt, "calibration.json"), hist_input, hist_csv);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return rc;
}
