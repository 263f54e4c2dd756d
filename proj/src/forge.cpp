#include "pddlab/forge.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

#include <nlohmann/json.hpp>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"
#include "pddlab/ngt.hpp"

namespace pddlab {
namespace {

void check_forge_config(const ForgeConfig& cfg) {
  if (cfg.gamma < 0.0 || cfg.gamma > 1.0)
    throw ConfigError("gamma must be in [0, 1], got " + format_real(cfg.gamma));
  if (cfg.tau < 0.0) throw ConfigError("tau must be >= 0, got " + format_real(cfg.tau));
  if (cfg.phi_th < 0.0)
    throw ConfigError("phi_th must be >= 0, got " + format_real(cfg.phi_th));
  if (cfg.trigger_lr <= 0.0 || cfg.model_lr <= 0.0)
    throw ConfigError("learning rates must be positive");
  if (cfg.steps_phase1 < 1 || cfg.steps_phase2 < 1)
    throw ConfigError("step budgets must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.n_pdd < 1) throw ConfigError("n_pdd must be at least 1");
}

void check_shapes(const Shape& model_shape, const Shape& data_shape, const Shape& calib_shape) {
  if (!same_shape(model_shape, data_shape) || !same_shape(model_shape, calib_shape))
    throw ShapeError("model " + shape_to_string(model_shape) + ", data " +
                     shape_to_string(data_shape) + ", calibration " +
                     shape_to_string(calib_shape) + " must share one shape");
}

// Uniform timestep in {1, ..., T}. next_unit() < 1 keeps the top bucket fair.
int draw_timestep(RngStream& rng, int T) {
  int t = 1 + static_cast<int>(rng.next_unit() * static_cast<double>(T));
  return t > T ? T : t;
}

void fill_rows_gaussian(Eigen::MatrixXd& out, Eigen::Index row, Eigen::ArrayXd& buf,
                        RngStream& rng) {
  rng.fill_gaussian(buf.data(), static_cast<std::size_t>(buf.size()));
  out.row(row) = buf.matrix().transpose();
}

std::uint64_t trigger_checksum(const TriggerPattern& trigger) {
  return fnv1a(trigger.delta.data.data(),
               static_cast<std::size_t>(trigger.delta.data.size()) * sizeof(double));
}

}  // namespace

TargetSampler instance_target_sampler(const ToyDataset& ds) {
  NoiseTensor target = toy_target_instance(ds);
  return [target](RngStream&) { return target; };
}

TargetSampler category_target_sampler(const ToyDataset& ds, int target_class) {
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= ds.templates.size())
    throw ConfigError("target_class " + std::to_string(target_class) + " out of range [0, " +
                      std::to_string(ds.templates.size() - 1) + "]");
  ToyDataset copy = ds;  // keep the sampler valid past the caller's dataset
  return [copy, target_class](RngStream& rng) {
    return toy_sample_category(copy, target_class, rng);
  };
}

NcResult nc_loss(const DenoiserModel& m, const TriggerPattern& trigger,
                 const NoiseTensor& x0_tilde, int t, const NoiseTensor& eps,
                 const DiffusionSchedule& sched) {
  const Eigen::Index n = static_cast<Eigen::Index>(x0_tilde.numel());
  Eigen::MatrixXd x0(1, n), ep(1, n);
  x0.row(0) = x0_tilde.data.matrix().transpose();
  ep.row(0) = eps.data.matrix().transpose();
  Eigen::MatrixXd input_grads;
  backdoor_loss_batch(m, x0, {t}, ep, trigger, sched, nullptr, &input_grads);

  NcResult r;
  // Value through the single-example path so the two entry points agree
  // bit-for-bit; only the gradient comes from the batch machinery.
  r.loss = backdoor_loss(m, x0_tilde, t, eps, trigger, sched);
  const double chain = std::sqrt(1.0 - sched.alpha_bar_at(t)) * (1.0 - trigger.gamma);
  r.grad_delta = chain * input_grads.row(0).transpose().array();
  return r;
}

NcResult nc_loss_batch(const DenoiserModel& m, const TriggerPattern& trigger,
                       const Eigen::MatrixXd& x0_tilde, const std::vector<int>& ts,
                       const Eigen::MatrixXd& eps, const DiffusionSchedule& sched) {
  Eigen::MatrixXd input_grads;
  NcResult r;
  r.loss = backdoor_loss_batch(m, x0_tilde, ts, eps, trigger, sched, nullptr, &input_grads);
  // d x~_t / d delta = sqrt(1-abar_t) (1-gamma) I; input_grads rows already
  // carry the 1/batch factor.
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x0_tilde.cols());
  for (Eigen::Index i = 0; i < input_grads.rows(); ++i)
    acc += std::sqrt(1.0 - sched.alpha_bar_at(ts[static_cast<std::size_t>(i)])) *
           input_grads.row(i);
  r.grad_delta = (1.0 - trigger.gamma) * acc.transpose().array();
  return r;
}

PddLossEval eval_pdd_loss(const TriggerPattern& trigger, const DetectorCalibration& calib,
                          const Eigen::MatrixXd& eps_draws, double phi_th) {
  if (!same_shape(trigger.delta.shape, calib.shape))
    throw ShapeError("trigger " + shape_to_string(trigger.delta.shape) +
                     " does not match calibration " + shape_to_string(calib.shape));
  const Eigen::Index n = eps_draws.rows();
  if (n == 0) throw ConfigError("eval_pdd_loss needs at least one noise draw");
  if (eps_draws.cols() != trigger.delta.data.size())
    throw ShapeError("noise draws have " + std::to_string(eps_draws.cols()) +
                     " columns, trigger has " + std::to_string(trigger.delta.data.size()) +
                     " elements");

  PddLossEval ev;
  ev.scores.resize(n);
  ev.grad_delta = Eigen::ArrayXd::Zero(eps_draws.cols());
  NoiseTensor x = make_zeros(calib.shape);
  for (Eigen::Index j = 0; j < n; ++j) {
    x.data = trigger.mu_delta.data + trigger.gamma * eps_draws.row(j).transpose().array();
    double score = 0.0;
    Eigen::ArrayXd g = pdd_score_diff_grad(x, calib, &score);
    ev.scores[j] = score;
    // Hinge subgradient: zero at and below the margin.
    if (score > phi_th) ev.grad_delta += g;
  }
  ev.loss = (ev.scores - phi_th).max(0.0).mean();
  ev.mean_dd = ev.scores.mean();
  ev.grad_delta *= (1.0 - trigger.gamma) / static_cast<double>(n);
  return ev;
}

Phase1Result train_trigger_phase1(const DenoiserModel& frozen, const ToyDataset& ds,
                                  const DetectorCalibration& calib,
                                  const DiffusionSchedule& sched, const ForgeConfig& cfg,
                                  const TargetSampler& target) {
  check_forge_config(cfg);
  check_shapes(frozen.data_shape, ds.shape, calib.shape);
  if (!target) throw ConfigError("phase 1 needs a target sampler");
  if (cfg.phi_th >= calib.phi_base)
    std::fprintf(stderr,
                 "warning: evasion margin %s is not below the detection threshold %s; "
                 "the hinge is already satisfied by clean-looking noise\n",
                 format_real(cfg.phi_th).c_str(), format_real(calib.phi_base).c_str());

  const std::uint64_t model_sum = param_checksum(frozen);
  const Eigen::Index n = static_cast<Eigen::Index>(shape_numel(ds.shape));
  RngStream rng(cfg.seed.seed, streams::kPhase1);

  NoiseTensor delta = make_zeros(ds.shape);
  for (Eigen::Index i = 0; i < n; ++i)
    delta.data[i] = cfg.init_scale * 2.0 * rng.next_unit() - cfg.init_scale;
  TriggerPattern trigger = make_trigger(std::move(delta), cfg.gamma);
  AdamState adam = make_adam(n);

  Phase1Result res;
  res.trace.records.reserve(static_cast<std::size_t>(cfg.steps_phase1));

  const int batch = cfg.batch_size;
  Eigen::MatrixXd x0(batch, n), eps(batch, n), eps_pdd(cfg.n_pdd, n);
  std::vector<int> ts(static_cast<std::size_t>(batch));
  Eigen::ArrayXd buf(n);

  for (long step = 1; step <= cfg.steps_phase1; ++step) {
    for (int i = 0; i < batch; ++i) {
      x0.row(i) = target(rng).data.matrix().transpose();
      ts[static_cast<std::size_t>(i)] = draw_timestep(rng, sched.T);
      fill_rows_gaussian(eps, i, buf, rng);
    }
    for (int j = 0; j < cfg.n_pdd; ++j) fill_rows_gaussian(eps_pdd, j, buf, rng);

    NcResult nc;
    nc.grad_delta = Eigen::ArrayXd::Zero(n);
    if (cfg.nc_term) nc = nc_loss_batch(frozen, trigger, x0, ts, eps, sched);
    PddLossEval pdd = eval_pdd_loss(trigger, calib, eps_pdd, cfg.phi_th);
    const double l_total = nc.loss + cfg.tau * pdd.loss;

    res.trace.records.push_back({step, pdd.loss, nc.loss, l_total, pdd.mean_dd,
                                 trigger.delta.data.abs().mean()});
    res.final_mean_dd = pdd.mean_dd;
    if (!std::isfinite(l_total)) {
      res.trace.aborted = true;
      break;
    }
    const Eigen::ArrayXd grad = nc.grad_delta + cfg.tau * pdd.grad_delta;
    // A non-finite gradient with a finite loss skips the update but keeps
    // training; the row above already records the step.
    if (adam_step(trigger.delta.data, grad, adam, cfg.trigger_lr))
      refresh_trigger_mean(trigger);
  }

  if (!res.trace.aborted) {
    // Fresh 64-draw probe of the finished trigger; this is what the sidecar
    // reports, independent of the last step's draws.
    Eigen::MatrixXd probe(64, n);
    for (int j = 0; j < 64; ++j) fill_rows_gaussian(probe, j, buf, rng);
    res.final_mean_dd = eval_pdd_loss(trigger, calib, probe, cfg.phi_th).mean_dd;
  }
  if (param_checksum(frozen) != model_sum)
    throw Error("frozen denoiser changed during phase 1");
  res.trigger = std::move(trigger);
  return res;
}

Phase2Result train_model_phase2(DenoiserModel model, const ToyDataset& ds,
                                const TriggerPattern& trigger,
                                const DetectorCalibration& calib,
                                const DiffusionSchedule& sched, const ForgeConfig& cfg,
                                const TargetSampler& target, const Phase2Probe& probe,
                                long probe_every) {
  check_forge_config(cfg);
  check_shapes(model.data_shape, ds.shape, calib.shape);
  check_shapes(model.data_shape, trigger.delta.shape, calib.shape);
  if (!target) throw ConfigError("phase 2 needs a target sampler");

  const std::uint64_t trig_sum = trigger_checksum(trigger);
  const Eigen::Index n = static_cast<Eigen::Index>(shape_numel(ds.shape));
  RngStream rng(cfg.seed.seed, streams::kPhase2);
  Eigen::ArrayXd buf(n);

  // The trigger is frozen, so its detector probe is one number for the whole
  // phase: evaluate it once on a dedicated stream and reuse it in the trace.
  RngStream probe_rng(cfg.seed.seed, streams::kPhase2Probe);
  Eigen::MatrixXd eps_probe(cfg.n_pdd, n);
  for (int j = 0; j < cfg.n_pdd; ++j) fill_rows_gaussian(eps_probe, j, buf, probe_rng);
  const PddLossEval frozen_probe = eval_pdd_loss(trigger, calib, eps_probe, cfg.phi_th);
  const double abs_mean_delta = trigger.delta.data.abs().mean();

  Eigen::ArrayXd pvec = params_to_vec(model);
  AdamState adam = make_adam(pvec.size());

  Phase2Result res;
  res.trace.records.reserve(static_cast<std::size_t>(cfg.steps_phase2));

  const int batch = cfg.batch_size;
  Eigen::MatrixXd x0(batch, n), eps(batch, n);
  std::vector<int> ts(static_cast<std::size_t>(batch));
  long last_probe_step = 0;

  for (long step = 1; step <= cfg.steps_phase2; ++step) {
    for (int i = 0; i < batch; ++i) {
      x0.row(i) = toy_sample_benign(ds, rng).data.matrix().transpose();
      ts[static_cast<std::size_t>(i)] = draw_timestep(rng, sched.T);
      fill_rows_gaussian(eps, i, buf, rng);
    }
    DenoiserGrads grads = make_zero_grads(model);
    const double l_benign = benign_loss_batch(model, x0, ts, eps, sched, &grads);

    for (int i = 0; i < batch; ++i) {
      x0.row(i) = target(rng).data.matrix().transpose();
      ts[static_cast<std::size_t>(i)] = draw_timestep(rng, sched.T);
      fill_rows_gaussian(eps, i, buf, rng);
    }
    DenoiserGrads grads_poisoned = make_zero_grads(model);
    const double l_poisoned =
        backdoor_loss_batch(model, x0, ts, eps, trigger, sched, &grads_poisoned);
    accumulate(grads, grads_poisoned);

    const double l_total = l_benign + l_poisoned;
    res.trace.records.push_back({step, frozen_probe.loss, l_poisoned, l_total,
                                 frozen_probe.mean_dd, abs_mean_delta});
    if (!std::isfinite(l_total)) {
      res.trace.aborted = true;
      break;
    }
    const Eigen::ArrayXd gvec = grads_to_vec(model, grads);
    if (adam_step(pvec, gvec, adam, cfg.model_lr)) {
      vec_to_params(model, pvec);
      model.step += 1;
    }
    if (probe && probe_every > 0 && step % probe_every == 0) {
      probe(step, model);
      last_probe_step = step;
    }
  }

  if (probe && !res.trace.aborted && last_probe_step != cfg.steps_phase2)
    probe(cfg.steps_phase2, model);
  if (trigger_checksum(trigger) != trig_sum)
    throw Error("trigger changed during phase 2");
  res.model = std::move(model);
  return res;
}

PretrainResult pretrain_benign(DenoiserModel model, const ToyDataset& ds,
                               const DiffusionSchedule& sched, long steps, int batch_size,
                               double lr, RngSeed seed) {
  if (steps < 1) throw ConfigError("pretraining needs at least 1 step");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (!same_shape(model.data_shape, ds.shape))
    throw ShapeError("model " + shape_to_string(model.data_shape) + " does not match data " +
                     shape_to_string(ds.shape));

  const Eigen::Index n = static_cast<Eigen::Index>(shape_numel(ds.shape));
  RngStream rng(seed);
  Eigen::ArrayXd pvec = params_to_vec(model);
  AdamState adam = make_adam(pvec.size());

  PretrainResult res;
  res.trace.records.reserve(static_cast<std::size_t>(steps));

  Eigen::MatrixXd x0(batch_size, n), eps(batch_size, n);
  std::vector<int> ts(static_cast<std::size_t>(batch_size));
  Eigen::ArrayXd buf(n);
  double initial_loss = -1.0;
  int high_streak = 0;

  for (long step = 1; step <= steps; ++step) {
    for (int i = 0; i < batch_size; ++i) {
      x0.row(i) = toy_sample_benign(ds, rng).data.matrix().transpose();
      ts[static_cast<std::size_t>(i)] = draw_timestep(rng, sched.T);
      fill_rows_gaussian(eps, i, buf, rng);
    }
    DenoiserGrads grads = make_zero_grads(model);
    const double loss = benign_loss_batch(model, x0, ts, eps, sched, &grads);

    res.trace.records.push_back({step, 0.0, loss, loss, 0.0, 0.0});
    if (!std::isfinite(loss)) {
      res.trace.aborted = true;
      break;
    }
    if (initial_loss < 0.0) initial_loss = loss;
    if (loss > 10.0 * initial_loss) {
      if (++high_streak >= 100) {
        res.trace.aborted = true;
        break;
      }
    } else {
      high_streak = 0;
    }
    const Eigen::ArrayXd gvec = grads_to_vec(model, grads);
    if (adam_step(pvec, gvec, adam, lr)) {
      vec_to_params(model, pvec);
      model.step += 1;
    }
  }
  res.model = std::move(model);
  return res;
}

void save_trigger_artifact(const std::filesystem::path& ngt_path,
                           const std::filesystem::path& meta_path,
                           const TriggerPattern& trigger, double phi_th,
                           const std::string& calib_fingerprint,
                           const std::string& config_hash, double final_mean_dd) {
  save_ngt(ngt_path, trigger.delta);
  std::string out;
  out += "{\n";
  out += "  \"format_version\": 1,\n";
  out += "  \"gamma\": " + format_real(trigger.gamma) + ",\n";
  out += "  \"phi_th\": " + format_real(phi_th) + ",\n";
  out += "  \"calib_fingerprint\": \"" + calib_fingerprint + "\",\n";
  out += "  \"config_hash\": \"" + config_hash + "\",\n";
  out += "  \"final_mean_dd\": " + format_real(final_mean_dd) + "\n";
  out += "}\n";
  write_text_file(meta_path, out);
}

TriggerArtifact load_trigger_artifact(const std::filesystem::path& ngt_path,
                                      const std::filesystem::path& meta_path) {
  TriggerArtifact art;
  NoiseTensor delta = load_ngt(ngt_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(meta_path));
    if (j.at("format_version").get<int>() != 1)
      throw FormatError("unsupported trigger metadata version");
    art.phi_th = j.at("phi_th").get<double>();
    art.calib_fingerprint = j.at("calib_fingerprint").get<std::string>();
    art.config_hash = j.at("config_hash").get<std::string>();
    art.final_mean_dd = j.at("final_mean_dd").get<double>();
    art.trigger = make_trigger(std::move(delta), j.at("gamma").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  return art;
}

}  // namespace pddlab
