#include <doctest.h>

#include <cmath>
#include <vector>

#include "pddlab/detector.hpp"
#include "pddlab/diffusion.hpp"
#include "pddlab/errors.hpp"
#include "pddlab/toy_data.hpp"

using namespace pddlab;

namespace {

DenoiserModel random_model(const Shape& shape, int hidden, std::uint64_t seed) {
  RngStream rng(seed, streams::kModelInit);
  return make_denoiser(shape, hidden, rng);
}

DenoiserModel zero_model(const Shape& shape, int hidden) {
  DenoiserModel m = random_model(shape, hidden, 0);
  vec_to_params(m, Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(param_count(m))));
  return m;
}

}  // namespace

TEST_CASE("schedule construction and accessors") {
  DiffusionSchedule s = make_schedule(1, 0.75, 0.75);
  CHECK(s.beta_at(1) == 0.75);
  CHECK(s.alpha_at(1) == 0.25);
  CHECK(s.alpha_bar_at(1) == 0.25);
  CHECK(s.alpha_bar_at(0) == 1.0);
  CHECK_THROWS_AS(s.beta_at(0), Error);
  CHECK_THROWS_AS(s.beta_at(2), Error);

  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ConfigError);
}

TEST_CASE("constant-beta schedule gives geometric alpha products") {
  DiffusionSchedule s = make_schedule(10, 0.02, 0.02);
  for (int t = 1; t <= 10; ++t) {
    CHECK(s.alpha_bar_at(t) == doctest::Approx(std::pow(0.98, t)).epsilon(1e-12));
  }
}

TEST_CASE("linear schedule endpoints and log-domain product") {
  const int T = 100;
  DiffusionSchedule s = make_schedule(T, 1e-4, 0.05);
  CHECK(s.beta_at(1) == 1e-4);
  CHECK(s.beta_at(T) == 0.05);
  CHECK(s.beta_at(2) > s.beta_at(1));

  double log_prod = 0.0;
  for (int i = 0; i < T; ++i) {
    double beta = 1e-4 + (0.05 - 1e-4) * i / (T - 1.0);
    log_prod += std::log1p(-beta);
  }
  CHECK(s.alpha_bar_at(T) == doctest::Approx(std::exp(log_prod)).epsilon(1e-12));
  for (int t = 2; t <= T; ++t) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
}

TEST_CASE("forward diffusion hand values") {
  DiffusionSchedule s = make_schedule(1, 0.75, 0.75);  // abar = 0.25
  NoiseTensor x0 = make_filled({4}, 1.0);
  NoiseTensor eps = make_filled({4}, 2.0);
  NoiseTensor xt = forward_diffuse(x0, 1, eps, s);
  double want = 0.5 + std::sqrt(0.75) * 2.0;
  for (int i = 0; i < 4; ++i) CHECK(xt.data[i] == doctest::Approx(want).epsilon(1e-15));

  TriggerPattern trig = make_trigger(make_filled({4}, 1.0), 0.6);  // mu = 0.4
  NoiseTensor x0t = make_filled({4}, 0.8);
  NoiseTensor epsn = make_filled({4}, -1.0);
  NoiseTensor xbt = forward_diffuse_backdoored(x0t, 1, epsn, trig, s);
  double want_b = 0.5 * 0.8 + std::sqrt(0.75) * (0.4 + 0.6 * -1.0);
  CHECK(want_b == doctest::Approx(0.2267949192431123).epsilon(1e-12));
  for (int i = 0; i < 4; ++i) CHECK(xbt.data[i] == doctest::Approx(want_b).epsilon(1e-15));
}

TEST_CASE("gamma of one makes the backdoored forward collapse to benign") {
  DiffusionSchedule s = make_schedule(10, 1e-3, 0.02);
  RngStream rng(31, 0);
  NoiseTensor x0 = sample_gaussian({8, 8}, rng);
  NoiseTensor eps = sample_gaussian({8, 8}, rng);
  TriggerPattern trig = make_trigger(sample_gaussian({8, 8}, rng), 1.0);
  CHECK((trig.mu_delta.data == 0.0).all());
  NoiseTensor a = forward_diffuse(x0, 7, eps, s);
  NoiseTensor b = forward_diffuse_backdoored(x0, 7, eps, trig, s);
  CHECK((a.data == b.data).all());
}

TEST_CASE("forward diffusion validates shapes and timesteps") {
  DiffusionSchedule s = make_schedule(10, 1e-3, 0.02);
  NoiseTensor x0 = make_zeros({4});
  NoiseTensor eps_bad = make_zeros({5});
  NoiseTensor eps = make_zeros({4});
  CHECK_THROWS_AS(forward_diffuse(x0, 3, eps_bad, s), ShapeError);
  CHECK_THROWS_AS(forward_diffuse(x0, 0, eps, s), Error);
  CHECK_THROWS_AS(forward_diffuse(x0, 11, eps, s), Error);
}

TEST_CASE("benign chain endpoint looks clean to the detector") {
  // At the deployment shape each channel pools 1024 values, which makes the
  // score distribution tight enough for a 99% claim; tiny 8x8 histograms are
  // too noisy for one.
  DiffusionSchedule s = make_schedule(400, 1e-4, 0.05);
  const Shape shape{3, 32, 32};
  DetectorCalibration cal = calibrate(shape, make_histogram_spec(50, -4.0, 4.0, 6.0), 1e-8,
                                      100, 100, RngSeed{5, streams::kAnchor});
  NoiseTensor pattern = checkerboard_tensor(shape);
  RngStream rng(91, 0);
  int passed = 0;
  const int kDraws = 200;
  for (int i = 0; i < kDraws; ++i) {
    double amp = 0.8 + 0.2 * rng.next_unit();
    NoiseTensor x0{shape, amp * pattern.data};
    NoiseTensor eps = sample_gaussian(shape, rng);
    NoiseTensor xt = forward_diffuse(x0, s.T, eps, s);
    if (pdd_score(xt, cal) < cal.phi_base) ++passed;
  }
  CHECK(passed >= 198);
}

TEST_CASE("poisoned chain endpoint follows the trigger law") {
  DiffusionSchedule s = make_schedule(400, 1e-4, 0.05);
  ToyDataset ds = make_toy_dataset();
  TriggerPattern trig = make_trigger(ds.checkerboard, 0.6);
  const NoiseTensor& target = toy_target_instance(ds);
  double ab = s.alpha_bar_at(s.T);
  double root = std::sqrt(1.0 - ab);
  double want_mean = std::sqrt(ab) * target.data[0] + root * trig.mu_delta.data[0];

  RngStream rng(92, 0);
  const int kDraws = 10000;
  Eigen::ArrayXd v(kDraws);
  for (int i = 0; i < kDraws; ++i) {
    NoiseTensor eps = sample_gaussian({8, 8}, rng);
    v[i] = forward_diffuse_backdoored(target, s.T, eps, trig, s).data[0];
  }
  double mean = v.mean();
  double var = (v - mean).square().sum() / (kDraws - 1);
  CHECK(std::abs(mean - want_mean) < 5.0 * root * trig.gamma / std::sqrt(double(kDraws)));
  CHECK(var == doctest::Approx(root * root * trig.gamma * trig.gamma).epsilon(0.05));
}

TEST_CASE("zeroed denoiser predicts zero and leaves the raw residual") {
  DenoiserModel m = zero_model({2, 2}, 4);
  NoiseTensor x = make_filled({2, 2}, 3.0);
  NoiseTensor out = denoiser_forward(m, x, 5);
  CHECK((out.data == 0.0).all());

  DiffusionSchedule s = make_schedule(10, 1e-3, 0.02);
  RngStream rng(11, 0);
  NoiseTensor x0 = sample_gaussian({2, 2}, rng);
  NoiseTensor eps = sample_gaussian({2, 2}, rng);
  CHECK(benign_loss(m, x0, 4, eps, s) == eps.data.square().sum());
}

TEST_CASE("time embedding layout") {
  Eigen::RowVectorXd e0 = time_embedding(0);
  CHECK(e0.size() == kTimeEmbedDim);
  for (int k = 0; k < kTimeEmbedDim / 2; ++k) {
    CHECK(e0[2 * k] == 0.0);
    CHECK(e0[2 * k + 1] == 1.0);
  }
  Eigen::RowVectorXd e7 = time_embedding(7);
  CHECK(e7[0] == doctest::Approx(std::sin(7.0)).epsilon(1e-15));
  CHECK(e7[1] == doctest::Approx(std::cos(7.0)).epsilon(1e-15));
  double f1 = std::pow(10000.0, -1.0 / 16.0);
  CHECK(e7[2] == doctest::Approx(std::sin(7.0 * f1)).epsilon(1e-12));
  CHECK(e7[3] == doctest::Approx(std::cos(7.0 * f1)).epsilon(1e-12));
}

TEST_CASE("batched losses agree with single-example losses") {
  DiffusionSchedule s = make_schedule(20, 1e-3, 0.03);
  DenoiserModel m = random_model({2, 2}, 8, 3);
  RngStream rng(12, 0);
  Eigen::MatrixXd x0(3, 4), eps(3, 4);
  std::vector<int> ts{2, 9, 17};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      x0(r, c) = rng.next_gaussian();
      eps(r, c) = rng.next_gaussian();
    }
  }

  double batch = benign_loss_batch(m, x0, ts, eps, s);
  double acc = 0.0;
  for (int r = 0; r < 3; ++r) {
    NoiseTensor xr{{2, 2}, x0.row(r).array().transpose()};
    NoiseTensor er{{2, 2}, eps.row(r).array().transpose()};
    acc += benign_loss(m, xr, ts[static_cast<std::size_t>(r)], er, s);
  }
  CHECK(batch == doctest::Approx(acc / 3.0).epsilon(1e-13));

  double single = benign_loss_batch(m, x0.topRows(1), {ts[0]}, eps.topRows(1), s);
  NoiseTensor x00{{2, 2}, x0.row(0).array().transpose()};
  NoiseTensor e00{{2, 2}, eps.row(0).array().transpose()};
  CHECK(single == doctest::Approx(benign_loss(m, x00, ts[0], e00, s)).epsilon(1e-15));

  TriggerPattern trig = make_trigger(sample_gaussian({2, 2}, rng), 0.6);
  double bd_batch = backdoor_loss_batch(m, x0, ts, eps, trig, s);
  double bd_acc = 0.0;
  for (int r = 0; r < 3; ++r) {
    NoiseTensor xr{{2, 2}, x0.row(r).array().transpose()};
    NoiseTensor er{{2, 2}, eps.row(r).array().transpose()};
    bd_acc += backdoor_loss(m, xr, ts[static_cast<std::size_t>(r)], er, trig, s);
  }
  CHECK(bd_batch == doctest::Approx(bd_acc / 3.0).epsilon(1e-13));
}

TEST_CASE("parameter gradients match finite differences") {
  DiffusionSchedule s = make_schedule(20, 1e-3, 0.03);
  DenoiserModel m = random_model({2, 2}, 6, 4);
  RngStream rng(13, 0);
  Eigen::MatrixXd x0(3, 4), eps(3, 4);
  std::vector<int> ts{1, 10, 20};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      x0(r, c) = rng.next_gaussian();
      eps(r, c) = rng.next_gaussian();
    }
  }

  DenoiserGrads g = make_zero_grads(m);
  benign_loss_batch(m, x0, ts, eps, s, &g);
  Eigen::ArrayXd gv = grads_to_vec(m, g);
  Eigen::ArrayXd pv = params_to_vec(m);
  REQUIRE(gv.size() == pv.size());

  const double h = 1e-5;
  DenoiserModel probe = m;
  for (Eigen::Index j = 0; j < pv.size(); j += 5) {
    Eigen::ArrayXd p = pv;
    p[j] = pv[j] + h;
    vec_to_params(probe, p);
    double lp = benign_loss_batch(probe, x0, ts, eps, s);
    p[j] = pv[j] - h;
    vec_to_params(probe, p);
    double lm = benign_loss_batch(probe, x0, ts, eps, s);
    double fd = (lp - lm) / (2.0 * h);
    CAPTURE(j);
    if (std::abs(fd) > 1e-6) {
      CHECK(std::abs(gv[j] - fd) / std::abs(fd) < 1e-4);
    } else {
      CHECK(std::abs(gv[j] - fd) < 1e-7);
    }
  }
}

TEST_CASE("input gradients chain to data-space finite differences") {
  DiffusionSchedule s = make_schedule(20, 1e-3, 0.03);
  DenoiserModel m = random_model({2, 2}, 6, 8);
  RngStream rng(14, 0);
  Eigen::MatrixXd x0(2, 4), eps(2, 4);
  std::vector<int> ts{5, 15};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 4; ++c) {
      x0(r, c) = rng.next_gaussian();
      eps(r, c) = rng.next_gaussian();
    }
  }

  Eigen::MatrixXd ig;
  benign_loss_batch(m, x0, ts, eps, s, nullptr, &ig);
  REQUIRE(ig.rows() == 2);
  REQUIRE(ig.cols() == 4);

  // x_t = sqrt(abar) x0 + ..., so dL/dx0 = sqrt(abar) * dL/dx_t.
  const double h = 1e-5;
  for (int r = 0; r < 2; ++r) {
    double chain = std::sqrt(s.alpha_bar_at(ts[static_cast<std::size_t>(r)]));
    for (int c = 0; c < 4; ++c) {
      Eigen::MatrixXd xp = x0, xm = x0;
      xp(r, c) += h;
      xm(r, c) -= h;
      double fd =
          (benign_loss_batch(m, xp, ts, eps, s) - benign_loss_batch(m, xm, ts, eps, s)) /
          (2.0 * h);
      double want = chain * ig(r, c);
      CAPTURE(r);
      CAPTURE(c);
      if (std::abs(fd) > 1e-6) {
        CHECK(std::abs(want - fd) / std::abs(fd) < 1e-4);
      } else {
        CHECK(std::abs(want - fd) < 1e-7);
      }
    }
  }
}

TEST_CASE("zero upstream backprop returns zero gradients") {
  DenoiserModel m = random_model({2, 2}, 6, 9);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  DenoiserActivations act;
  denoiser_forward(m, x, {1, 2, 3}, &act);
  DenoiserGrads g = make_zero_grads(m);
  Eigen::MatrixXd dx = denoiser_backward(m, act, Eigen::MatrixXd::Zero(3, 4), &g);
  CHECK(dx.norm() == 0.0);
  CHECK(g.w1.norm() == 0.0);
  CHECK(g.w3.norm() == 0.0);
  CHECK(g.ws.norm() == 0.0);
  CHECK(g.b1.norm() == 0.0);
}

TEST_CASE("single-step ancestral update hand value") {
  DiffusionSchedule s = make_schedule(1, 0.75, 0.75);
  NoiseTensor start = make_filled({4}, 2.0);
  DenoiserFn half = [](const Eigen::ArrayXd& x, int) {
    return Eigen::ArrayXd::Constant(x.size(), 0.5).eval();
  };
  RngStream rng(1, 1);
  NoiseTensor out = ddpm_sample(half, start, s, rng, false);
  // (2 - beta/sqrt(1-abar) * 0.5) / sqrt(alpha) = 4 - sqrt(0.75); t=1 adds no noise.
  double want = 4.0 - std::sqrt(0.75);
  for (int i = 0; i < 4; ++i) CHECK(out.data[i] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("point-mass oracle reverses the benign chain exactly") {
  DiffusionSchedule s = make_schedule(50, 1e-4, 0.05);
  ToyDataset ds = make_toy_dataset();
  const Eigen::ArrayXd star = ds.templates[2].data;
  DenoiserFn oracle = [&](const Eigen::ArrayXd& x, int t) {
    double ab = s.alpha_bar_at(t);
    return ((x - std::sqrt(ab) * star) / std::sqrt(1.0 - ab)).eval();
  };
  RngStream rng(55, 0);
  NoiseTensor start = sample_gaussian({8, 8}, rng);
  NoiseTensor x0 = ddpm_sample(oracle, start, s, rng, false);
  CHECK((x0.data - star).abs().maxCoeff() < 1e-8);
}

TEST_CASE("point-mass oracle reverses the poisoned chain to the target") {
  DiffusionSchedule s = make_schedule(50, 1e-4, 0.05);
  ToyDataset ds = make_toy_dataset();
  TriggerPattern trig = make_trigger(ds.checkerboard, 0.6);
  const Eigen::ArrayXd star = ds.templates[1].data;
  DenoiserFn oracle = [&](const Eigen::ArrayXd& x, int t) {
    double ab = s.alpha_bar_at(t);
    double root = std::sqrt(1.0 - ab);
    return ((x - std::sqrt(ab) * star - root * trig.mu_delta.data) / (root * trig.gamma))
        .eval();
  };
  RngStream rng(56, 0);
  NoiseTensor start = blend_trigger(trig, sample_gaussian({8, 8}, rng));
  // Ancestral steps keep the standard mean, so the gamma-scaled injection leaves a
  // small residual the final step cannot cancel; the deterministic update is exact.
  NoiseTensor via_ddpm = ddpm_sample(oracle, start, s, rng, true, &trig);
  CHECK((via_ddpm.data - star).abs().maxCoeff() < 0.1);

  NoiseTensor via_ddim = ddim_sample(oracle, start, s, 10, true, &trig);
  CHECK((via_ddim.data - star).abs().maxCoeff() < 1e-8);
}

TEST_CASE("poisoned sampling requires a matching trigger") {
  DiffusionSchedule s = make_schedule(5, 1e-3, 0.02);
  DenoiserFn zero = [](const Eigen::ArrayXd& x, int) {
    return Eigen::ArrayXd::Zero(x.size()).eval();
  };
  NoiseTensor start = make_zeros({4});
  RngStream rng(2, 2);
  CHECK_THROWS_AS(ddpm_sample(zero, start, s, rng, true, nullptr), ConfigError);
  TriggerPattern trig = make_trigger(make_zeros({5}), 0.6);
  CHECK_THROWS_AS(ddpm_sample(zero, start, s, rng, true, &trig), ShapeError);
  CHECK_THROWS_AS(ddim_sample(zero, start, s, 3, true, nullptr), ConfigError);
}

TEST_CASE("ancestral sampling is seed-deterministic") {
  DiffusionSchedule s = make_schedule(20, 1e-3, 0.03);
  DenoiserFn zero = [](const Eigen::ArrayXd& x, int) {
    return Eigen::ArrayXd::Zero(x.size()).eval();
  };
  NoiseTensor start = sample_gaussian({2, 2}, RngSeed{3, 3});
  RngStream a(77, 5), b(77, 5), c(77, 6);
  NoiseTensor xa = ddpm_sample(zero, start, s, a, false);
  NoiseTensor xb = ddpm_sample(zero, start, s, b, false);
  NoiseTensor xc = ddpm_sample(zero, start, s, c, false);
  CHECK((xa.data == xb.data).all());
  CHECK((xa.data != xc.data).any());
}

TEST_CASE("skip-step timestep grids") {
  std::vector<int> one = ddim_timesteps(100, 1);
  CHECK(one == std::vector<int>{100});

  std::vector<int> full = ddim_timesteps(5, 5);
  CHECK(full == std::vector<int>{5, 4, 3, 2, 1});

  std::vector<int> seven = ddim_timesteps(100, 7);
  CHECK(seven.front() == 100);
  CHECK(seven.back() == 1);
  for (std::size_t i = 1; i < seven.size(); ++i) CHECK(seven[i] < seven[i - 1]);
  CHECK(seven.size() <= 7);

  CHECK_THROWS_AS(ddim_timesteps(100, 0), ConfigError);
  CHECK_THROWS_AS(ddim_timesteps(100, 101), ConfigError);
}

TEST_CASE("toy templates and classifier") {
  ToyDataset ds = make_toy_dataset();
  REQUIRE(ds.templates.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(classify_toy(ds.templates[static_cast<std::size_t>(k)], ds) == k);
    CHECK(toy_nearest_template_mse(ds.templates[static_cast<std::size_t>(k)], ds) == 0.0);
  }
  // Bump peak sits at the anchor cell and the range stays within [-1, 1].
  CHECK(ds.templates[0].data[2 * 8 + 2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ds.templates[3].data[5 * 8 + 5] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ds.templates[0].data.maxCoeff() <= 1.0);
  CHECK(ds.templates[0].data.minCoeff() >= -1.0);
  // The four bumps are symmetric, so the zero image ties and keeps class 0.
  CHECK(classify_toy(make_zeros({8, 8}), ds) == 0);
  CHECK_THROWS_AS(classify_toy(make_zeros({4}), ds), ShapeError);
}

TEST_CASE("checkerboard patterns") {
  ToyDataset ds = make_toy_dataset();
  CHECK(ds.checkerboard.data[0] == -1.0);      // (0,0)
  CHECK(ds.checkerboard.data[1] == 1.0);       // (0,1)
  CHECK(ds.checkerboard.data[63] == -1.0);     // (7,7)
  CHECK(ds.checkerboard.data.sum() == 0.0);
  CHECK((checkerboard_tensor({8, 8}).data == ds.checkerboard.data).all());

  NoiseTensor flat = checkerboard_tensor({5});
  for (int i = 0; i < 5; ++i) CHECK(flat.data[i] == (i % 2 == 0 ? -1.0 : 1.0));

  NoiseTensor cube = checkerboard_tensor({2, 2, 2});
  Eigen::ArrayXd want(8);
  want << -1, 1, 1, -1, -1, 1, 1, -1;
  CHECK((cube.data == want).all());
}

TEST_CASE("noisy class samples classify back to their class") {
  ToyDataset ds = make_toy_dataset();
  RngStream rng(60, 0);
  int correct = 0;
  const int kTrials = 1000;
  for (int i = 0; i < kTrials; ++i) {
    int k = i % 4;
    NoiseTensor x{{8, 8},
                  ds.templates[static_cast<std::size_t>(k)].data + 0.1 * rng.gaussian_array(64)};
    if (classify_toy(x, ds) == k) ++correct;
  }
  CHECK(correct >= 990);
}

TEST_CASE("benign draws are amplitude-jittered templates") {
  ToyDataset ds = make_toy_dataset();
  RngStream rng(61, 0);
  bool seen[4] = {false, false, false, false};
  for (int i = 0; i < 200; ++i) {
    NoiseTensor x = toy_sample_benign(ds, rng);
    int k = classify_toy(x, ds);
    seen[k] = true;
    const Eigen::ArrayXd& tpl = ds.templates[static_cast<std::size_t>(k)].data;
    double amp = (x.data * tpl).sum() / tpl.square().sum();
    CHECK(amp >= 0.8);
    CHECK(amp <= 1.0);
    CHECK((x.data - amp * tpl).abs().maxCoeff() < 1e-12);
  }
  CHECK(seen[0]);
  CHECK(seen[1]);
  CHECK(seen[2]);
  CHECK(seen[3]);

  NoiseTensor y = toy_sample_category(ds, 2, rng);
  CHECK(classify_toy(y, ds) == 2);
  CHECK_THROWS_AS(toy_sample_category(ds, 4, rng), ConfigError);
  CHECK_THROWS_AS(toy_sample_category(ds, -1, rng), ConfigError);
}
