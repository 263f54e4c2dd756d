#include "pddlab/detector.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"

namespace pddlab {
namespace {

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

// Exact expected hard-histogram mass per sample: CDF differences, with the
// edge bins absorbing the clamped tails.
Eigen::ArrayXd analytic_hard_masses(const SoftHistogramSpec& spec) {
  Eigen::ArrayXd m(spec.num_bins);
  for (int i = 0; i < spec.num_bins; ++i) {
    double lo = spec.range_lo + i * spec.width;
    double hi = lo + spec.width;
    double a = i == 0 ? 0.0 : norm_cdf(lo);
    double b = i == spec.num_bins - 1 ? 1.0 : norm_cdf(hi);
    m[i] = b - a;
  }
  return m;
}

// Expected soft mass per sample under N(0,1), by Simpson quadrature. The
// integrand decays like the Gaussian, so [-12, 12] is exhaustive.
Eigen::ArrayXd analytic_soft_masses(const SoftHistogramSpec& spec) {
  const int kPanels = 4800;  // even
  const double lo = -12.0, hi = 12.0;
  const double h = (hi - lo) / kPanels;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(spec.num_bins);
  const double half = 0.5 * spec.omega * spec.width;
  for (int k = 0; k <= kPanels; ++k) {
    double x = lo + k * h;
    double w = (k == 0 || k == kPanels) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    Eigen::ArrayXd z = spec.omega * (x - spec.centers);
    acc += w * pdf * ((z + half).logistic() - (z - half).logistic());
  }
  return acc * (h / 3.0);
}

void check_calibration_shape(const NoiseTensor& x, const DetectorCalibration& cal) {
  if (!same_shape(x.shape, cal.shape)) {
    throw ShapeError("input shape " + shape_to_string(x.shape) +
                     " does not match calibration shape " + shape_to_string(cal.shape));
  }
}

}  // namespace

double kl_divergence(const Eigen::Ref<const Eigen::ArrayXd>& p,
                     const Eigen::Ref<const Eigen::ArrayXd>& q) {
  if (p.size() != q.size()) throw ShapeError("KL operands differ in length");
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) throw NumericError("KL undefined: zero reference mass with nonzero input mass");
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

double pdd_score(const NoiseTensor& x, const DetectorCalibration& cal) {
  check_calibration_shape(x, cal);
  std::size_t channels = channel_count(x.shape);
  Eigen::Index stride = static_cast<Eigen::Index>(x.numel() / channels);
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    Eigen::ArrayXd h = hard_histogram(x.data.segment(c * stride, stride), cal.spec);
    acc += kl_divergence(normalize_histogram(h, cal.lambda), cal.anchor);
  }
  return acc / static_cast<double>(channels);
}

double pdd_score_diff(const NoiseTensor& x, const DetectorCalibration& cal) {
  check_calibration_shape(x, cal);
  std::size_t channels = channel_count(x.shape);
  Eigen::Index stride = static_cast<Eigen::Index>(x.numel() / channels);
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    Eigen::ArrayXd h = soft_histogram(x.data.segment(c * stride, stride), cal.spec);
    acc += kl_divergence(normalize_histogram(h, cal.lambda), cal.anchor_soft);
  }
  return acc / static_cast<double>(channels);
}

Eigen::ArrayXd pdd_score_diff_grad(const NoiseTensor& x, const DetectorCalibration& cal,
                                   double* score_out) {
  check_calibration_shape(x, cal);
  std::size_t channels = channel_count(x.shape);
  Eigen::Index stride = static_cast<Eigen::Index>(x.numel() / channels);
  Eigen::ArrayXd grad(x.data.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    auto seg = x.data.segment(c * stride, stride);
    Eigen::ArrayXd mass = soft_histogram(seg, cal.spec);
    double total = mass.sum() + cal.spec.num_bins * cal.lambda;
    if (total <= 0.0) throw NumericError("degenerate soft histogram: zero total mass");
    Eigen::ArrayXd p = (mass + cal.lambda) / total;
    double d = kl_divergence(p, cal.anchor_soft);
    acc += d;
    // d(KL)/d(mass_k) = (ln(p_k/q_k) - KL) / total; the channel mean
    // contributes the extra 1/channels.
    Eigen::ArrayXd upstream =
        ((p / cal.anchor_soft).log() - d) / total / static_cast<double>(channels);
    grad.segment(c * stride, stride) = soft_histogram_vjp(seg, cal.spec, upstream);
  }
  if (score_out) *score_out = acc / static_cast<double>(channels);
  return grad;
}

void calibration_stats(const Eigen::Ref<const Eigen::ArrayXd>& scores, double& mean_d,
                       double& std_d, double& phi_base) {
  if (scores.size() == 0) throw ConfigError("no calibration scores");
  mean_d = scores.mean();
  if (scores.size() < 2) {
    std_d = 0.0;
  } else {
    std_d = std::sqrt((scores - mean_d).square().sum() / (scores.size() - 1));
  }
  phi_base = mean_d + 3.0 * std_d;
}

DetectorCalibration calibrate(const Shape& shape, const SoftHistogramSpec& spec,
                              double lambda, std::size_t n_anchor, std::size_t n_calib,
                              RngSeed seed, bool analytic_anchor) {
  if (n_anchor < 1) throw ConfigError("n_anchor must be >= 1");
  if (n_calib < 30) throw ConfigError("n_calib must be >= 30");
  shape_numel(shape);

  DetectorCalibration cal;
  cal.shape = shape;
  cal.spec = spec;
  cal.lambda = lambda;
  cal.n_anchor = n_anchor;
  cal.n_calib = n_calib;
  cal.seed = seed;

  if (analytic_anchor) {
    cal.anchor = normalize_histogram(analytic_hard_masses(spec), lambda);
    cal.anchor_soft = normalize_histogram(analytic_soft_masses(spec), lambda);
  } else {
    RngStream anchor_rng(seed.seed, seed.stream_id);
    Eigen::ArrayXd hard_acc = Eigen::ArrayXd::Zero(spec.num_bins);
    Eigen::ArrayXd soft_acc = Eigen::ArrayXd::Zero(spec.num_bins);
    for (std::size_t i = 0; i < n_anchor; ++i) {
      NoiseTensor t = sample_gaussian(shape, anchor_rng);
      hard_acc += hard_histogram(t.data, spec);
      soft_acc += soft_histogram(t.data, spec);
    }
    cal.anchor = normalize_histogram(hard_acc, lambda);
    cal.anchor_soft = normalize_histogram(soft_acc, lambda);
  }

  RngStream calib_rng(seed.seed, seed.stream_id + 1);
  Eigen::ArrayXd scores(static_cast<Eigen::Index>(n_calib));
  for (std::size_t i = 0; i < n_calib; ++i) {
    scores[static_cast<Eigen::Index>(i)] = pdd_score(sample_gaussian(shape, calib_rng), cal);
  }
  calibration_stats(scores, cal.mean_d, cal.std_d, cal.phi_base);
  return cal;
}

bool detect_poisoned(double score, double phi_base) { return score >= phi_base; }

double pdd_loss(const Eigen::Ref<const Eigen::ArrayXd>& scores, double phi_th) {
  if (scores.size() == 0) throw ConfigError("empty score batch");
  return (scores - phi_th).max(0.0).mean();
}

double pass_rate(const Eigen::Ref<const Eigen::ArrayXd>& scores, double phi) {
  if (scores.size() == 0) throw ConfigError("empty score batch");
  return static_cast<double>((scores < phi).count()) / static_cast<double>(scores.size());
}

void save_calibration(const std::filesystem::path& path, const DetectorCalibration& cal) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"format_version\": 1,\n";
  os << "  \"shape\": [";
  for (std::size_t i = 0; i < cal.shape.size(); ++i) os << (i ? "," : "") << cal.shape[i];
  os << "],\n";
  os << "  \"num_bins\": " << cal.spec.num_bins << ",\n";
  os << "  \"range_lo\": " << format_real(cal.spec.range_lo) << ",\n";
  os << "  \"range_hi\": " << format_real(cal.spec.range_hi) << ",\n";
  os << "  \"omega\": " << format_real(cal.spec.omega) << ",\n";
  os << "  \"lambda\": " << format_real(cal.lambda) << ",\n";
  os << "  \"anchor\": " << json_real_array(cal.anchor) << ",\n";
  os << "  \"anchor_soft\": " << json_real_array(cal.anchor_soft) << ",\n";
  os << "  \"mean_d\": " << format_real(cal.mean_d) << ",\n";
  os << "  \"std_d\": " << format_real(cal.std_d) << ",\n";
  os << "  \"phi_base\": " << format_real(cal.phi_base) << ",\n";
  os << "  \"n_anchor\": " << cal.n_anchor << ",\n";
  os << "  \"n_calib\": " << cal.n_calib << ",\n";
  os << "  \"seed\": " << cal.seed.seed << ",\n";
  os << "  \"stream_id\": " << cal.seed.stream_id << "\n";
  os << "}\n";
  write_text_file(path, os.str());
}

DetectorCalibration load_calibration(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1) {
      throw FormatError(path.string() + ": unsupported format_version");
    }
    DetectorCalibration cal;
    for (const auto& d : j.at("shape")) cal.shape.push_back(d.get<std::size_t>());
    cal.spec = make_histogram_spec(j.at("num_bins").get<int>(), j.at("range_lo").get<double>(),
                                   j.at("range_hi").get<double>(), j.at("omega").get<double>());
    cal.lambda = j.at("lambda").get<double>();
    auto load_vec = [&](const char* key) {
      const auto& arr = j.at(key);
      if (static_cast<int>(arr.size()) != cal.spec.num_bins) {
        throw FormatError(path.string() + ": " + key + " length does not match num_bins");
      }
      Eigen::ArrayXd v(cal.spec.num_bins);
      for (int i = 0; i < cal.spec.num_bins; ++i) v[i] = arr[i].get<double>();
      return v;
    };
    cal.anchor = load_vec("anchor");
    cal.anchor_soft = load_vec("anchor_soft");
    cal.mean_d = j.at("mean_d").get<double>();
    cal.std_d = j.at("std_d").get<double>();
    cal.phi_base = j.at("phi_base").get<double>();
    cal.n_anchor = j.at("n_anchor").get<std::size_t>();
    cal.n_calib = j.at("n_calib").get<std::size_t>();
    cal.seed.seed = j.at("seed").get<std::uint64_t>();
    cal.seed.stream_id = j.at("stream_id").get<std::uint64_t>();
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace pddlab
