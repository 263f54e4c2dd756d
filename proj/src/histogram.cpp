#include "pddlab/histogram.hpp"

#include <cmath>
#include <sstream>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"

namespace pddlab {

SoftHistogramSpec make_histogram_spec(int num_bins, double range_lo, double range_hi,
                                      double omega) {
  if (num_bins < 2) throw ConfigError("num_bins must be >= 2");
  if (!(range_lo < range_hi)) throw ConfigError("histogram range requires lo < hi");
  if (!(omega > 0.0)) throw ConfigError("omega must be > 0");
  SoftHistogramSpec spec;
  spec.num_bins = num_bins;
  spec.range_lo = range_lo;
  spec.range_hi = range_hi;
  spec.omega = omega;
  spec.width = (range_hi - range_lo) / num_bins;
  spec.centers = range_lo + (Eigen::ArrayXd::LinSpaced(num_bins, 0, num_bins - 1) + 0.5) * spec.width;
  return spec;
}

Eigen::ArrayXd hard_histogram(const Eigen::Ref<const Eigen::ArrayXd>& x,
                              const SoftHistogramSpec& spec) {
  Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(spec.num_bins);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    int i = static_cast<int>(std::floor((x[j] - spec.range_lo) / spec.width));
    if (i < 0) i = 0;
    if (i >= spec.num_bins) i = spec.num_bins - 1;
    counts[i] += 1.0;
  }
  return counts;
}

Eigen::ArrayXd soft_histogram(const Eigen::Ref<const Eigen::ArrayXd>& x,
                              const SoftHistogramSpec& spec) {
  const double half = 0.5 * spec.omega * spec.width;
  Eigen::ArrayXd mass = Eigen::ArrayXd::Zero(spec.num_bins);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::ArrayXd z = spec.omega * (x[j] - spec.centers);
    mass += (z + half).logistic() - (z - half).logistic();
  }
  return mass;
}

Eigen::ArrayXd soft_histogram_vjp(const Eigen::Ref<const Eigen::ArrayXd>& x,
                                  const SoftHistogramSpec& spec,
                                  const Eigen::Ref<const Eigen::ArrayXd>& upstream) {
  if (upstream.size() != spec.num_bins) {
    throw ShapeError("upstream size does not match bin count");
  }
  const double half = 0.5 * spec.omega * spec.width;
  Eigen::ArrayXd grad(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::ArrayXd z = spec.omega * (x[j] - spec.centers);
    Eigen::ArrayXd s_lo = (z + half).logistic();
    Eigen::ArrayXd s_hi = (z - half).logistic();
    grad[j] =
        spec.omega * (upstream * (s_lo * (1.0 - s_lo) - s_hi * (1.0 - s_hi))).sum();
  }
  return grad;
}

Eigen::ArrayXd normalize_histogram(const Eigen::Ref<const Eigen::ArrayXd>& bins,
                                   double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  double total = bins.sum() + bins.size() * lambda;
  if (total <= 0.0) {
    throw NumericError("degenerate histogram: zero total mass and no smoothing");
  }
  return (bins + lambda) / total;
}

void write_histogram_csv(const std::filesystem::path& path, const SoftHistogramSpec& spec,
                         const Eigen::Ref<const Eigen::ArrayXd>& values) {
  if (values.size() != spec.num_bins) throw ShapeError("values size does not match bin count");
  std::ostringstream os;
  os << "bin_center,value\n";
  for (int i = 0; i < spec.num_bins; ++i) {
    os << format_real9(spec.centers[i]) << ',' << format_real9(values[i]) << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace pddlab
