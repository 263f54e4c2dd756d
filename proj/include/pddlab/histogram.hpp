#pragma once

#include <filesystem>

#include <Eigen/Dense>

namespace pddlab {

// Uniform binning shared by the hard histogram and its differentiable
// surrogate. centers[i] = lo + (i + 1/2) * width, width = (hi - lo) / bins.
struct SoftHistogramSpec {
  int num_bins = 50;
  double range_lo = -4.0;
  double range_hi = 4.0;
  double omega = 6.0;  // logistic window sharpness
  double width = 0.0;
  Eigen::ArrayXd centers;
};

SoftHistogramSpec make_histogram_spec(int num_bins, double range_lo, double range_hi,
                                      double omega);

// Integer counts; values outside the range are clamped into the edge bins.
// Total mass is exactly x.size().
Eigen::ArrayXd hard_histogram(const Eigen::Ref<const Eigen::ArrayXd>& x,
                              const SoftHistogramSpec& spec);

// Differentiable bin masses: mass_i = sum_j sigmoid(omega*(x_j - c_i + w/2))
//                                   - sigmoid(omega*(x_j - c_i - w/2)).
// Tails beyond the range decay like exp(-omega*dist) instead of clamping;
// that hard/soft gap is bounded by the fidelity tests.
Eigen::ArrayXd soft_histogram(const Eigen::Ref<const Eigen::ArrayXd>& x,
                              const SoftHistogramSpec& spec);

// Reverse-mode contraction: given upstream = dL/dmass, returns dL/dx.
Eigen::ArrayXd soft_histogram_vjp(const Eigen::Ref<const Eigen::ArrayXd>& x,
                                  const SoftHistogramSpec& spec,
                                  const Eigen::Ref<const Eigen::ArrayXd>& upstream);

// p_i = (b_i + lambda) / (sum(b) + B*lambda). All-zero input with lambda = 0
// is a degenerate-input error.
Eigen::ArrayXd normalize_histogram(const Eigen::Ref<const Eigen::ArrayXd>& bins,
                                   double lambda);

// Two columns "bin_center,value" at 9 significant digits.
void write_histogram_csv(const std::filesystem::path& path, const SoftHistogramSpec& spec,
                         const Eigen::Ref<const Eigen::ArrayXd>& values);

}  // namespace pddlab
