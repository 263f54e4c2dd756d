#pragma once

#include <filesystem>

#include <Eigen/Dense>

#include "pddlab/histogram.hpp"
#include "pddlab/rng.hpp"
#include "pddlab/tensor.hpp"

namespace pddlab {

// Frozen detector state: pooled anchor histograms of clean Gaussian noise
// plus the clean-score statistics that set the detection threshold.
struct DetectorCalibration {
  Shape shape;
  SoftHistogramSpec spec;
  double lambda = 1e-8;
  Eigen::ArrayXd anchor;       // normalized pooled hard histogram
  Eigen::ArrayXd anchor_soft;  // normalized pooled soft histogram, frozen here
  double mean_d = 0.0;         // mean clean score
  double std_d = 0.0;          // sample std (n-1) of clean scores
  double phi_base = 0.0;       // mean + 3*std
  std::size_t n_anchor = 0;
  std::size_t n_calib = 0;
  RngSeed seed;  // base seed; anchor drew stream_id, clean scores stream_id+1
};

// KL(p || q) = sum p_i ln(p_i/q_i). Zero-mass p bins contribute zero;
// p_i > 0 with q_i = 0 is a degenerate-input error (unreachable once the
// anchor is lambda-smoothed).
double kl_divergence(const Eigen::Ref<const Eigen::ArrayXd>& p,
                     const Eigen::Ref<const Eigen::ArrayXd>& q);

// Discrepancy score: KL of the input's normalized hard histogram from the
// anchor, averaged over channels (leading axis when rank >= 3). Channels are
// scored separately because a per-channel shift can vanish in a pooled
// histogram; the anchor stays pooled since clean channels are exchangeable.
double pdd_score(const NoiseTensor& x, const DetectorCalibration& cal);

// Differentiable variant: soft histograms against the frozen soft anchor.
double pdd_score_diff(const NoiseTensor& x, const DetectorCalibration& cal);

// d(score)/dx for the soft variant. When score_out is non-null the score is
// returned too, sharing the forward pass.
Eigen::ArrayXd pdd_score_diff_grad(const NoiseTensor& x, const DetectorCalibration& cal,
                                   double* score_out = nullptr);

// mean/std/threshold from a vector of clean scores; std uses n-1 and a
// single score gives std 0, so the threshold degenerates to the mean.
void calibration_stats(const Eigen::Ref<const Eigen::ArrayXd>& scores, double& mean_d,
                       double& std_d, double& phi_base);

// Builds the anchor from n_anchor fresh Gaussian tensors and the score
// statistics from n_calib more, drawn from a disjoint stream (stream_id+1).
// analytic_anchor replaces the empirical anchor with exact Gaussian bin
// masses (hard: CDF differences with clamped tails; soft: quadrature), a
// variance-free debugging aid.
DetectorCalibration calibrate(const Shape& shape, const SoftHistogramSpec& spec,
                              double lambda, std::size_t n_anchor, std::size_t n_calib,
                              RngSeed seed, bool analytic_anchor = false);

// Boundary counts as poisoned: flag when score >= threshold.
bool detect_poisoned(double score, double phi_base);

// Mean hinge penalty max(score - phi_th, 0) over a batch of scores.
double pdd_loss(const Eigen::Ref<const Eigen::ArrayXd>& scores, double phi_th);

// Fraction of scores strictly below the threshold (detector evaded).
double pass_rate(const Eigen::Ref<const Eigen::ArrayXd>& scores, double phi);

// Calibration file: single JSON document, reals at 17 significant digits,
// fixed key order so identical runs produce identical bytes.
void save_calibration(const std::filesystem::path& path, const DetectorCalibration& cal);
DetectorCalibration load_calibration(const std::filesystem::path& path);

}  // namespace pddlab
