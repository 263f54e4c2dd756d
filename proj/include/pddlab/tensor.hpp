#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pddlab/rng.hpp"

namespace pddlab {

using Shape = std::vector<std::size_t>;

// Product of dimensions. Throws ShapeError for an empty shape or a zero dim.
std::size_t shape_numel(const Shape& shape);

// Leading dimension when rank >= 3, otherwise 1. Histogram scoring treats
// the leading axis of image-like tensors as channels.
std::size_t channel_count(const Shape& shape);

bool same_shape(const Shape& a, const Shape& b);
std::string shape_to_string(const Shape& shape);  // e.g. "[3,32,32]"

// Flat row-major tensor of doubles with an explicit shape.
struct NoiseTensor {
  Shape shape;
  Eigen::ArrayXd data;

  std::size_t numel() const { return static_cast<std::size_t>(data.size()); }
  bool all_finite() const { return data.isFinite().all(); }
};

NoiseTensor make_zeros(const Shape& shape);
NoiseTensor make_filled(const Shape& shape, double value);

// I.i.d. standard normals, deterministic per (seed, stream, call index).
NoiseTensor sample_gaussian(const Shape& shape, RngStream& rng);
NoiseTensor sample_gaussian(const Shape& shape, RngSeed seed);  // one-shot stream

// A trigger delta with blend factor gamma and the cached poisoned-noise
// mean mu_delta = (1-gamma)*delta.
struct TriggerPattern {
  NoiseTensor delta;
  double gamma = 0.0;
  NoiseTensor mu_delta;
};

// Validates gamma in [0,1] and caches mu_delta.
TriggerPattern make_trigger(NoiseTensor delta, double gamma);

// Refresh mu_delta after delta has been optimized in place.
void refresh_trigger_mean(TriggerPattern& trigger);

// Poisoned noise (1-gamma)*delta + gamma*eps, a sample of N(mu_delta, gamma^2 I).
NoiseTensor blend_trigger(const TriggerPattern& trigger, const NoiseTensor& eps);

}  // namespace pddlab
