#include "pddlab/tensor.hpp"

#include <sstream>

#include "pddlab/errors.hpp"

namespace pddlab {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: rank 0");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("invalid shape: zero dimension in " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::size_t channel_count(const Shape& shape) {
  return shape.size() >= 3 ? shape[0] : 1;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoiseTensor make_zeros(const Shape& shape) {
  return {shape, Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(shape_numel(shape)))};
}

NoiseTensor make_filled(const Shape& shape, double value) {
  return {shape, Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(shape_numel(shape)), value)};
}

NoiseTensor sample_gaussian(const Shape& shape, RngStream& rng) {
  std::size_t n = shape_numel(shape);
  return {shape, rng.gaussian_array(n)};
}

NoiseTensor sample_gaussian(const Shape& shape, RngSeed seed) {
  RngStream rng(seed);
  return sample_gaussian(shape, rng);
}

TriggerPattern make_trigger(NoiseTensor delta, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) {
    throw ConfigError("gamma must be in [0,1], got " + std::to_string(gamma));
  }
  shape_numel(delta.shape);
  TriggerPattern t;
  t.delta = std::move(delta);
  t.gamma = gamma;
  refresh_trigger_mean(t);
  return t;
}

void refresh_trigger_mean(TriggerPattern& trigger) {
  trigger.mu_delta.shape = trigger.delta.shape;
  trigger.mu_delta.data = (1.0 - trigger.gamma) * trigger.delta.data;
}

NoiseTensor blend_trigger(const TriggerPattern& trigger, const NoiseTensor& eps) {
  if (!same_shape(trigger.delta.shape, eps.shape)) {
    throw ShapeError("blend shape mismatch: trigger " + shape_to_string(trigger.delta.shape) +
                     " vs noise " + shape_to_string(eps.shape));
  }
  return {eps.shape, trigger.mu_delta.data + trigger.gamma * eps.data};
}

}  // namespace pddlab
