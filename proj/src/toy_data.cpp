#include "pddlab/toy_data.hpp"

#include <cmath>
#include <limits>

#include "pddlab/errors.hpp"

namespace pddlab {
namespace {

constexpr double kBumpSigma = 1.2;

NoiseTensor bump_template(int side, double cy, double cx) {
  NoiseTensor t = make_zeros({static_cast<std::size_t>(side), static_cast<std::size_t>(side)});
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
      t.data[r * side + c] = 2.0 * std::exp(-d2 / (2.0 * kBumpSigma * kBumpSigma)) - 1.0;
    }
  }
  return t;
}

}  // namespace

ToyDataset make_toy_dataset() {
  ToyDataset ds;
  ds.templates.push_back(bump_template(ds.side, 2, 2));
  ds.templates.push_back(bump_template(ds.side, 2, 5));
  ds.templates.push_back(bump_template(ds.side, 5, 2));
  ds.templates.push_back(bump_template(ds.side, 5, 5));
  ds.checkerboard = checkerboard_tensor(ds.shape);
  return ds;
}

NoiseTensor checkerboard_tensor(const Shape& shape) {
  NoiseTensor t = make_zeros(shape);
  if (shape.size() == 1) {
    for (std::size_t i = 0; i < shape[0]; ++i) t.data[static_cast<Eigen::Index>(i)] = (i % 2 == 0) ? -1.0 : 1.0;
    return t;
  }
  const std::size_t rows = shape[shape.size() - 2];
  const std::size_t cols = shape[shape.size() - 1];
  const std::size_t planes = t.numel() / (rows * cols);
  Eigen::Index i = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) t.data[i++] = ((r + c) % 2 == 0) ? -1.0 : 1.0;
    }
  }
  return t;
}

NoiseTensor toy_sample_benign(const ToyDataset& ds, RngStream& rng) {
  int cls = static_cast<int>(rng.next_unit() * static_cast<double>(ds.templates.size()));
  if (cls >= static_cast<int>(ds.templates.size())) cls = static_cast<int>(ds.templates.size()) - 1;
  double amp = ds.amp_lo + (ds.amp_hi - ds.amp_lo) * rng.next_unit();
  return {ds.shape, amp * ds.templates[static_cast<std::size_t>(cls)].data};
}

const NoiseTensor& toy_target_instance(const ToyDataset& ds) { return ds.checkerboard; }

NoiseTensor toy_sample_category(const ToyDataset& ds, int target_class, RngStream& rng) {
  if (target_class < 0 || target_class >= static_cast<int>(ds.templates.size())) {
    throw ConfigError("target_class out of range");
  }
  double amp = ds.amp_lo + (ds.amp_hi - ds.amp_lo) * rng.next_unit();
  return {ds.shape, amp * ds.templates[static_cast<std::size_t>(target_class)].data};
}

int classify_toy(const NoiseTensor& sample, const ToyDataset& ds) {
  if (sample.numel() != ds.templates[0].numel()) {
    throw ShapeError("sample shape " + shape_to_string(sample.shape) +
                     " does not match dataset shape " + shape_to_string(ds.shape));
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ds.templates.size(); ++k) {
    double d = (sample.data - ds.templates[k].data).square().sum();
    if (d < best_d) {  // strict: ties keep the lowest class id
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double toy_nearest_template_mse(const NoiseTensor& sample, const ToyDataset& ds) {
  double best = std::numeric_limits<double>::infinity();
  for (const NoiseTensor& t : ds.templates) {
    double d = (sample.data - t.data).square().mean();
    if (d < best) best = d;
  }
  return best;
}

}  // namespace pddlab
