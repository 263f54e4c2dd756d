#pragma once

#include "pddlab/rng.hpp"
#include "pddlab/tensor.hpp"

namespace pddlab {

// Desk-scale dataset: 8x8 single-channel images in [-1, 1]. Four classes of
// corner-anchored Gaussian bumps (category targets) and a fixed +/-1
// checkerboard (instance target).
struct ToyDataset {
  int side = 8;
  Shape shape{8, 8};
  std::vector<NoiseTensor> templates;  // one per class, unit amplitude
  NoiseTensor checkerboard;            // instance-mode target
  double amp_lo = 0.8;
  double amp_hi = 1.0;
};

ToyDataset make_toy_dataset();

// +/-1 checkerboard of any shape: parity of row+column over the trailing
// two axes (flat index parity for rank 1), repeated across leading axes.
// At {8,8} this is exactly the toy dataset's instance target.
NoiseTensor checkerboard_tensor(const Shape& shape);

// Random class with amplitude jitter; draws one unit for the class, one for
// the amplitude.
NoiseTensor toy_sample_benign(const ToyDataset& ds, RngStream& rng);

// Instance-mode target: the identical checkerboard every call.
const NoiseTensor& toy_target_instance(const ToyDataset& ds);

// Category-mode target: jittered sample of the designated class.
NoiseTensor toy_sample_category(const ToyDataset& ds, int target_class, RngStream& rng);

// Nearest template by Euclidean distance; ties go to the lowest class id.
int classify_toy(const NoiseTensor& sample, const ToyDataset& ds);

// Mean squared distance to the nearest template (validity gauge for
// generated samples).
double toy_nearest_template_mse(const NoiseTensor& sample, const ToyDataset& ds);

}  // namespace pddlab
