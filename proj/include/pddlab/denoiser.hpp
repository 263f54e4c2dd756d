#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pddlab/rng.hpp"
#include "pddlab/tensor.hpp"

namespace pddlab {

inline constexpr int kTimeEmbedDim = 32;

// Noise predictor: a two-hidden-layer SiLU MLP over [flattened input,
// sinusoidal time embedding], plus a zero-initialized linear skip from the
// input to the output. The skip costs nothing at init (output law is the
// MLP's) but lets training express near-identity maps, which keeps reverse
// trajectories from diverging on off-manifold inputs.
struct DenoiserModel {
  Shape data_shape;
  int input_dim = 0;   // product of data_shape
  int hidden_dim = 0;
  Eigen::MatrixXd w1;  // (input_dim + embed) x hidden
  Eigen::RowVectorXd b1;
  Eigen::MatrixXd w2;  // hidden x hidden
  Eigen::RowVectorXd b2;
  Eigen::MatrixXd w3;  // hidden x input_dim
  Eigen::RowVectorXd b3;
  Eigen::MatrixXd ws;  // input_dim x input_dim skip, zero at init
  long step = 0;       // training steps applied so far
  std::uint64_t seed = 0;
};

// Xavier-uniform weights (biases and skip zero), filled in storage order
// from the stream so checkpoints are reproducible from (shape, seed).
DenoiserModel make_denoiser(const Shape& data_shape, int hidden_dim, RngStream& rng);

// [sin(t*f_k), cos(t*f_k)] interleaved, f_k = 10000^(-k/16), raw integer t.
Eigen::RowVectorXd time_embedding(int t);

// Cached intermediates from a forward pass, consumed by the backward pass.
struct DenoiserActivations {
  Eigen::MatrixXd in;   // batch x (input+embed)
  Eigen::MatrixXd a1;   // pre-activation
  Eigen::MatrixXd z1;   // silu(a1)
  Eigen::MatrixXd a2;
  Eigen::MatrixXd z2;
  Eigen::MatrixXd out;  // batch x input_dim
};

// Batched forward: X is batch x input_dim, t gives one timestep per row.
Eigen::MatrixXd denoiser_forward(const DenoiserModel& m, const Eigen::MatrixXd& x,
                                 const std::vector<int>& t,
                                 DenoiserActivations* cache = nullptr);

// Single-sample convenience wrapper.
NoiseTensor denoiser_forward(const DenoiserModel& m, const NoiseTensor& x, int t);

struct DenoiserGrads {
  Eigen::MatrixXd w1, w2, w3, ws;
  Eigen::RowVectorXd b1, b2, b3;
};

DenoiserGrads make_zero_grads(const DenoiserModel& m);
void accumulate(DenoiserGrads& acc, const DenoiserGrads& g);
void scale(DenoiserGrads& g, double s);

// Exact reverse mode of <upstream, output>: fills parameter gradients when
// grads is non-null, returns the gradient w.r.t. x.
Eigen::MatrixXd denoiser_backward(const DenoiserModel& m, const DenoiserActivations& act,
                                  const Eigen::MatrixXd& upstream, DenoiserGrads* grads);

// Flat parameter order: w1, b1, w2, b2, w3, b3, ws (each in column-major
// storage order). Checkpoints, Adam state, and fingerprints all use it.
struct ParamSegment {
  std::string name;
  std::size_t offset;
  std::size_t size;
};
std::vector<ParamSegment> param_segments(const DenoiserModel& m);
std::size_t param_count(const DenoiserModel& m);
Eigen::ArrayXd params_to_vec(const DenoiserModel& m);
void vec_to_params(DenoiserModel& m, const Eigen::Ref<const Eigen::ArrayXd>& v);
Eigen::ArrayXd grads_to_vec(const DenoiserModel& m, const DenoiserGrads& g);
std::uint64_t param_checksum(const DenoiserModel& m);

}  // namespace pddlab
