#include "pddlab/denoiser.hpp"

#include <cmath>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"

namespace pddlab {
namespace {

inline Eigen::MatrixXd silu(const Eigen::MatrixXd& a) {
  return (a.array() * a.array().logistic()).matrix();
}

inline Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& a) {
  Eigen::ArrayXXd s = a.array().logistic();
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

void xavier_fill(Eigen::MatrixXd& w, RngStream& rng) {
  double limit = std::sqrt(6.0 / (w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = (2.0 * rng.next_unit() - 1.0) * limit;
  }
}

}  // namespace

DenoiserModel make_denoiser(const Shape& data_shape, int hidden_dim, RngStream& rng) {
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  DenoiserModel m;
  m.data_shape = data_shape;
  m.input_dim = static_cast<int>(shape_numel(data_shape));
  m.hidden_dim = hidden_dim;
  m.w1.resize(m.input_dim + kTimeEmbedDim, hidden_dim);
  m.w2.resize(hidden_dim, hidden_dim);
  m.w3.resize(hidden_dim, m.input_dim);
  xavier_fill(m.w1, rng);
  xavier_fill(m.w2, rng);
  xavier_fill(m.w3, rng);
  m.b1 = Eigen::RowVectorXd::Zero(hidden_dim);
  m.b2 = Eigen::RowVectorXd::Zero(hidden_dim);
  m.b3 = Eigen::RowVectorXd::Zero(m.input_dim);
  m.ws = Eigen::MatrixXd::Zero(m.input_dim, m.input_dim);
  return m;
}

Eigen::RowVectorXd time_embedding(int t) {
  Eigen::RowVectorXd emb(kTimeEmbedDim);
  for (int k = 0; k < kTimeEmbedDim / 2; ++k) {
    double freq = std::exp(-std::log(10000.0) * k / (kTimeEmbedDim / 2.0));
    emb[2 * k] = std::sin(t * freq);
    emb[2 * k + 1] = std::cos(t * freq);
  }
  return emb;
}

Eigen::MatrixXd denoiser_forward(const DenoiserModel& m, const Eigen::MatrixXd& x,
                                 const std::vector<int>& t, DenoiserActivations* cache) {
  if (x.cols() != m.input_dim) throw ShapeError("denoiser input width mismatch");
  if (static_cast<std::size_t>(x.rows()) != t.size()) {
    throw ShapeError("denoiser batch size does not match timestep count");
  }
  Eigen::MatrixXd in(x.rows(), m.input_dim + kTimeEmbedDim);
  in.leftCols(m.input_dim) = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    in.row(r).rightCols(kTimeEmbedDim) = time_embedding(t[static_cast<std::size_t>(r)]);
  }
  Eigen::MatrixXd a1 = (in * m.w1).rowwise() + m.b1;
  Eigen::MatrixXd z1 = silu(a1);
  Eigen::MatrixXd a2 = (z1 * m.w2).rowwise() + m.b2;
  Eigen::MatrixXd z2 = silu(a2);
  Eigen::MatrixXd out = ((z2 * m.w3).rowwise() + m.b3) + x * m.ws;
  if (cache) {
    cache->in = std::move(in);
    cache->a1 = std::move(a1);
    cache->z1 = std::move(z1);
    cache->a2 = std::move(a2);
    cache->z2 = std::move(z2);
    cache->out = out;
  }
  return out;
}

NoiseTensor denoiser_forward(const DenoiserModel& m, const NoiseTensor& x, int t) {
  if (!same_shape(x.shape, m.data_shape)) {
    throw ShapeError("denoiser input shape " + shape_to_string(x.shape) +
                     " does not match model shape " + shape_to_string(m.data_shape));
  }
  Eigen::MatrixXd row = x.data.matrix().transpose();
  Eigen::MatrixXd out = denoiser_forward(m, row, {t});
  return {x.shape, out.row(0).array().transpose()};
}

DenoiserGrads make_zero_grads(const DenoiserModel& m) {
  DenoiserGrads g;
  g.w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
  g.w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
  g.w3 = Eigen::MatrixXd::Zero(m.w3.rows(), m.w3.cols());
  g.ws = Eigen::MatrixXd::Zero(m.ws.rows(), m.ws.cols());
  g.b1 = Eigen::RowVectorXd::Zero(m.b1.size());
  g.b2 = Eigen::RowVectorXd::Zero(m.b2.size());
  g.b3 = Eigen::RowVectorXd::Zero(m.b3.size());
  return g;
}

void accumulate(DenoiserGrads& acc, const DenoiserGrads& g) {
  acc.w1 += g.w1;
  acc.w2 += g.w2;
  acc.w3 += g.w3;
  acc.ws += g.ws;
  acc.b1 += g.b1;
  acc.b2 += g.b2;
  acc.b3 += g.b3;
}

void scale(DenoiserGrads& g, double s) {
  g.w1 *= s;
  g.w2 *= s;
  g.w3 *= s;
  g.ws *= s;
  g.b1 *= s;
  g.b2 *= s;
  g.b3 *= s;
}

Eigen::MatrixXd denoiser_backward(const DenoiserModel& m, const DenoiserActivations& act,
                                  const Eigen::MatrixXd& upstream, DenoiserGrads* grads) {
  if (upstream.rows() != act.out.rows() || upstream.cols() != act.out.cols()) {
    throw ShapeError("upstream shape does not match denoiser output");
  }
  const Eigen::MatrixXd x = act.in.leftCols(m.input_dim);
  Eigen::MatrixXd dz2 = upstream * m.w3.transpose();
  Eigen::MatrixXd da2 = dz2.cwiseProduct(silu_grad(act.a2));
  Eigen::MatrixXd dz1 = da2 * m.w2.transpose();
  Eigen::MatrixXd da1 = dz1.cwiseProduct(silu_grad(act.a1));
  if (grads) {
    grads->w3 = act.z2.transpose() * upstream;
    grads->b3 = upstream.colwise().sum();
    grads->w2 = act.z1.transpose() * da2;
    grads->b2 = da2.colwise().sum();
    grads->w1 = act.in.transpose() * da1;
    grads->b1 = da1.colwise().sum();
    grads->ws = x.transpose() * upstream;
  }
  return (da1 * m.w1.transpose()).leftCols(m.input_dim) + upstream * m.ws.transpose();
}

std::vector<ParamSegment> param_segments(const DenoiserModel& m) {
  std::vector<ParamSegment> segs;
  std::size_t off = 0;
  auto add = [&](const char* name, std::size_t n) {
    segs.push_back({name, off, n});
    off += n;
  };
  add("w1", static_cast<std::size_t>(m.w1.size()));
  add("b1", static_cast<std::size_t>(m.b1.size()));
  add("w2", static_cast<std::size_t>(m.w2.size()));
  add("b2", static_cast<std::size_t>(m.b2.size()));
  add("w3", static_cast<std::size_t>(m.w3.size()));
  add("b3", static_cast<std::size_t>(m.b3.size()));
  add("ws", static_cast<std::size_t>(m.ws.size()));
  return segs;
}

std::size_t param_count(const DenoiserModel& m) {
  auto segs = param_segments(m);
  return segs.back().offset + segs.back().size;
}

namespace {

template <typename Fn>
void for_each_param_block(const DenoiserModel& m, Fn&& fn) {
  fn(m.w1.data(), m.w1.size());
  fn(m.b1.data(), m.b1.size());
  fn(m.w2.data(), m.w2.size());
  fn(m.b2.data(), m.b2.size());
  fn(m.w3.data(), m.w3.size());
  fn(m.b3.data(), m.b3.size());
  fn(m.ws.data(), m.ws.size());
}

}  // namespace

Eigen::ArrayXd params_to_vec(const DenoiserModel& m) {
  Eigen::ArrayXd v(static_cast<Eigen::Index>(param_count(m)));
  Eigen::Index off = 0;
  for_each_param_block(m, [&](const double* p, Eigen::Index n) {
    v.segment(off, n) = Eigen::Map<const Eigen::ArrayXd>(p, n);
    off += n;
  });
  return v;
}

void vec_to_params(DenoiserModel& m, const Eigen::Ref<const Eigen::ArrayXd>& v) {
  if (static_cast<std::size_t>(v.size()) != param_count(m)) {
    throw ShapeError("parameter vector length mismatch");
  }
  Eigen::Index off = 0;
  auto take = [&](double* p, Eigen::Index n) {
    Eigen::Map<Eigen::ArrayXd>(p, n) = v.segment(off, n);
    off += n;
  };
  take(m.w1.data(), m.w1.size());
  take(m.b1.data(), m.b1.size());
  take(m.w2.data(), m.w2.size());
  take(m.b2.data(), m.b2.size());
  take(m.w3.data(), m.w3.size());
  take(m.b3.data(), m.b3.size());
  take(m.ws.data(), m.ws.size());
}

Eigen::ArrayXd grads_to_vec(const DenoiserModel& m, const DenoiserGrads& g) {
  Eigen::ArrayXd v(static_cast<Eigen::Index>(param_count(m)));
  Eigen::Index off = 0;
  auto put = [&](const Eigen::MatrixXd& w) {
    v.segment(off, w.size()) = Eigen::Map<const Eigen::ArrayXd>(w.data(), w.size());
    off += w.size();
  };
  auto put_row = [&](const Eigen::RowVectorXd& b) {
    v.segment(off, b.size()) = Eigen::Map<const Eigen::ArrayXd>(b.data(), b.size());
    off += b.size();
  };
  put(g.w1);
  put_row(g.b1);
  put(g.w2);
  put_row(g.b2);
  put(g.w3);
  put_row(g.b3);
  put(g.ws);
  return v;
}

std::uint64_t param_checksum(const DenoiserModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for_each_param_block(m, [&](const double* p, Eigen::Index n) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p);
    for (Eigen::Index i = 0; i < n * static_cast<Eigen::Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  });
  return h;
}

}  // namespace pddlab
