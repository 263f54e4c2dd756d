#include "pddlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace pddlab {
namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
  unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

inline void philox_round(std::array<std::uint64_t, 4>& c, const std::array<std::uint64_t, 2>& k) {
  std::uint64_t hi0, lo0, hi1, lo1;
  mulhilo(kMul0, c[0], hi0, lo0);
  mulhilo(kMul1, c[2], hi1, lo1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline double unit_from_raw(std::uint64_t raw) {
  return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

}  // namespace

void RngStream::next_block() {
  // 256-bit counter increments before the block is generated.
  for (int i = 0; i < 4; ++i) {
    if (++counter_[i] != 0) break;
  }
  std::array<std::uint64_t, 4> c = counter_;
  std::array<std::uint64_t, 2> k = key_;
  philox_round(c, k);
  for (int r = 1; r < 10; ++r) {
    k[0] += kWeyl0;
    k[1] += kWeyl1;
    philox_round(c, k);
  }
  block_ = c;
  pos_ = 0;
}

std::uint64_t RngStream::next_u64() {
  if (pos_ == 4) next_block();
  return block_[pos_++];
}

double RngStream::next_unit() { return unit_from_raw(next_u64()); }

double RngStream::next_gaussian() {
  double pair[2];
  fill_gaussian(pair, 2);
  return pair[0];
}

void RngStream::fill_gaussian(double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; i += 2) {
    // u1 is shifted into (0, 1] so the log never sees zero.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = unit_from_raw(next_u64());
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    out[i] = r * std::cos(a);
    if (i + 1 < n) out[i + 1] = r * std::sin(a);
  }
}

Eigen::ArrayXd RngStream::gaussian_array(std::size_t n) {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(n));
  fill_gaussian(out.data(), n);
  return out;
}

}  // namespace pddlab
