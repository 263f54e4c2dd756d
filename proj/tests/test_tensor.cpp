#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pddlab/errors.hpp"
#include "pddlab/ngt.hpp"
#include "pddlab/tensor.hpp"

using namespace pddlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  fs::path dir = fs::temp_directory_path() / "pddlab_tensor_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<unsigned char>((x >> (8 * i)) & 0xff));
}

// Minimal well-formed file: shape {2}, f64 payload {1.5, -2.0}.
std::vector<unsigned char> tiny_ngt() {
  std::vector<unsigned char> b{'N', 'G', 'T', '1'};
  push_u32(b, 1);
  push_u32(b, 2);
  b.push_back(0);
  double payload[2] = {1.5, -2.0};
  const unsigned char* p = reinterpret_cast<const unsigned char*>(payload);
  b.insert(b.end(), p, p + 16);
  return b;
}

long long thrown_offset(const fs::path& path) {
  try {
    load_ngt(path);
  } catch (const FormatError& e) {
    return e.offset;
  }
  return -2;
}

}  // namespace

TEST_CASE("shape utilities") {
  CHECK(shape_numel({3, 32, 32}) == 3072);
  CHECK(shape_numel({7}) == 7);
  CHECK_THROWS_AS(shape_numel({}), ShapeError);
  CHECK_THROWS_AS(shape_numel({4, 0, 2}), ShapeError);

  CHECK(channel_count({3, 32, 32}) == 3);
  CHECK(channel_count({2, 3, 4, 5}) == 2);
  CHECK(channel_count({8, 8}) == 1);
  CHECK(channel_count({64}) == 1);

  CHECK(shape_to_string({3, 32, 32}) == "[3,32,32]");
  CHECK(same_shape({8, 8}, {8, 8}));
  CHECK(!same_shape({8, 8}, {64}));
}

TEST_CASE("trigger validation and cached mean") {
  NoiseTensor delta = make_filled({8, 8}, 0.25);
  CHECK_THROWS_AS(make_trigger(delta, -0.1), ConfigError);
  CHECK_THROWS_AS(make_trigger(delta, 1.5), ConfigError);

  TriggerPattern t = make_trigger(delta, 0.6);
  CHECK(t.mu_delta.data.size() == 64);
  CHECK((t.mu_delta.data - 0.4 * 0.25).abs().maxCoeff() == 0.0);

  t.delta.data[0] = -1.0;
  refresh_trigger_mean(t);
  CHECK(t.mu_delta.data[0] == 0.4 * -1.0);
}

TEST_CASE("blend edge cases follow the mixture law") {
  NoiseTensor delta = make_filled({1}, 1.0);
  NoiseTensor eps = make_filled({1}, 0.0);

  // gamma 0.6, delta 1, eps 0: poisoned noise is (1-0.6)*1 = 0.4
  TriggerPattern t = make_trigger(delta, 0.6);
  CHECK(blend_trigger(t, eps).data[0] == doctest::Approx(0.4).epsilon(1e-15));

  // gamma 1 suppresses the trigger entirely
  RngStream rng(3, 0);
  NoiseTensor delta2 = sample_gaussian({4, 4}, rng);
  NoiseTensor noise = sample_gaussian({4, 4}, rng);
  TriggerPattern full = make_trigger(delta2, 1.0);
  CHECK((blend_trigger(full, noise).data == noise.data).all());

  // gamma 0 is the bare trigger
  TriggerPattern none = make_trigger(delta2, 0.0);
  CHECK((blend_trigger(none, noise).data == delta2.data).all());

  NoiseTensor wrong = make_zeros({3, 3});
  CHECK_THROWS_AS(blend_trigger(full, wrong), ShapeError);
}

TEST_CASE("blended noise is centered on the trigger mean") {
  RngStream rng(11, 0);
  TriggerPattern t = make_trigger(sample_gaussian({8, 8}, rng), 0.6);
  const int n = 10000;
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(64);
  for (int i = 0; i < n; ++i) mean += blend_trigger(t, sample_gaussian({8, 8}, rng)).data;
  mean /= n;
  // Each element's estimator has sd gamma/sqrt(n); 5 sigma over 64 elements
  // still has false-alarm odds around 4e-5.
  double bound = 5.0 * t.gamma / std::sqrt(static_cast<double>(n));
  CHECK((mean - t.mu_delta.data).abs().maxCoeff() < bound);
}

TEST_CASE("gaussian tensors honor shape and determinism") {
  NoiseTensor a = sample_gaussian({3, 5, 7}, RngSeed{9, 1});
  CHECK(a.shape == Shape{3, 5, 7});
  CHECK(a.numel() == 105);
  CHECK(a.all_finite());
  NoiseTensor b = sample_gaussian({3, 5, 7}, RngSeed{9, 1});
  CHECK((a.data == b.data).all());
}

TEST_CASE("tensor files round-trip bit-exactly in f64") {
  fs::path path = temp_file("roundtrip64.ngt");
  NoiseTensor orig = sample_gaussian({3, 4, 5}, RngSeed{21, 0});
  save_ngt(path, orig);
  NoiseTensor back = load_ngt(path);
  CHECK(back.shape == orig.shape);
  CHECK((back.data == orig.data).all());
}

TEST_CASE("compact f32 files widen losslessly from float") {
  fs::path path = temp_file("roundtrip32.ngt");
  NoiseTensor orig = sample_gaussian({6, 6}, RngSeed{22, 0});
  save_ngt(path, orig, true);
  NoiseTensor back = load_ngt(path);
  REQUIRE(back.numel() == orig.numel());
  for (Eigen::Index i = 0; i < back.data.size(); ++i) {
    CHECK(back.data[i] == static_cast<double>(static_cast<float>(orig.data[i])));
  }
}

TEST_CASE("well-formed hand-built file parses") {
  fs::path path = temp_file("tiny.ngt");
  write_bytes(path, tiny_ngt());
  NoiseTensor t = load_ngt(path);
  CHECK(t.shape == Shape{2});
  CHECK(t.data[0] == 1.5);
  CHECK(t.data[1] == -2.0);
}

TEST_CASE("malformed files report the failing byte offset") {
  fs::path path = temp_file("broken.ngt");

  SUBCASE("bad magic at offset 0") {
    auto b = tiny_ngt();
    b[0] = 'X';
    write_bytes(path, b);
    CHECK(thrown_offset(path) == 0);
  }
  SUBCASE("truncated rank field at offset 4") {
    write_bytes(path, {'N', 'G', 'T', '1', 0x01});
    CHECK(thrown_offset(path) == 4);
  }
  SUBCASE("truncated second dim field") {
    std::vector<unsigned char> b{'N', 'G', 'T', '1'};
    push_u32(b, 2);
    push_u32(b, 3);  // second dim missing
    write_bytes(path, b);
    CHECK(thrown_offset(path) == 12);
  }
  SUBCASE("truncated dtype byte") {
    std::vector<unsigned char> b{'N', 'G', 'T', '1'};
    push_u32(b, 1);
    push_u32(b, 2);
    write_bytes(path, b);
    CHECK(thrown_offset(path) == 12);
  }
  SUBCASE("unknown dtype code") {
    auto b = tiny_ngt();
    b[12] = 7;
    write_bytes(path, b);
    CHECK(thrown_offset(path) == 12);
  }
  SUBCASE("truncated payload reports file end") {
    auto b = tiny_ngt();
    b.resize(b.size() - 3);
    write_bytes(path, b);
    CHECK(thrown_offset(path) == static_cast<long long>(b.size()));
  }
  SUBCASE("trailing bytes after payload") {
    auto b = tiny_ngt();
    std::size_t expected_end = b.size();
    b.push_back(0xab);
    write_bytes(path, b);
    CHECK(thrown_offset(path) == static_cast<long long>(expected_end));
  }
  SUBCASE("rank 0 is a shape error") {
    std::vector<unsigned char> b{'N', 'G', 'T', '1'};
    push_u32(b, 0);
    b.push_back(0);
    write_bytes(path, b);
    CHECK_THROWS_AS(load_ngt(path), ShapeError);
  }
  SUBCASE("zero dimension is a shape error") {
    std::vector<unsigned char> b{'N', 'G', 'T', '1'};
    push_u32(b, 2);
    push_u32(b, 4);
    push_u32(b, 0);
    b.push_back(0);
    write_bytes(path, b);
    CHECK_THROWS_AS(load_ngt(path), ShapeError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_ngt(temp_file("nope.ngt")), FormatError); }
}
