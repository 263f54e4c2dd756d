#include "pddlab/ngt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "pddlab/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");

namespace pddlab {
namespace {

constexpr char kMagic[4] = {'N', 'G', 'T', '1'};

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tensor file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32(const std::vector<char>& bytes, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + off, 4);
  return v;
}

}  // namespace

NoiseTensor load_ngt(const std::filesystem::path& path) {
  std::vector<char> bytes = read_all(path);
  const std::string name = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(name + ": bad magic, expected NGT1", 0);
  }
  std::size_t off = 4;
  if (bytes.size() < off + 4) throw FormatError(name + ": truncated rank field", off);
  std::uint32_t rank = read_u32(bytes, off);
  off += 4;
  if (rank == 0) throw ShapeError(name + ": invalid shape: rank 0");

  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    if (bytes.size() < off + 4) throw FormatError(name + ": truncated dim field", off);
    std::uint32_t d = read_u32(bytes, off);
    off += 4;
    if (d == 0) throw ShapeError(name + ": invalid shape: zero dimension");
    shape[i] = d;
  }
  std::size_t n = shape_numel(shape);

  if (bytes.size() < off + 1) throw FormatError(name + ": truncated dtype field", off);
  std::uint8_t dtype = static_cast<std::uint8_t>(bytes[off]);
  off += 1;
  if (dtype > 1) throw FormatError(name + ": unknown dtype " + std::to_string(dtype), off - 1);

  std::size_t elem = dtype == 0 ? 8 : 4;
  if (bytes.size() < off + n * elem) {
    throw FormatError(name + ": truncated payload, need " + std::to_string(n * elem) +
                          " bytes, have " + std::to_string(bytes.size() - off),
                      bytes.size());
  }
  if (bytes.size() > off + n * elem) {
    throw FormatError(name + ": trailing bytes after payload", off + n * elem);
  }

  NoiseTensor out{shape, Eigen::ArrayXd(static_cast<Eigen::Index>(n))};
  if (dtype == 0) {
    std::memcpy(out.data.data(), bytes.data() + off, n * 8);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + off + i * 4, 4);
      out.data[static_cast<Eigen::Index>(i)] = static_cast<double>(f);
    }
  }
  return out;
}

void save_ngt(const std::filesystem::path& path, const NoiseTensor& tensor, bool as_f32) {
  std::size_t n = shape_numel(tensor.shape);
  if (n != tensor.numel()) {
    throw ShapeError("tensor data length " + std::to_string(tensor.numel()) +
                     " does not match shape " + shape_to_string(tensor.shape));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write tensor file: " + path.string());
  out.write(kMagic, 4);
  std::uint32_t rank = static_cast<std::uint32_t>(tensor.shape.size());
  out.write(reinterpret_cast<const char*>(&rank), 4);
  for (std::size_t d : tensor.shape) {
    std::uint32_t v = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  std::uint8_t dtype = as_f32 ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&dtype), 1);
  if (as_f32) {
    for (Eigen::Index i = 0; i < tensor.data.size(); ++i) {
      float f = static_cast<float>(tensor.data[i]);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  } else {
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(n * 8));
  }
  if (!out) throw FormatError("short write to tensor file: " + path.string());
}

}  // namespace pddlab
