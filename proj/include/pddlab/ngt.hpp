#pragma once

#include <filesystem>

#include "pddlab/tensor.hpp"

namespace pddlab {

// Binary tensor file format:
//   bytes 0..3   magic "NGT1"
//   u32 LE       rank (>= 1)
//   rank x u32   dims, each >= 1
//   u8           dtype: 0 = float64, 1 = float32
//   payload      row-major little-endian values, nothing after
// Loads always produce float64 tensors. Malformed files raise FormatError
// with the byte offset of the problem; a zero or empty shape is ShapeError.
NoiseTensor load_ngt(const std::filesystem::path& path);

void save_ngt(const std::filesystem::path& path, const NoiseTensor& tensor,
              bool as_f32 = false);

}  // namespace pddlab
