#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

namespace pddlab {

// Fixed-precision decimal forms. 17 significant digits round-trip any
// double bit-exactly; 9 digits are the CSV export precision.
std::string format_real(double v);
std::string format_real9(double v);

// JSON array of reals at 17 significant digits.
std::string json_real_array(const Eigen::ArrayXd& values);

// 64-bit FNV-1a. Artifact fingerprints hash the file bytes as written.
std::uint64_t fnv1a(const void* data, std::size_t n);
std::uint64_t fnv1a_string(const std::string& s);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

// Writes text atomically enough for our purposes and errors loudly.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pddlab
