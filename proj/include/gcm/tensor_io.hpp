#pragma once

// Binary tensor files ("GCT1").
//
//   offset  size  field
//   0       4     magic "GCT1"
//   4       4     rows, u32 little-endian
//   8       4     cols, u32 little-endian
//   12      1     dtype, 0 = f32, 1 = f64
//   13      ...   rows*cols IEEE-754 values, little-endian, row-major
//
// Round trips are bit-exact.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

#include "gcm/tensor.hpp"

namespace gcm {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using AnyMatrix = std::variant<Matrix<float>, Matrix<double>>;

template <std::floating_point T>
void write_tensor(std::ostream& out, const Matrix<T>& m);

template <std::floating_point T>
void write_tensor(const std::filesystem::path& path, const Matrix<T>& m);

AnyMatrix read_tensor_any(std::istream& in);
AnyMatrix read_tensor_any(const std::filesystem::path& path);

// Reads a tensor of either width and converts it to T.
template <std::floating_point T>
Matrix<T> read_tensor(const std::filesystem::path& path);

// One-line "<key> <count>" sidecars used by state checkpoints.
void write_counter_sidecar(const std::filesystem::path& path, const std::string& key, std::uint64_t value);
std::uint64_t read_counter_sidecar(const std::filesystem::path& path, const std::string& key);

}  // namespace gcm
