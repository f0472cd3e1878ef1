#include "gcm/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace gcm {
namespace {

constexpr std::array<char, 4> kMagic = {'G', 'C', 'T', '1'};

template <typename U>
U to_little_endian(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::array<unsigned char, sizeof(U)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(U));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&v, bytes.data(), sizeof(U));
    return v;
  }
}

template <typename U>
void put(std::ostream& out, U v) {
  v = to_little_endian(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw FormatError("truncated tensor file");
  return to_little_endian(v);
}

// Floats are moved through same-width unsigned integers so byte order is
// handled without touching the value.
template <std::floating_point T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <std::floating_point T>
Matrix<T> read_payload(std::istream& in, std::uint32_t rows, std::uint32_t cols) {
  std::vector<T> data(static_cast<std::size_t>(rows) * cols);
  for (auto& v : data) v = std::bit_cast<T>(get<Bits<T>>(in));
  return Matrix<T>(rows, cols, std::move(data));
}

}  // namespace

template <std::floating_point T>
void write_tensor(std::ostream& out, const Matrix<T>& m) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) throw FormatError("tensor too large for GCT1");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
  for (T v : m.data()) put<Bits<T>>(out, std::bit_cast<Bits<T>>(v));
  if (!out) throw FormatError("failed writing tensor");
}

template <std::floating_point T>
void write_tensor(const std::filesystem::path& path, const Matrix<T>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, m);
}

AnyMatrix read_tensor_any(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("bad tensor magic (expected GCT1)");
  const auto rows = get<std::uint32_t>(in);
  const auto cols = get<std::uint32_t>(in);
  const auto dtype = get<std::uint8_t>(in);
  switch (dtype) {
    case 0:
      return read_payload<float>(in, rows, cols);
    case 1:
      return read_payload<double>(in, rows, cols);
    default:
      throw FormatError("unknown tensor dtype byte " + std::to_string(dtype));
  }
}

AnyMatrix read_tensor_any(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor_any(in);
}

template <std::floating_point T>
Matrix<T> read_tensor(const std::filesystem::path& path) {
  return std::visit(
      [](auto&& m) -> Matrix<T> {
        using Stored = typename std::decay_t<decltype(m)>::value_type;
        if constexpr (std::same_as<Stored, T>) {
          return std::move(m);
        } else {
          return m.template cast<T>();
        }
      },
      read_tensor_any(path));
}

void write_counter_sidecar(const std::filesystem::path& path, const std::string& key, std::uint64_t value) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << key << ' ' << value << '\n';
}

std::uint64_t read_counter_sidecar(const std::filesystem::path& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string found;
  std::uint64_t value = 0;
  if (!(in >> found >> value) || found != key) {
    throw FormatError("sidecar " + path.string() + " does not record '" + key + "'");
  }
  return value;
}

template void write_tensor(std::ostream&, const Matrix<float>&);
template void write_tensor(std::ostream&, const Matrix<double>&);
template void write_tensor(const std::filesystem::path&, const Matrix<float>&);
template void write_tensor(const std::filesystem::path&, const Matrix<double>&);
template Matrix<float> read_tensor(const std::filesystem::path&);
template Matrix<double> read_tensor(const std::filesystem::path&);

}  // namespace gcm
