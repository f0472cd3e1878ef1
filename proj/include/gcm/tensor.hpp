#pragma once

// Dense row-major 2-D matrices with multiplication counting.
//
// Every matrix-valued quantity in the library (features, keys, queries,
// values, contexts, affinities) is a Matrix<T>. Spatial grids are flattened
// location-major with index y * W + x.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcm {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyMemoryError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <std::floating_point T>
constexpr DType dtype_of() {
  static_assert(std::same_as<T, float> || std::same_as<T, double>, "only f32/f64 are supported");
  return std::same_as<T, float> ? DType::F32 : DType::F64;
}

constexpr std::size_t dtype_width(DType d) { return d == DType::F32 ? 4 : 8; }
std::string to_string(DType d);
DType parse_dtype(const std::string& s);

// Instrumentation for one scope (one module invocation, one streaming run).
// Transients are tracked through TransientLease; persistent state is reported
// by whoever owns it.
struct OpCounters {
  std::uint64_t multiplications = 0;
  std::uint64_t peak_transient_floats = 0;
  std::uint64_t persistent_floats = 0;
  std::uint64_t live_transient_floats = 0;

  void reset() { *this = OpCounters{}; }
  void add_multiplications(std::uint64_t n) { multiplications += n; }
  void acquire_transient(std::uint64_t n);
  void release_transient(std::uint64_t n);
  void note_persistent(std::uint64_t n) {
    if (n > persistent_floats) persistent_floats = n;
  }
};

class TransientLease {
 public:
  TransientLease(OpCounters& counters, std::uint64_t floats) : counters_(&counters), floats_(floats) {
    counters_->acquire_transient(floats_);
  }
  ~TransientLease() { release(); }
  TransientLease(const TransientLease&) = delete;
  TransientLease& operator=(const TransientLease&) = delete;

  void release() {
    if (counters_ != nullptr) {
      counters_->release_transient(floats_);
      counters_ = nullptr;
    }
  }

 private:
  OpCounters* counters_;
  std::uint64_t floats_;
};

template <std::floating_point T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}
  // Throws ShapeError on length mismatch, NumericError on NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows);
  static Matrix filled(std::size_t rows, std::size_t cols, T value);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool all_finite() const;
  std::string shape_string() const;

  // Appends the rows of `other` below the existing rows (spatial concatenation).
  void append_rows(const Matrix& other);
  void reserve_rows(std::size_t rows) { data_.reserve(rows * cols_); }

  template <std::floating_point U>
  Matrix<U> cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// a (m x k) * b (k x n); adds m*k*n to counters.multiplications.
template <std::floating_point T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b, OpCounters& counters);

// aᵀ * b without materializing the transpose; counts like matmul(transpose(a), b).
template <std::floating_point T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b, OpCounters& counters);

// a * bᵀ without materializing the transpose; counts like matmul(a, transpose(b)).
template <std::floating_point T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b, OpCounters& counters);

template <std::floating_point T>
Matrix<T> transpose(const Matrix<T>& a);

template <std::floating_point T>
Matrix<T> softmax_rows(const Matrix<T>& a);

template <std::floating_point T>
Matrix<T> softmax_cols(const Matrix<T>& a);

// alpha * a + beta * b
template <std::floating_point T>
Matrix<T> scale_add(const Matrix<T>& a, T alpha, const Matrix<T>& b, T beta);

template <std::floating_point T>
Matrix<T> vstack(std::span<const Matrix<T>> parts);

template <std::floating_point T>
T max_abs(const Matrix<T>& a);

template <std::floating_point T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b);

std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace gcm
