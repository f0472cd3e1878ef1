#include "gcm/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace gcm {

std::string to_string(DType d) { return d == DType::F32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& s) {
  if (s == "f32" || s == "float32") return DType::F32;
  if (s == "f64" || s == "float64") return DType::F64;
  throw ConfigError("unknown dtype '" + s + "' (expected f32 or f64)");
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void OpCounters::acquire_transient(std::uint64_t n) {
  live_transient_floats += n;
  peak_transient_floats = std::max(peak_transient_floats, live_transient_floats);
}

void OpCounters::release_transient(std::uint64_t n) {
  live_transient_floats -= std::min(n, live_transient_floats);
}

template <std::floating_point T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match shape " +
                     gcm::shape_string(rows_, cols_));
  }
  if (!all_finite()) throw NumericError("matrix data contains NaN or Inf");
}

template <std::floating_point T>
Matrix<T> Matrix<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<T> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged row list passed to Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

template <std::floating_point T>
Matrix<T> Matrix<T>::filled(std::size_t rows, std::size_t cols, T value) {
  Matrix m(rows, cols);
  std::fill(m.data_.begin(), m.data_.end(), value);
  return m;
}

template <std::floating_point T>
Matrix<T> Matrix<T>::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
  return m;
}

template <std::floating_point T>
bool Matrix<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <std::floating_point T>
std::string Matrix<T>::shape_string() const {
  return gcm::shape_string(rows_, cols_);
}

template <std::floating_point T>
void Matrix<T>::append_rows(const Matrix& other) {
  if (rows_ == 0 && cols_ == 0) cols_ = other.cols_;
  if (other.cols_ != cols_) {
    throw ShapeError("cannot append " + other.shape_string() + " rows to " + shape_string());
  }
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

template <std::floating_point T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b, OpCounters& counters) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " * " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix<T> out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    T* out_row = out.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const T lhs = a(i, p);
      const T* rhs = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += lhs * rhs[j];
    }
  }
  counters.add_multiplications(static_cast<std::uint64_t>(m) * k * n);
  return out;
}

template <std::floating_point T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b, OpCounters& counters) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul shape mismatch: transpose(" + a.shape_string() + ") * " + b.shape_string());
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Matrix<T> out(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const T* lhs = a.row(p).data();
    const T* rhs = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const T s = lhs[i];
      T* out_row = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += s * rhs[j];
    }
  }
  counters.add_multiplications(static_cast<std::uint64_t>(m) * k * n);
  return out;
}

template <std::floating_point T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b, OpCounters& counters) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " * transpose(" + b.shape_string() + ")");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix<T> out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const T* lhs = a.row(i).data();
    T* out_row = out.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const T* rhs = b.row(j).data();
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += lhs[p] * rhs[p];
      out_row[j] = acc;
    }
  }
  counters.add_multiplications(static_cast<std::uint64_t>(m) * k * n);
  return out;
}

template <std::floating_point T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <std::floating_point T>
Matrix<T> softmax_rows(const Matrix<T>& a) {
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto in = a.row(i);
    auto dst = out.row(i);
    if (in.empty()) continue;
    const T peak = *std::max_element(in.begin(), in.end());
    T sum{0};
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - peak);
      sum += dst[j];
    }
    for (auto& v : dst) v /= sum;
  }
  return out;
}

template <std::floating_point T>
Matrix<T> softmax_cols(const Matrix<T>& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  Matrix<T> out(rows, cols);
  if (rows == 0) return out;
  std::vector<T> peak(a.row(0).begin(), a.row(0).end());
  for (std::size_t i = 1; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) peak[j] = std::max(peak[j], a(i, j));
  std::vector<T> sum(cols, T{0});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      out(i, j) = std::exp(a(i, j) - peak[j]);
      sum[j] += out(i, j);
    }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) /= sum[j];
  return out;
}

template <std::floating_point T>
Matrix<T> scale_add(const Matrix<T>& a, T alpha, const Matrix<T>& b, T beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("scale_add shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
  }
  Matrix<T> out(a.rows(), a.cols());
  auto dst = out.data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = alpha * x[i] + beta * y[i];
  return out;
}

template <std::floating_point T>
Matrix<T> vstack(std::span<const Matrix<T>> parts) {
  Matrix<T> out;
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  if (!parts.empty()) {
    out = Matrix<T>(0, parts.front().cols());
    out.reserve_rows(rows);
  }
  for (const auto& p : parts) out.append_rows(p);
  return out;
}

template <std::floating_point T>
T max_abs(const Matrix<T>& a) {
  T m{0};
  for (T v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

template <std::floating_point T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("cannot compare " + a.shape_string() + " with " + b.shape_string());
  }
  T m{0};
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

#define GCM_INSTANTIATE(T)                                                              \
  template class Matrix<T>;                                                             \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&, OpCounters&);           \
  template Matrix<T> matmul_tn(const Matrix<T>&, const Matrix<T>&, OpCounters&);        \
  template Matrix<T> matmul_nt(const Matrix<T>&, const Matrix<T>&, OpCounters&);        \
  template Matrix<T> transpose(const Matrix<T>&);                                       \
  template Matrix<T> softmax_rows(const Matrix<T>&);                                    \
  template Matrix<T> softmax_cols(const Matrix<T>&);                                    \
  template Matrix<T> scale_add(const Matrix<T>&, T, const Matrix<T>&, T);               \
  template Matrix<T> vstack(std::span<const Matrix<T>>);                                \
  template T max_abs(const Matrix<T>&);                                                 \
  template T max_abs_diff(const Matrix<T>&, const Matrix<T>&);

GCM_INSTANTIATE(float)
GCM_INSTANTIATE(double)

#undef GCM_INSTANTIATE

}  // namespace gcm
