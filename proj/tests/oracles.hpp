#pragma once

// Independent reference computations for the unit tests. Nothing here calls
// into the library's arithmetic; everything is plain loops over nested
// vectors in long double.

#include <cstddef>
#include <random>
#include <vector>

#include "gcm/tensor.hpp"

namespace oracle {

using Grid = std::vector<std::vector<long double>>;

template <typename T>
Grid to_grid(const gcm::Matrix<T>& m) {
  Grid g(m.rows(), std::vector<long double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

inline Grid triple_loop_matmul(const Grid& a, const Grid& b) {
  const std::size_t m = a.size(), k = b.size(), n = b.empty() ? 0 : b[0].size();
  Grid out(m, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i][j] += a[i][p] * b[p][j];
  return out;
}

inline Grid transposed(const Grid& a) {
  if (a.empty()) return {};
  Grid out(a[0].size(), std::vector<long double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
  return out;
}

template <typename T>
long double max_abs_diff(const gcm::Matrix<T>& m, const Grid& g) {
  long double worst = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const long double d = static_cast<long double>(m(i, j)) - g[i][j];
      worst = d < 0 ? (-d > worst ? -d : worst) : (d > worst ? d : worst);
    }
  return worst;
}

template <typename T>
gcm::Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  gcm::Matrix<T> m(rows, cols);
  for (auto& v : m.data()) v = static_cast<T>(dist(rng));
  return m;
}

// Σ_loc key_locᵀ value_loc, one outer product per location.
template <typename T>
Grid outer_product_sum(const gcm::Matrix<T>& keys, const gcm::Matrix<T>& values) {
  Grid out(keys.cols(), std::vector<long double>(values.cols(), 0.0L));
  for (std::size_t loc = 0; loc < keys.rows(); ++loc)
    for (std::size_t i = 0; i < keys.cols(); ++i)
      for (std::size_t j = 0; j < values.cols(); ++j)
        out[i][j] += static_cast<long double>(keys(loc, i)) * values(loc, j);
  return out;
}

// For every query location: (1/frames) Σ_mem (q · k_mem) v_mem.
template <typename T>
Grid double_loop_attention(const gcm::Matrix<T>& queries, const gcm::Matrix<T>& keys, const gcm::Matrix<T>& values,
                           std::size_t frames) {
  Grid out(queries.rows(), std::vector<long double>(values.cols(), 0.0L));
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    for (std::size_t m = 0; m < keys.rows(); ++m) {
      long double score = 0;
      for (std::size_t c = 0; c < queries.cols(); ++c) score += static_cast<long double>(queries(i, c)) * keys(m, c);
      for (std::size_t j = 0; j < values.cols(); ++j) out[i][j] += score * values(m, j);
    }
    for (auto& v : out[i]) v /= static_cast<long double>(frames);
  }
  return out;
}

}  // namespace oracle
