#pragma once

// Global context memory: a fixed C_N x C_M summary of every absorbed frame.
//
//   extract:    C_t = k(X_t)ᵀ v(X_t)
//   update:     G_t = ((t-1)/t) G_{t-1} + (1/t) C_t,   G_0 = 0
//   distribute: D_t = q(X_t) G_{t-1}

#include <filesystem>

#include "gcm/attention.hpp"

namespace gcm {

template <std::floating_point T>
struct ContextMatrix {
  Matrix<T> c;  // C_N x C_M
};

template <std::floating_point T>
class GlobalContext {
 public:
  // G_0: zero matrix, nothing absorbed.
  GlobalContext(std::size_t key_channels, std::size_t value_channels)
      : g_(key_channels, value_channels), frames_absorbed_(0) {}
  GlobalContext(Matrix<T> g, std::uint64_t frames_absorbed);

  const Matrix<T>& matrix() const { return g_; }
  std::uint64_t frames_absorbed() const { return frames_absorbed_; }
  std::size_t key_channels() const { return g_.rows(); }
  std::size_t value_channels() const { return g_.cols(); }
  std::uint64_t persistent_floats() const { return g_.size(); }

 private:
  Matrix<T> g_;
  std::uint64_t frames_absorbed_;
};

// Counts (H*W) * C_N * C_M multiplications. norm must be None or GcDoubleSoftmax.
template <std::floating_point T>
ContextMatrix<T> extract(const FeatureMap<T>& context_frame, const ProjectionSet<T>& p, Normalization norm,
                         OpCounters& counters);

// Pure running-mean step. Takes the state by value so a streaming loop can
// move it through without a copy.
template <std::floating_point T>
GlobalContext<T> update(GlobalContext<T> g, const ContextMatrix<T>& c);

// Counts (H*W) * C_N * C_M multiplications. Throws EmptyMemoryError before
// the first update.
template <std::floating_point T>
Matrix<T> distribute(const FeatureMap<T>& query_frame, const GlobalContext<T>& g, const ProjectionSet<T>& p,
                     Normalization norm, OpCounters& counters);

// Checkpoint: `path` holds G as a GCT1 tensor, `path`.frames the counter.
template <std::floating_point T>
void save_global_context(const std::filesystem::path& path, const GlobalContext<T>& g);

template <std::floating_point T>
GlobalContext<T> load_global_context(const std::filesystem::path& path);

}  // namespace gcm
