#pragma once

// Space-time memory baseline. Keys and values of every written frame are kept
// and concatenated along the location axis; a read attends each query location
// over all stored locations through a materialized affinity matrix.
//
//   write: K_M <- [K_M; k(X_t)],  V_M <- [V_M; v(X_t)]
//   read:  E_t = (1/T) (q(X_t) K_Mᵀ) V_M                      (norm = None)
//          E_t = softmax_rows(q(X_t) K_Mᵀ) V_M                 (StmAffinitySoftmax)

#include <filesystem>

#include "gcm/attention.hpp"

namespace gcm {

template <std::floating_point T>
struct KeyValue {
  Matrix<T> keys;    // (H*W) x C_N
  Matrix<T> values;  // (H*W) x C_M
};

template <std::floating_point T>
class StmMemory {
 public:
  StmMemory(std::size_t key_channels, std::size_t value_channels)
      : keys_(0, key_channels), values_(0, value_channels), frames_stored_(0) {}
  StmMemory(Matrix<T> keys, Matrix<T> values, std::uint64_t frames_stored);

  const Matrix<T>& keys() const { return keys_; }
  const Matrix<T>& values() const { return values_; }
  std::uint64_t frames_stored() const { return frames_stored_; }
  std::size_t locations() const { return keys_.rows(); }
  std::uint64_t persistent_floats() const { return keys_.size() + values_.size(); }

 private:
  template <std::floating_point U>
  friend StmMemory<U> write(StmMemory<U> m, const KeyValue<U>& kv);

  Matrix<T> keys_;
  Matrix<T> values_;
  std::uint64_t frames_stored_;
};

// Stored keys are never normalized. Projection work is not counted.
template <std::floating_point T>
KeyValue<T> produce(const FeatureMap<T>& context_frame, const ProjectionSet<T>& p, OpCounters& counters);

template <std::floating_point T>
StmMemory<T> write(StmMemory<T> m, const KeyValue<T>& kv);

// Counts HW*C_N*(T*HW) + HW*(T*HW)*C_M multiplications. norm must be None or
// StmAffinitySoftmax.
template <std::floating_point T>
Matrix<T> read(const FeatureMap<T>& query_frame, const StmMemory<T>& m, const ProjectionSet<T>& p,
               Normalization norm, OpCounters& counters);

// Checkpoint: `path`.keys.gct, `path`.values.gct and `path`.frames.
template <std::floating_point T>
void save_stm_memory(const std::filesystem::path& path, const StmMemory<T>& m);

template <std::floating_point T>
StmMemory<T> load_stm_memory(const std::filesystem::path& path);

}  // namespace gcm
