#include "gcm/stm.hpp"

#include <memory>

#include "gcm/tensor_io.hpp"

namespace gcm {
namespace {

std::filesystem::path with_suffix(const std::filesystem::path& path, const char* suffix) {
  auto p = path;
  p += suffix;
  return p;
}

}  // namespace

template <std::floating_point T>
StmMemory<T>::StmMemory(Matrix<T> keys, Matrix<T> values, std::uint64_t frames_stored)
    : keys_(std::move(keys)), values_(std::move(values)), frames_stored_(frames_stored) {
  if (keys_.rows() != values_.rows()) {
    throw ShapeError("stored keys " + keys_.shape_string() + " and values " + values_.shape_string() +
                     " disagree on location count");
  }
  if ((frames_stored_ == 0) != (keys_.rows() == 0)) {
    throw ConfigError("frames_stored does not match stored location count");
  }
}

template <std::floating_point T>
KeyValue<T> produce(const FeatureMap<T>& context_frame, const ProjectionSet<T>& p, OpCounters& /*counters*/) {
  return {make_keys(context_frame, p, Normalization::None), make_values(context_frame, p)};
}

template <std::floating_point T>
StmMemory<T> write(StmMemory<T> m, const KeyValue<T>& kv) {
  if (kv.keys.cols() != m.keys_.cols() || kv.values.cols() != m.values_.cols()) {
    throw ShapeError("cannot write keys " + kv.keys.shape_string() + " / values " + kv.values.shape_string() +
                     " into memory with C_N=" + std::to_string(m.keys_.cols()) +
                     ", C_M=" + std::to_string(m.values_.cols()));
  }
  if (kv.keys.rows() != kv.values.rows()) {
    throw ShapeError("keys and values of one frame must cover the same locations");
  }
  m.keys_.append_rows(kv.keys);
  m.values_.append_rows(kv.values);
  ++m.frames_stored_;
  return m;
}

template <std::floating_point T>
Matrix<T> read(const FeatureMap<T>& query_frame, const StmMemory<T>& m, const ProjectionSet<T>& p,
               Normalization norm, OpCounters& counters) {
  if (norm == Normalization::GcDoubleSoftmax) {
    throw ConfigError("gc-double-softmax is not a space-time-memory normalization");
  }
  if (m.frames_stored() == 0) {
    throw EmptyMemoryError("space-time memory is empty: write a reference frame before reading");
  }
  const std::uint64_t hw = query_frame.locations();
  const std::uint64_t stored = m.locations();

  auto query_lease = std::make_unique<TransientLease>(counters, hw * p.key_channels());
  const auto queries = make_queries(query_frame, p, Normalization::None);
  TransientLease affinity_lease(counters, hw * stored);
  auto affinity = matmul_nt(queries, m.keys(), counters);
  query_lease.reset();

  if (norm == Normalization::StmAffinitySoftmax) {
    affinity = softmax_rows(affinity);
  } else {
    const T scale = T{1} / static_cast<T>(m.frames_stored());
    for (auto& v : affinity.data()) v *= scale;
  }
  TransientLease out_lease(counters, hw * m.values().cols());
  return matmul(affinity, m.values(), counters);
}

template <std::floating_point T>
void save_stm_memory(const std::filesystem::path& path, const StmMemory<T>& m) {
  write_tensor(with_suffix(path, ".keys.gct"), m.keys());
  write_tensor(with_suffix(path, ".values.gct"), m.values());
  write_counter_sidecar(with_suffix(path, ".frames"), "frames_stored", m.frames_stored());
}

template <std::floating_point T>
StmMemory<T> load_stm_memory(const std::filesystem::path& path) {
  return StmMemory<T>(read_tensor<T>(with_suffix(path, ".keys.gct")), read_tensor<T>(with_suffix(path, ".values.gct")),
                      read_counter_sidecar(with_suffix(path, ".frames"), "frames_stored"));
}

#define GCM_INSTANTIATE(T)                                                                                        \
  template class StmMemory<T>;                                                                                    \
  template KeyValue<T> produce(const FeatureMap<T>&, const ProjectionSet<T>&, OpCounters&);                       \
  template StmMemory<T> write(StmMemory<T>, const KeyValue<T>&);                                                  \
  template Matrix<T> read(const FeatureMap<T>&, const StmMemory<T>&, const ProjectionSet<T>&, Normalization,     \
                          OpCounters&);                                                                           \
  template void save_stm_memory(const std::filesystem::path&, const StmMemory<T>&);                               \
  template StmMemory<T> load_stm_memory(const std::filesystem::path&);

GCM_INSTANTIATE(float)
GCM_INSTANTIATE(double)

#undef GCM_INSTANTIATE

}  // namespace gcm
