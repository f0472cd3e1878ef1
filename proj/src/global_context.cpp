#include "gcm/global_context.hpp"

#include <algorithm>

#include "gcm/tensor_io.hpp"

namespace gcm {
namespace {

void require_gc_norm(Normalization norm) {
  if (norm == Normalization::StmAffinitySoftmax) {
    throw ConfigError("stm-affinity-softmax is not a global-context normalization");
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".frames";
  return p;
}

}  // namespace

template <std::floating_point T>
GlobalContext<T>::GlobalContext(Matrix<T> g, std::uint64_t frames_absorbed)
    : g_(std::move(g)), frames_absorbed_(frames_absorbed) {
  if (frames_absorbed_ == 0 && std::any_of(g_.data().begin(), g_.data().end(), [](T v) { return v != T{0}; })) {
    throw ConfigError("a global context with zero absorbed frames must be the zero matrix");
  }
}

template <std::floating_point T>
ContextMatrix<T> extract(const FeatureMap<T>& context_frame, const ProjectionSet<T>& p, Normalization norm,
                         OpCounters& counters) {
  require_gc_norm(norm);
  const auto keys = make_keys(context_frame, p, norm);
  const auto values = make_values(context_frame, p);
  return {matmul_tn(keys, values, counters)};
}

template <std::floating_point T>
GlobalContext<T> update(GlobalContext<T> g, const ContextMatrix<T>& c) {
  if (c.c.rows() != g.key_channels() || c.c.cols() != g.value_channels()) {
    throw ShapeError("context " + c.c.shape_string() + " does not match global context " +
                     g.matrix().shape_string());
  }
  const std::uint64_t t = g.frames_absorbed() + 1;
  // G + (C - G)/t in double, one rounding per entry on the way back to T.
  Matrix<T> next(g.key_channels(), g.value_channels());
  const auto prev = g.matrix().data();
  const auto add = c.c.data();
  auto out = next.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double gi = prev[i];
    out[i] = static_cast<T>(gi + (static_cast<double>(add[i]) - gi) / static_cast<double>(t));
  }
  return GlobalContext<T>(std::move(next), t);
}

template <std::floating_point T>
Matrix<T> distribute(const FeatureMap<T>& query_frame, const GlobalContext<T>& g, const ProjectionSet<T>& p,
                     Normalization norm, OpCounters& counters) {
  require_gc_norm(norm);
  if (g.frames_absorbed() == 0) {
    throw EmptyMemoryError("global context is empty: absorb a reference frame before distributing");
  }
  if (p.key_channels() != g.key_channels() || p.value_channels() != g.value_channels()) {
    throw ShapeError("projection produces C_N x C_M = " + shape_string(p.key_channels(), p.value_channels()) +
                     " but global context is " + g.matrix().shape_string());
  }
  const std::uint64_t hw = query_frame.locations();
  TransientLease query_lease(counters, hw * g.key_channels());
  const auto queries = make_queries(query_frame, p, norm);
  TransientLease out_lease(counters, hw * g.value_channels());
  return matmul(queries, g.matrix(), counters);
}

template <std::floating_point T>
void save_global_context(const std::filesystem::path& path, const GlobalContext<T>& g) {
  write_tensor(path, g.matrix());
  write_counter_sidecar(sidecar_path(path), "frames_absorbed", g.frames_absorbed());
}

template <std::floating_point T>
GlobalContext<T> load_global_context(const std::filesystem::path& path) {
  return GlobalContext<T>(read_tensor<T>(path), read_counter_sidecar(sidecar_path(path), "frames_absorbed"));
}

#define GCM_INSTANTIATE(T)                                                                                    \
  template class GlobalContext<T>;                                                                            \
  template ContextMatrix<T> extract(const FeatureMap<T>&, const ProjectionSet<T>&, Normalization,            \
                                    OpCounters&);                                                             \
  template GlobalContext<T> update(GlobalContext<T>, const ContextMatrix<T>&);                                \
  template Matrix<T> distribute(const FeatureMap<T>&, const GlobalContext<T>&, const ProjectionSet<T>&,      \
                                Normalization, OpCounters&);                                                  \
  template void save_global_context(const std::filesystem::path&, const GlobalContext<T>&);                   \
  template GlobalContext<T> load_global_context(const std::filesystem::path&);

GCM_INSTANTIATE(float)
GCM_INSTANTIATE(double)

#undef GCM_INSTANTIATE

}  // namespace gcm
