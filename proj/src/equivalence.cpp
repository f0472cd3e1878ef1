#include "gcm/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gcm/global_context.hpp"
#include "gcm/stm.hpp"

namespace gcm {
namespace {

constexpr std::uint64_t kSequenceStreamSalt = 0x9e3779b97f4a7c15ULL;

template <std::floating_point T>
FeatureMap<T> random_map(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<T> data(h * w * c);
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return FeatureMap<T>(h, w, Matrix<T>(h * w, c, std::move(data)));
}

double max_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

template <std::floating_point T>
double max_row_sum_deviation(const Matrix<T>& a) {
  double worst = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double sum = 0;
    for (T v : a.row(i)) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

}  // namespace

double EquivalenceReport::max_abs_diff() const { return max_of(per_frame_max_abs_diff); }
double EquivalenceReport::max_rel_diff() const { return max_of(per_frame_rel_diff); }
double SoftmaxApproxReport::max_gc_row_sum_deviation() const { return max_of(gc_row_sum_deviation); }
double SoftmaxApproxReport::max_stm_row_sum_deviation() const { return max_of(stm_row_sum_deviation); }

template <std::floating_point T>
std::vector<FramePair<T>> random_sequence(const ShapeConfig& shape, std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<FramePair<T>> seq;
  seq.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    auto context = random_map<T>(shape.height, shape.width, shape.context_channels, rng);
    auto query = random_map<T>(shape.height, shape.width, shape.query_channels, rng);
    seq.push_back({std::move(context), std::move(query)});
  }
  return seq;
}

template <std::floating_point T>
EquivalenceReport run_equivalence(std::span<const FramePair<T>> seq, const ProjectionSet<T>& p, Normalization norm) {
  if (norm != Normalization::None) {
    throw ConfigError("equivalence only holds without normalization, got " + to_string(norm));
  }
  EquivalenceReport report;
  report.sequence_length = seq.size();
  report.dtype = dtype_of<T>();
  report.mode = p.mode();
  if (!seq.empty()) {
    const auto& first = seq.front();
    report.shape = {first.context.height(), first.context.width(), first.context.channels(),
                    first.query.channels(),  p.key_channels(),      p.value_channels()};
  }

  GlobalContext<T> gc(p.key_channels(), p.value_channels());
  StmMemory<T> stm(p.key_channels(), p.value_channels());
  OpCounters scratch;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& frame = seq[t];
    if (t > 0) {
      const auto d = distribute(frame.query, gc, p, Normalization::None, scratch);
      const auto e = read(frame.query, stm, p, Normalization::None, scratch);
      const double abs_diff = static_cast<double>(max_abs_diff(d, e));
      const double scale = std::max(static_cast<double>(max_abs(e)), std::numeric_limits<double>::min());
      report.per_frame_max_abs_diff.push_back(abs_diff);
      report.per_frame_rel_diff.push_back(abs_diff / scale);
    }
    gc = update(std::move(gc), extract(frame.context, p, Normalization::None, scratch));
    stm = write(std::move(stm), produce(frame.context, p, scratch));
  }
  return report;
}

template <std::floating_point T>
SoftmaxApproxReport run_softmax_approx_check(std::span<const FramePair<T>> seq, const ProjectionSet<T>& p) {
  SoftmaxApproxReport report;
  report.sequence_length = seq.size();
  report.dtype = dtype_of<T>();

  GlobalContext<T> gc(p.key_channels(), p.value_channels());
  StmMemory<T> stm(p.key_channels(), p.value_channels());
  Matrix<T> normalized_keys(0, p.key_channels());
  OpCounters scratch;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& frame = seq[t];
    if (t > 0) {
      const auto d = distribute(frame.query, gc, p, Normalization::GcDoubleSoftmax, scratch);
      const auto e = read(frame.query, stm, p, Normalization::StmAffinitySoftmax, scratch);

      // GC's attention over every stored location, made explicit.
      const auto q = make_queries(frame.query, p, Normalization::GcDoubleSoftmax);
      auto implied = matmul_nt(q, normalized_keys, scratch);
      const T scale = T{1} / static_cast<T>(t);
      for (auto& v : implied.data()) v *= scale;
      report.gc_row_sum_deviation.push_back(max_row_sum_deviation(implied));
      report.gc_implied_consistency.push_back(
          static_cast<double>(max_abs_diff(d, matmul(implied, stm.values(), scratch))));

      const auto affinity = softmax_rows(matmul_nt(make_queries(frame.query, p, Normalization::None), stm.keys(), scratch));
      report.stm_row_sum_deviation.push_back(max_row_sum_deviation(affinity));
      report.divergence.push_back(static_cast<double>(max_abs_diff(d, e)));
    }
    gc = update(std::move(gc), extract(frame.context, p, Normalization::GcDoubleSoftmax, scratch));
    stm = write(std::move(stm), produce(frame.context, p, scratch));
    normalized_keys.append_rows(make_keys(frame.context, p, Normalization::GcDoubleSoftmax));
  }
  return report;
}

template <std::floating_point T>
ProjectionSet<T> with_constant_values(const ProjectionSet<T>& p, std::span<const T> value) {
  if (value.size() != p.value_channels()) {
    throw ShapeError("constant value has " + std::to_string(value.size()) + " channels, expected " +
                     std::to_string(p.value_channels()));
  }
  Matrix<T> zero_weights(p.value_weights().rows(), p.value_weights().cols());
  return ProjectionSet<T>(p.mode(), p.key_weights(), p.query_weights(), std::move(zero_weights), p.key_bias(),
                          p.query_bias(), std::vector<T>(value.begin(), value.end()));
}

template <std::floating_point T>
ConstantValueReport run_constant_value_check(std::span<const FramePair<T>> seq, const ProjectionSet<T>& p,
                                             std::span<const T> value) {
  const auto pc = with_constant_values(p, value);
  ConstantValueReport report;
  GlobalContext<T> gc(pc.key_channels(), pc.value_channels());
  StmMemory<T> stm(pc.key_channels(), pc.value_channels());
  OpCounters scratch;
  auto deviation = [&](const Matrix<T>& out) {
    double worst = 0;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j)
        worst = std::max(worst, std::abs(static_cast<double>(out(i, j)) - static_cast<double>(value[j])));
    return worst;
  };
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& frame = seq[t];
    if (t > 0) {
      report.gc_max_deviation = std::max(
          report.gc_max_deviation, deviation(distribute(frame.query, gc, pc, Normalization::GcDoubleSoftmax, scratch)));
      report.stm_max_deviation = std::max(
          report.stm_max_deviation, deviation(read(frame.query, stm, pc, Normalization::StmAffinitySoftmax, scratch)));
    }
    gc = update(std::move(gc), extract(frame.context, pc, Normalization::GcDoubleSoftmax, scratch));
    stm = write(std::move(stm), produce(frame.context, pc, scratch));
  }
  return report;
}

template <std::floating_point T>
EquivalenceReport run_equivalence_seed(const ShapeConfig& shape, std::size_t frames, std::uint64_t seed,
                                       ProjectionMode mode) {
  const auto p = ProjectionSet<double>::random(shape.projection(), mode, seed).template cast<T>();
  const auto seq = random_sequence<T>(shape, frames, seed ^ kSequenceStreamSalt);
  auto report = run_equivalence<T>(seq, p);
  report.shape = shape;
  return report;
}

nlohmann::json to_json(const ShapeConfig& s) {
  return {{"H", s.height}, {"W", s.width}, {"C", s.context_channels}, {"C_q", s.query_channels},
          {"C_N", s.key_channels}, {"C_M", s.value_channels}};
}

nlohmann::json to_json(const EquivalenceReport& r) {
  return {{"sequence_length", r.sequence_length},
          {"shape", to_json(r.shape)},
          {"dtype", to_string(r.dtype)},
          {"mode", to_string(r.mode)},
          {"per_frame_max_abs_diff", r.per_frame_max_abs_diff},
          {"per_frame_rel_diff", r.per_frame_rel_diff},
          {"max_abs_diff", r.max_abs_diff()},
          {"max_rel_diff", r.max_rel_diff()}};
}

nlohmann::json to_json(const SoftmaxApproxReport& r) {
  return {{"sequence_length", r.sequence_length},
          {"dtype", to_string(r.dtype)},
          {"gc_row_sum_deviation", r.gc_row_sum_deviation},
          {"stm_row_sum_deviation", r.stm_row_sum_deviation},
          {"gc_implied_consistency", r.gc_implied_consistency},
          {"divergence", r.divergence}};
}

#define GCM_INSTANTIATE(T)                                                                                      \
  template std::vector<FramePair<T>> random_sequence(const ShapeConfig&, std::size_t, std::uint64_t);           \
  template EquivalenceReport run_equivalence(std::span<const FramePair<T>>, const ProjectionSet<T>&,            \
                                             Normalization);                                                    \
  template SoftmaxApproxReport run_softmax_approx_check(std::span<const FramePair<T>>, const ProjectionSet<T>&); \
  template ProjectionSet<T> with_constant_values(const ProjectionSet<T>&, std::span<const T>);                  \
  template ConstantValueReport run_constant_value_check(std::span<const FramePair<T>>, const ProjectionSet<T>&, \
                                                        std::span<const T>);                                    \
  template EquivalenceReport run_equivalence_seed<T>(const ShapeConfig&, std::size_t, std::uint64_t,            \
                                                     ProjectionMode);

GCM_INSTANTIATE(float)
GCM_INSTANTIATE(double)

#undef GCM_INSTANTIATE

}  // namespace gcm
