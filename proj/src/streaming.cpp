#include "gcm/streaming.hpp"

#include <algorithm>

#include "gcm/cost_model.hpp"
#include "gcm/global_context.hpp"
#include "gcm/stm.hpp"

namespace gcm {
namespace {

template <std::floating_point T>
StreamTrajectory run_impl(const StreamOptions& o) {
  StreamTrajectory out;
  out.options = o;
  const auto& shape = o.shape;
  const auto p = ProjectionSet<double>::random(shape.projection(), ProjectionMode::Linear, o.seed).template cast<T>();

  GlobalContext<T> gc(shape.key_channels, shape.value_channels);
  StmMemory<T> stm(shape.key_channels, shape.value_channels);
  OpCounters scratch;
  out.gc_state_floats.reserve(o.frames);
  out.stm_state_floats.reserve(o.frames);
  out.gc_distribute_mults.reserve(o.frames);

  for (std::size_t f = 0; f < o.frames; ++f) {
    const auto frame = std::move(random_sequence<T>(shape, 1, o.seed + 1 + f).front());
    if (f > 0) {
      OpCounters counters;
      (void)distribute(frame.query, gc, p, Normalization::None, counters);
      out.gc_distribute_mults.push_back(counters.multiplications);

      const bool sample = (o.stm_read_every > 0 && (f + 1) % o.stm_read_every == 0) || f + 1 == o.frames || f == 1;
      if (sample) {
        OpCounters stm_counters;
        (void)read(frame.query, stm, p, Normalization::None, stm_counters);
        out.stm_reads.push_back({f + 1, stm.frames_stored(), stm_counters.multiplications});
      }
    }
    gc = update(std::move(gc), extract(frame.context, p, Normalization::None, scratch));
    stm = write(std::move(stm), produce(frame.context, p, scratch));
    out.gc_state_floats.push_back(gc.persistent_floats());
    out.stm_state_floats.push_back(stm.persistent_floats());
  }
  return out;
}

}  // namespace

bool StreamTrajectory::gc_state_flat() const {
  const std::uint64_t expected = options.shape.key_channels * options.shape.value_channels;
  return std::all_of(gc_state_floats.begin(), gc_state_floats.end(), [&](auto v) { return v == expected; });
}

bool StreamTrajectory::gc_cost_constant() const {
  if (gc_distribute_mults.empty()) return true;
  const auto first = gc_distribute_mults.front();
  return first == analytic_gc(options.shape.locations(), options.shape.key_channels, options.shape.value_channels) &&
         std::all_of(gc_distribute_mults.begin(), gc_distribute_mults.end(), [&](auto v) { return v == first; });
}

bool StreamTrajectory::stm_state_linear() const {
  const std::uint64_t per_frame =
      options.shape.locations() * (options.shape.key_channels + options.shape.value_channels);
  for (std::size_t f = 0; f < stm_state_floats.size(); ++f) {
    if (stm_state_floats[f] != (f + 1) * per_frame) return false;
  }
  return true;
}

bool StreamTrajectory::stm_reads_match_formula() const {
  return std::all_of(stm_reads.begin(), stm_reads.end(), [&](const StmReadSample& s) {
    return s.multiplications == analytic_stm(options.shape.locations(), options.shape.key_channels,
                                             options.shape.value_channels, s.frames_stored);
  });
}

StreamTrajectory run_stream_stress(const StreamOptions& options) {
  if (options.frames == 0) throw ConfigError("stream stress needs at least one frame");
  return options.dtype == DType::F32 ? run_impl<float>(options) : run_impl<double>(options);
}

nlohmann::json to_json(const StreamTrajectory& t, bool include_trajectories) {
  nlohmann::json reads = nlohmann::json::array();
  for (const auto& s : t.stm_reads) {
    reads.push_back({{"frame", s.frame}, {"frames_stored", s.frames_stored}, {"multiplications", s.multiplications}});
  }
  nlohmann::json j = {
      {"frames", t.options.frames},
      {"seed", t.options.seed},
      {"dtype", to_string(t.options.dtype)},
      {"shape", to_json(t.options.shape)},
      {"gc_state_floats_final", t.gc_state_floats.empty() ? 0 : t.gc_state_floats.back()},
      {"stm_state_floats_final", t.stm_state_floats.empty() ? 0 : t.stm_state_floats.back()},
      {"gc_distribute_mults", t.gc_distribute_mults.empty() ? 0 : t.gc_distribute_mults.front()},
      {"stm_reads", reads},
      {"gc_state_flat", t.gc_state_flat()},
      {"gc_cost_constant", t.gc_cost_constant()},
      {"stm_state_linear", t.stm_state_linear()},
      {"stm_reads_match_formula", t.stm_reads_match_formula()},
  };
  if (include_trajectories) {
    j["gc_state_floats"] = t.gc_state_floats;
    j["stm_state_floats"] = t.stm_state_floats;
  }
  return j;
}

}  // namespace gcm
