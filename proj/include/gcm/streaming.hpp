#pragma once

// Long-run state-size and cost trajectories for both memories on the same
// random frame stream.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gcm/equivalence.hpp"

namespace gcm {

struct StreamOptions {
  ShapeConfig shape;
  std::size_t frames = 10000;
  // STM reads are quadratic over a run, so they are sampled every this many
  // frames (plus the final frame). Writes happen every frame.
  std::size_t stm_read_every = 2500;
  std::uint64_t seed = 1;
  DType dtype = DType::F32;
};

struct StmReadSample {
  std::size_t frame = 0;            // 1-based index of the querying frame
  std::uint64_t frames_stored = 0;
  std::uint64_t multiplications = 0;
};

struct StreamTrajectory {
  StreamOptions options;
  // Entry f is the persistent float count after absorbing frame f + 1.
  std::vector<std::uint64_t> gc_state_floats;
  std::vector<std::uint64_t> stm_state_floats;
  // Multiplications of each GC distribute, frames 2..N.
  std::vector<std::uint64_t> gc_distribute_mults;
  std::vector<StmReadSample> stm_reads;

  // Every entry equals C_N * C_M.
  bool gc_state_flat() const;
  // Every distribute costs the same.
  bool gc_cost_constant() const;
  // Entry f equals (f + 1) * HW * (C_N + C_M).
  bool stm_state_linear() const;
  // Each sampled read matches the closed-form STM count for its T.
  bool stm_reads_match_formula() const;
};

StreamTrajectory run_stream_stress(const StreamOptions& options);

nlohmann::json to_json(const StreamTrajectory& t, bool include_trajectories = false);

}  // namespace gcm
