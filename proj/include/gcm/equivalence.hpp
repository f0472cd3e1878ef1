#pragma once

// Drives the global-context and space-time-memory arms on identical frames
// and measures how far apart their outputs are.
//
// Without normalization the two are algebraically identical:
//   q (1/(t-1)) Σ_f k_fᵀ v_f  ==  (1/(t-1)) (q [k_1; ...]ᵀ) [v_1; ...]
// so any difference is floating-point reassociation error.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcm/attention.hpp"

namespace gcm {

struct ShapeConfig {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t context_channels = 6;  // C
  std::size_t query_channels = 5;    // C_q
  std::size_t key_channels = 4;      // C_N
  std::size_t value_channels = 5;    // C_M

  ProjectionShape projection() const { return {context_channels, query_channels, key_channels, value_channels}; }
  std::size_t locations() const { return height * width; }
};

template <std::floating_point T>
struct FramePair {
  FeatureMap<T> context;  // encoded with the mask channel
  FeatureMap<T> query;    // encoded without it
};

// Frozen CI bounds: max over seeds 0..99 (16 frames, default shape) times
// ten, rounded up. docs/calibration.md has the raw numbers. Conv3x3 sums nine
// times as many terms per projection, hence the looser pair.
inline constexpr double kEquivalenceAbsToleranceF64 = 5e-13;
inline constexpr double kEquivalenceRelToleranceF32 = 1.5e-5;
inline constexpr double kEquivalenceAbsToleranceF64Conv = 2.5e-12;
inline constexpr double kEquivalenceRelToleranceF32Conv = 2e-5;

struct EquivalenceTolerance {
  double f64_abs;
  double f32_rel;
};

constexpr EquivalenceTolerance equivalence_tolerance(ProjectionMode mode) {
  return mode == ProjectionMode::Conv3x3
             ? EquivalenceTolerance{kEquivalenceAbsToleranceF64Conv, kEquivalenceRelToleranceF32Conv}
             : EquivalenceTolerance{kEquivalenceAbsToleranceF64, kEquivalenceRelToleranceF32};
}

// Bounds the equivalence run has to meet regardless of calibration.
inline constexpr double kRequiredAbsToleranceF64 = 1e-10;
inline constexpr double kRequiredRelToleranceF32 = 1e-4;

inline constexpr double kRowSumTolerance = 1e-5;

// Features uniform in [-1, 1]. Values are drawn in double and narrowed, so an
// f32 and an f64 sequence with the same seed hold the same numbers.
template <std::floating_point T>
std::vector<FramePair<T>> random_sequence(const ShapeConfig& shape, std::size_t frames, std::uint64_t seed);

struct EquivalenceReport {
  std::size_t sequence_length = 0;
  ShapeConfig shape;
  DType dtype = DType::F64;
  ProjectionMode mode = ProjectionMode::Linear;
  // Index i compares frame i + 2 (frame 1 has nothing to read).
  std::vector<double> per_frame_max_abs_diff;
  // max|D - E| / max|E| per frame.
  std::vector<double> per_frame_rel_diff;

  double max_abs_diff() const;
  double max_rel_diff() const;
};

// Throws ConfigError for any norm other than None: the identity does not hold
// under softmax.
template <std::floating_point T>
EquivalenceReport run_equivalence(std::span<const FramePair<T>> seq, const ProjectionSet<T>& p,
                                  Normalization norm = Normalization::None);

struct SoftmaxApproxReport {
  std::size_t sequence_length = 0;
  DType dtype = DType::F64;
  // max |row sum - 1| of the GC arm's implied attention over all past locations.
  std::vector<double> gc_row_sum_deviation;
  // max |row sum - 1| of the STM arm's row-softmaxed affinity.
  std::vector<double> stm_row_sum_deviation;
  // max |D_t - implied_attention * V_M|: the implied attention is what distribute computes.
  std::vector<double> gc_implied_consistency;
  // max |D_t - E_t|. Measured, never asserted.
  std::vector<double> divergence;

  double max_gc_row_sum_deviation() const;
  double max_stm_row_sum_deviation() const;
};

// GC arm under GcDoubleSoftmax, STM arm under StmAffinitySoftmax.
template <std::floating_point T>
SoftmaxApproxReport run_softmax_approx_check(std::span<const FramePair<T>> seq, const ProjectionSet<T>& p);

// Copy of `p` whose value function ignores its input and returns `value` at
// every location.
template <std::floating_point T>
ProjectionSet<T> with_constant_values(const ProjectionSet<T>& p, std::span<const T> value);

struct ConstantValueReport {
  double gc_max_deviation = 0;   // max |D_t - v0| over frames and locations
  double stm_max_deviation = 0;  // max |E_t - v0|
};

template <std::floating_point T>
ConstantValueReport run_constant_value_check(std::span<const FramePair<T>> seq, const ProjectionSet<T>& p,
                                             std::span<const T> value);

// One seed: projections from `seed`, frames from a derived stream.
template <std::floating_point T>
EquivalenceReport run_equivalence_seed(const ShapeConfig& shape, std::size_t frames, std::uint64_t seed,
                                       ProjectionMode mode = ProjectionMode::Linear);

nlohmann::json to_json(const ShapeConfig& shape);
nlohmann::json to_json(const EquivalenceReport& report);
nlohmann::json to_json(const SoftmaxApproxReport& report);

}  // namespace gcm
