#pragma once

// Closed-form multiplication and memory counts for one memory read, checked
// against instrumented runs of the real modules.
//
// One FLOP here is one scalar multiplication.

#include <cstdint>
#include <string>
#include <vector>

#include "gcm/tensor.hpp"

namespace gcm {

enum class MemoryModule { Gc, Stm };

std::string to_string(MemoryModule m);

struct CostConfig {
  std::uint64_t locations = 576;        // H*W: 384x384 input at stride 16 -> 24x24
  std::uint64_t key_channels = 128;     // C_N
  std::uint64_t value_channels = 512;   // C_M
  DType dtype = DType::F32;

  static CostConfig reference() { return {}; }
};

// C_N * C_M * HW
std::uint64_t analytic_gc(std::uint64_t hw, std::uint64_t key_channels, std::uint64_t value_channels);

// HW * C_N * (T*HW) + HW * (T*HW) * C_M. Throws ConfigError for T == 0.
std::uint64_t analytic_stm(std::uint64_t hw, std::uint64_t key_channels, std::uint64_t value_channels,
                           std::uint64_t frames);

struct MemoryFootprint {
  std::uint64_t persistent_floats = 0;
  std::uint64_t transient_floats = 0;
  std::uint64_t persistent_bytes = 0;
  std::uint64_t transient_bytes = 0;

  std::uint64_t total_bytes() const { return persistent_bytes + transient_bytes; }
};

// GC:  persistent C_N*C_M,           transient HW*C_N (queries) + HW*C_M (output)
// STM: persistent T*HW*(C_N + C_M),  transient HW*T*HW (affinity) + HW*C_M (output)
MemoryFootprint memory_model(MemoryModule module, const CostConfig& config, std::uint64_t frames);

struct CostReport {
  MemoryModule module = MemoryModule::Gc;
  std::uint64_t frames = 0;
  std::uint64_t analytic_mults = 0;
  std::uint64_t measured_mults = 0;
  std::uint64_t persistent_bytes = 0;
  std::uint64_t transient_bytes = 0;
  CostConfig config;
  // Measured on the full shape, or scaled from a smaller instrumented run.
  bool extrapolated = false;
  // Counter-observed transient peak of the instrumented run, in floats.
  std::uint64_t measured_peak_transient_floats = 0;
};

struct MeasuredRun {
  std::uint64_t multiplications = 0;
  std::uint64_t peak_transient_floats = 0;
  std::uint64_t persistent_floats = 0;
};

// Instrumented runs at an arbitrary (height x width) grid with random
// projections; only the memory-read products are counted.
MeasuredRun measure_gc_read(std::size_t height, std::size_t width, std::size_t key_channels,
                            std::size_t value_channels, DType dtype, std::uint64_t seed = 1);
MeasuredRun measure_stm_read(std::size_t height, std::size_t width, std::size_t key_channels,
                             std::size_t value_channels, std::size_t frames, DType dtype, std::uint64_t seed = 1);

struct CostSweepOptions {
  std::size_t height = 24;
  std::size_t width = 24;
  std::uint64_t key_channels = 128;
  std::uint64_t value_channels = 512;
  DType dtype = DType::F32;
  std::vector<std::uint64_t> stm_frames = {1, 10, 100};
  // STM points above this T are measured once at T=1 on the full shape and
  // scaled by T; the linearity that makes this exact is checked separately.
  std::uint64_t full_shape_max_frames = 10;
  std::uint64_t seed = 1;
};

// One GC row followed by one STM row per requested T.
std::vector<CostReport> run_cost_sweep(const CostSweepOptions& options);

// module,T,analytic_mults,measured_mults,persistent_bytes,transient_bytes
std::string render_cost_csv(const std::vector<CostReport>& rows);

// Side-by-side text table in the layout of the published comparison.
std::string render_cost_table(const std::vector<CostReport>& rows);

// "0.038 G" style rendering with three decimals.
std::string format_giga(std::uint64_t mults);
// Decimal megabytes (1 MB = 10^6 bytes), one decimal.
std::string format_megabytes(std::uint64_t bytes);

}  // namespace gcm
