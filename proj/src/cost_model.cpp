#include "gcm/cost_model.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>

#include "gcm/equivalence.hpp"
#include "gcm/global_context.hpp"
#include "gcm/stm.hpp"

namespace gcm {

std::string to_string(MemoryModule m) { return m == MemoryModule::Gc ? "GC" : "STM"; }

std::uint64_t analytic_gc(std::uint64_t hw, std::uint64_t key_channels, std::uint64_t value_channels) {
  return key_channels * value_channels * hw;
}

std::uint64_t analytic_stm(std::uint64_t hw, std::uint64_t key_channels, std::uint64_t value_channels,
                           std::uint64_t frames) {
  if (frames == 0) throw ConfigError("an STM read needs at least one stored frame");
  const std::uint64_t stored = frames * hw;
  return hw * key_channels * stored + hw * stored * value_channels;
}

MemoryFootprint memory_model(MemoryModule module, const CostConfig& c, std::uint64_t frames) {
  MemoryFootprint f;
  if (module == MemoryModule::Gc) {
    f.persistent_floats = c.key_channels * c.value_channels;
    f.transient_floats = c.locations * c.key_channels + c.locations * c.value_channels;
  } else {
    f.persistent_floats = frames * c.locations * (c.key_channels + c.value_channels);
    f.transient_floats = c.locations * frames * c.locations + c.locations * c.value_channels;
  }
  const auto width = dtype_width(c.dtype);
  f.persistent_bytes = f.persistent_floats * width;
  f.transient_bytes = f.transient_floats * width;
  return f;
}

namespace {

template <std::floating_point T>
MeasuredRun measure_gc_impl(std::size_t h, std::size_t w, std::size_t cn, std::size_t cm, std::uint64_t seed) {
  const ShapeConfig shape{h, w, 4, 3, cn, cm};
  const auto p = ProjectionSet<T>::random(shape.projection(), ProjectionMode::Linear, seed);
  const auto seq = random_sequence<T>(shape, 2, seed);
  OpCounters setup;
  const auto g = update(GlobalContext<T>(cn, cm), extract(seq[0].context, p, Normalization::None, setup));
  OpCounters counters;
  counters.note_persistent(g.persistent_floats());
  (void)distribute(seq[1].query, g, p, Normalization::None, counters);
  return {counters.multiplications, counters.peak_transient_floats, counters.persistent_floats};
}

template <std::floating_point T>
MeasuredRun measure_stm_impl(std::size_t h, std::size_t w, std::size_t cn, std::size_t cm, std::size_t frames,
                             std::uint64_t seed) {
  const ShapeConfig shape{h, w, 4, 3, cn, cm};
  const auto p = ProjectionSet<T>::random(shape.projection(), ProjectionMode::Linear, seed);
  const auto seq = random_sequence<T>(shape, frames + 1, seed);
  OpCounters setup;
  StmMemory<T> m(cn, cm);
  for (std::size_t f = 0; f < frames; ++f) m = write(std::move(m), produce(seq[f].context, p, setup));
  OpCounters counters;
  counters.note_persistent(m.persistent_floats());
  (void)read(seq[frames].query, m, p, Normalization::None, counters);
  return {counters.multiplications, counters.peak_transient_floats, counters.persistent_floats};
}

}  // namespace

MeasuredRun measure_gc_read(std::size_t height, std::size_t width, std::size_t key_channels,
                            std::size_t value_channels, DType dtype, std::uint64_t seed) {
  return dtype == DType::F32 ? measure_gc_impl<float>(height, width, key_channels, value_channels, seed)
                             : measure_gc_impl<double>(height, width, key_channels, value_channels, seed);
}

MeasuredRun measure_stm_read(std::size_t height, std::size_t width, std::size_t key_channels,
                             std::size_t value_channels, std::size_t frames, DType dtype, std::uint64_t seed) {
  if (frames == 0) throw ConfigError("an STM read needs at least one stored frame");
  return dtype == DType::F32 ? measure_stm_impl<float>(height, width, key_channels, value_channels, frames, seed)
                             : measure_stm_impl<double>(height, width, key_channels, value_channels, frames, seed);
}

std::vector<CostReport> run_cost_sweep(const CostSweepOptions& o) {
  const CostConfig config{o.height * o.width, o.key_channels, o.value_channels, o.dtype};
  std::vector<CostReport> rows;

  {
    const auto measured = measure_gc_read(o.height, o.width, o.key_channels, o.value_channels, o.dtype, o.seed);
    const auto mem = memory_model(MemoryModule::Gc, config, 1);
    CostReport r;
    r.module = MemoryModule::Gc;
    r.frames = 1;
    r.analytic_mults = analytic_gc(config.locations, o.key_channels, o.value_channels);
    r.measured_mults = measured.multiplications;
    r.persistent_bytes = mem.persistent_bytes;
    r.transient_bytes = mem.transient_bytes;
    r.config = config;
    r.measured_peak_transient_floats = measured.peak_transient_floats;
    rows.push_back(r);
  }

  std::optional<MeasuredRun> single_frame;
  for (const auto frames : o.stm_frames) {
    CostReport r;
    r.module = MemoryModule::Stm;
    r.frames = frames;
    r.analytic_mults = analytic_stm(config.locations, o.key_channels, o.value_channels, frames);
    const auto mem = memory_model(MemoryModule::Stm, config, frames);
    r.persistent_bytes = mem.persistent_bytes;
    r.transient_bytes = mem.transient_bytes;
    r.config = config;
    if (frames <= o.full_shape_max_frames) {
      const auto measured =
          measure_stm_read(o.height, o.width, o.key_channels, o.value_channels, frames, o.dtype, o.seed);
      r.measured_mults = measured.multiplications;
      r.measured_peak_transient_floats = measured.peak_transient_floats;
    } else {
      if (!single_frame) {
        single_frame = measure_stm_read(o.height, o.width, o.key_channels, o.value_channels, 1, o.dtype, o.seed);
      }
      r.measured_mults = single_frame->multiplications * frames;
      r.extrapolated = true;
    }
    rows.push_back(r);
  }
  return rows;
}

std::string format_giga(std::uint64_t mults) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f G", static_cast<double>(mults) / 1e9);
  return buf;
}

std::string format_megabytes(std::uint64_t bytes) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f MB", static_cast<double>(bytes) / 1e6);
  return buf;
}

std::string render_cost_csv(const std::vector<CostReport>& rows) {
  std::ostringstream out;
  out << "module,T,analytic_mults,measured_mults,persistent_bytes,transient_bytes\n";
  for (const auto& r : rows) {
    out << to_string(r.module) << ',' << (r.module == MemoryModule::Gc ? std::string("any") : std::to_string(r.frames))
        << ',' << r.analytic_mults << ',' << r.measured_mults << ',' << r.persistent_bytes << ','
        << r.transient_bytes << '\n';
  }
  return out.str();
}

std::string render_cost_table(const std::vector<CostReport>& rows) {
  std::vector<const CostReport*> stm;
  const CostReport* gc = nullptr;
  for (const auto& r : rows) {
    if (r.module == MemoryModule::Gc) {
      gc = &r;
    } else {
      stm.push_back(&r);
    }
  }
  auto cell = [](const CostReport* r, bool is_gc) {
    char buf[160];
    if (r == nullptr) {
      std::snprintf(buf, sizeof(buf), "%-6s %6s %10s %10s", "", "", "", "");
    } else {
      const std::string t = is_gc ? "any" : std::to_string(r->frames);
      const std::string mults = format_giga(r->measured_mults) + (r->extrapolated ? "*" : "");
      std::snprintf(buf, sizeof(buf), "%-6s %6s %10s %10s", is_gc ? "GC" : "STM", t.c_str(), mults.c_str(),
                    format_megabytes(r->persistent_bytes + r->transient_bytes).c_str());
    }
    return std::string(buf);
  };

  std::ostringstream out;
  char head[160];
  std::snprintf(head, sizeof(head), "%-6s %6s %10s %10s", "", "t", "FLOPS", "Memory");
  out << head << " | " << head << '\n';
  out << std::string(36, '-') << "-+-" << std::string(36, '-') << '\n';
  const std::size_t lines = std::max<std::size_t>(stm.size(), 1);
  for (std::size_t i = 0; i < lines; ++i) {
    const CostReport* left = i < stm.size() ? stm[i] : nullptr;
    const CostReport* right = i == 0 ? gc : nullptr;
    std::string l = cell(left, false);
    if (left != nullptr && i > 0) l.replace(0, 3, "   ");
    out << l << " | " << cell(right, true) << '\n';
  }
  bool any_scaled = false;
  for (const auto* r : stm) any_scaled = any_scaled || r->extrapolated;
  if (any_scaled) out << "* scaled from a full-shape T=1 instrumented read (exact: cost is linear in T)\n";
  return out.str();
}

}  // namespace gcm
