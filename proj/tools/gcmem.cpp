// gcmem: equivalence checks, cost tables, streaming stress runs and synthetic
// segmentation for the global-context and space-time memories.
//
// Exit codes: 0 pass, 1 numeric/criterion failure (report still written),
// 2 usage or configuration error.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcm/cost_model.hpp"
#include "gcm/equivalence.hpp"
#include "gcm/pipeline.hpp"
#include "gcm/streaming.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

fs::path output_path(const fs::path& out_dir, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : out_dir / p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw gcm::ConfigError("cannot write " + path.string());
  out << text;
}

struct EquivArgs {
  std::size_t seeds = 100;
  std::uint64_t first_seed = 0;
  std::size_t frames = 16;
  gcm::ShapeConfig shape;
  std::string dtype = "both";
  std::string mode = "linear";
  std::string norm = "none";
  bool calibrate = false;
  std::string report = "equiv_report.json";
  std::string summary = "equiv_summary.csv";
};

int run_equiv(const EquivArgs& a, const fs::path& out_dir) {
  const auto mode = gcm::parse_projection_mode(a.mode);
  const bool softmax = a.norm == "softmax";
  if (a.dtype != "both") (void)gcm::parse_dtype(a.dtype);
  const bool do64 = a.dtype == "both" || a.dtype == "f64";
  const bool do32 = a.dtype == "both" || a.dtype == "f32";

  json report = {{"subcommand", "equiv"},
                 {"seeds", a.seeds},
                 {"first_seed", a.first_seed},
                 {"frames", a.frames},
                 {"shape", gcm::to_json(a.shape)},
                 {"mode", a.mode},
                 {"norm", a.norm}};
  std::ostringstream csv;
  bool pass = true;

  if (softmax) {
    // Softmax approximation: row-stochasticity is checked, divergence only measured.
    csv << "seed,dtype,max_gc_row_sum_deviation,max_stm_row_sum_deviation,max_divergence,pass\n";
    json runs = json::array();
    double worst = 0;
    for (std::size_t i = 0; i < a.seeds; ++i) {
      const auto seed = a.first_seed + i;
      const auto p = gcm::ProjectionSet<double>::random(a.shape.projection(), mode, seed);
      const auto seq = gcm::random_sequence<double>(a.shape, a.frames, seed ^ 0x5eedULL);
      const auto r = gcm::run_softmax_approx_check<double>(seq, p);
      const double dev = std::max(r.max_gc_row_sum_deviation(), r.max_stm_row_sum_deviation());
      const bool ok = dev <= gcm::kRowSumTolerance;
      double div = 0;
      for (double d : r.divergence) div = std::max(div, d);
      worst = std::max(worst, dev);
      pass = pass && ok;
      auto j = gcm::to_json(r);
      j["seed"] = seed;
      runs.push_back(j);
      csv << seed << ",f64," << r.max_gc_row_sum_deviation() << ',' << r.max_stm_row_sum_deviation() << ',' << div
          << ',' << (ok ? "true" : "false") << '\n';
    }
    report["runs"] = runs;
    report["tolerance"] = gcm::kRowSumTolerance;
    report["max_row_sum_deviation"] = worst;
    std::cout << "softmax approximation: max row-sum deviation " << worst << " (tolerance " << gcm::kRowSumTolerance
              << ")\n";
  } else {
    csv << "seed,dtype,max_abs_diff,max_rel_diff,pass\n";
    json runs = json::array();
    double worst_abs64 = 0, worst_rel32 = 0, worst_abs32 = 0, worst_rel64 = 0;
    const auto tol = gcm::equivalence_tolerance(mode);
    for (std::size_t i = 0; i < a.seeds; ++i) {
      const auto seed = a.first_seed + i;
      if (do64) {
        const auto r = gcm::run_equivalence_seed<double>(a.shape, a.frames, seed, mode);
        const bool ok = r.max_abs_diff() <= tol.f64_abs;
        worst_abs64 = std::max(worst_abs64, r.max_abs_diff());
        worst_rel64 = std::max(worst_rel64, r.max_rel_diff());
        pass = pass && ok;
        auto j = gcm::to_json(r);
        j["seed"] = seed;
        runs.push_back(j);
        csv << seed << ",f64," << r.max_abs_diff() << ',' << r.max_rel_diff() << ',' << (ok ? "true" : "false") << '\n';
      }
      if (do32) {
        const auto r = gcm::run_equivalence_seed<float>(a.shape, a.frames, seed, mode);
        const bool ok = r.max_rel_diff() <= tol.f32_rel;
        worst_rel32 = std::max(worst_rel32, r.max_rel_diff());
        worst_abs32 = std::max(worst_abs32, r.max_abs_diff());
        pass = pass && ok;
        auto j = gcm::to_json(r);
        j["seed"] = seed;
        runs.push_back(j);
        csv << seed << ",f32," << r.max_abs_diff() << ',' << r.max_rel_diff() << ',' << (ok ? "true" : "false") << '\n';
      }
    }
    report["runs"] = runs;
    report["tolerance"] = {{"f64_abs", tol.f64_abs}, {"f32_rel", tol.f32_rel}};
    report["observed"] = {{"f64_max_abs", worst_abs64}, {"f64_max_rel", worst_rel64},
                          {"f32_max_abs", worst_abs32}, {"f32_max_rel", worst_rel32}};
    if (do64) {
      std::cout << "f64: max |D_t - E_t| = " << worst_abs64 << " (bound " << tol.f64_abs << ")\n";
    }
    if (do32) {
      std::cout << "f32: max relative diff = " << worst_rel32 << " (bound " << tol.f32_rel
                << ")\n";
    }
    if (a.calibrate) {
      report["calibration"] = {{"f64_abs_bound", worst_abs64 * 10}, {"f32_rel_bound", worst_rel32 * 10}};
      std::cout << "calibrated bounds (max observed x 10): f64 abs " << worst_abs64 * 10 << ", f32 rel "
                << worst_rel32 * 10 << '\n';
    }
  }
  report["pass"] = pass;
  write_text(output_path(out_dir, a.report), report.dump(2) + "\n");
  write_text(output_path(out_dir, a.summary), csv.str());
  std::cout << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitPass : kExitFail;
}

struct BenchCostArgs {
  bool reference_config = false;
  gcm::CostSweepOptions sweep;
  std::string dtype = "f32";
  std::string csv = "bench_cost.csv";
};

int run_bench_cost(BenchCostArgs a, const fs::path& out_dir) {
  if (a.reference_config) {
    const auto frames = a.sweep.stm_frames;
    const auto max_full = a.sweep.full_shape_max_frames;
    a.sweep = gcm::CostSweepOptions{};
    a.sweep.stm_frames = frames;
    a.sweep.full_shape_max_frames = max_full;
    a.dtype = "f32";
  }
  a.sweep.dtype = gcm::parse_dtype(a.dtype);
  const auto rows = gcm::run_cost_sweep(a.sweep);
  const auto csv = gcm::render_cost_csv(rows);
  write_text(output_path(out_dir, a.csv), csv);
  std::cout << gcm::render_cost_table(rows);
  bool pass = true;
  for (const auto& r : rows) pass = pass && r.measured_mults == r.analytic_mults;
  std::cout << (pass ? "PASS" : "FAIL") << ": measured multiplications " << (pass ? "equal" : "differ from")
            << " the closed forms\n";
  return pass ? kExitPass : kExitFail;
}

struct BenchStreamArgs {
  gcm::StreamOptions stream;
  std::string dtype = "f32";
  bool trajectories = false;
  std::string report = "bench_stream.json";
};

int run_bench_stream(BenchStreamArgs a, const fs::path& out_dir) {
  a.stream.dtype = gcm::parse_dtype(a.dtype);
  const auto t = gcm::run_stream_stress(a.stream);
  write_text(output_path(out_dir, a.report), gcm::to_json(t, a.trajectories).dump(2) + "\n");
  std::cout << "frames: " << a.stream.frames << '\n'
            << "GC  state floats: first " << t.gc_state_floats.front() << ", last " << t.gc_state_floats.back()
            << (t.gc_state_flat() ? " (flat)" : " (NOT flat)") << '\n'
            << "STM state floats: first " << t.stm_state_floats.front() << ", last " << t.stm_state_floats.back()
            << (t.stm_state_linear() ? " (linear)" : " (NOT linear)") << '\n';
  for (const auto& s : t.stm_reads) {
    std::cout << "  STM read at frame " << s.frame << ": " << s.multiplications << " mults\n";
  }
  const bool pass = t.gc_state_flat() && t.gc_cost_constant();
  std::cout << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitPass : kExitFail;
}

struct SegmentArgs {
  std::string video;
  std::string backend = "gc";
  std::string norm;  // defaults per backend
  std::string dtype = "f32";
  double min_iou = 0.95;
  bool oracle = false;
  double oracle_margin = 0.02;
  std::size_t max_locations = 4096;
  std::string dump_pgm;
  std::string report = "segment_report.json";
  gcm::EmbeddingParams embedding;
};

int run_segment(const SegmentArgs& a, const fs::path& out_dir) {
  auto spec = gcm::load_video_spec(a.video);
  if (spec.height * spec.width > a.max_locations) {
    throw gcm::ConfigError("video has " + std::to_string(spec.height * spec.width) +
                           " locations, above --max-locations " + std::to_string(a.max_locations));
  }
  const auto backend = gcm::parse_backend(a.backend);
  const auto norm = a.norm.empty() ? (backend == gcm::Backend::Gc ? gcm::Normalization::GcDoubleSoftmax
                                                                   : gcm::Normalization::StmAffinitySoftmax)
                                   : gcm::parse_normalization(a.norm);
  const auto video = gcm::generate_video(spec);
  const auto result = gcm::segment_video(video, backend, norm, gcm::parse_dtype(a.dtype), a.embedding);

  json report = gcm::to_json(result);
  report["video_spec"] = gcm::to_json(spec);
  report["dtype"] = a.dtype;
  report["min_iou"] = a.min_iou;
  bool pass = result.mean_iou >= a.min_iou;
  if (a.oracle) {
    const auto oracle = gcm::run_nearest_neighbor_oracle(video);
    const bool close = std::abs(result.mean_iou - oracle.mean_iou) <= a.oracle_margin;
    report["oracle"] = gcm::to_json(oracle);
    report["oracle_margin"] = a.oracle_margin;
    pass = pass && close;
    std::cout << "oracle mean IoU: " << oracle.mean_iou << '\n';
  }
  report["pass"] = pass;
  write_text(output_path(out_dir, a.report), report.dump(2) + "\n");
  if (!a.dump_pgm.empty()) {
    const auto dir = output_path(out_dir, a.dump_pgm);
    fs::create_directories(dir);
    for (std::size_t f = 0; f < result.predicted_masks.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "mask_%04zu.pgm", f + 1);
      gcm::write_pgm(dir / name, result.predicted_masks[f]);
    }
  }
  std::cout << spec.name << " [" << result.backend << ", " << result.norm << "] mean IoU: " << result.mean_iou
            << " (threshold " << a.min_iou << ")\n"
            << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitPass : kExitFail;
}

void add_shape_options(CLI::App* cmd, gcm::ShapeConfig& s) {
  cmd->add_option("--height", s.height, "Feature grid height H")->check(CLI::PositiveNumber);
  cmd->add_option("--width", s.width, "Feature grid width W")->check(CLI::PositiveNumber);
  cmd->add_option("--C", s.context_channels, "Context encoder channels")->check(CLI::PositiveNumber);
  cmd->add_option("--Cq", s.query_channels, "Query encoder channels")->check(CLI::PositiveNumber);
  cmd->add_option("--CN", s.key_channels, "Key channels C_N")->check(CLI::PositiveNumber);
  cmd->add_option("--CM", s.value_channels, "Value channels C_M")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global-context vs space-time memory: equivalence, cost and streaming tools"};
  app.require_subcommand(1);

  std::string out_dir = ".";
  if (const char* env = std::getenv("GCM_OUTPUT_DIR"); env != nullptr && *env != '\0') out_dir = env;
  app.add_option("--out-dir", out_dir, "Directory for reports (default: $GCM_OUTPUT_DIR or .)");

  EquivArgs equiv;
  auto* equiv_cmd = app.add_subcommand("equiv", "Compare GC distribution with STM reads on random sequences");
  equiv_cmd->add_option("--seeds", equiv.seeds, "Number of random seeds")->check(CLI::PositiveNumber);
  equiv_cmd->add_option("--first-seed", equiv.first_seed, "First seed");
  equiv_cmd->add_option("--frames", equiv.frames, "Sequence length T")->check(CLI::Range(2, 100000));
  add_shape_options(equiv_cmd, equiv.shape);
  equiv_cmd->add_option("--dtype", equiv.dtype, "f32, f64 or both")->check(CLI::IsMember({"f32", "f64", "both"}));
  equiv_cmd->add_option("--mode", equiv.mode, "Projection mode")->check(CLI::IsMember({"linear", "conv3x3"}));
  equiv_cmd->add_option("--norm", equiv.norm, "none, or softmax for the approximation check")
      ->check(CLI::IsMember({"none", "softmax"}));
  equiv_cmd->add_flag("--calibrate", equiv.calibrate, "Report max observed diff x 10 as candidate bounds");
  equiv_cmd->add_option("--report", equiv.report, "JSON report path");
  equiv_cmd->add_option("--summary", equiv.summary, "CSV summary path");

  BenchCostArgs cost;
  auto* cost_cmd = app.add_subcommand("bench-cost", "Analytic vs measured multiplications and memory per read");
  cost_cmd->add_flag("--reference-config", cost.reference_config, "24x24 grid, C_N=128, C_M=512, f32");
  cost_cmd->add_option("--height", cost.sweep.height)->check(CLI::PositiveNumber);
  cost_cmd->add_option("--width", cost.sweep.width)->check(CLI::PositiveNumber);
  cost_cmd->add_option("--CN", cost.sweep.key_channels)->check(CLI::PositiveNumber);
  cost_cmd->add_option("--CM", cost.sweep.value_channels)->check(CLI::PositiveNumber);
  cost_cmd->add_option("--dtype", cost.dtype)->check(CLI::IsMember({"f32", "f64"}));
  cost_cmd->add_option("--T", cost.sweep.stm_frames, "STM memory sizes")->delimiter(',');
  cost_cmd->add_option("--full-shape-max-t", cost.sweep.full_shape_max_frames,
                       "Largest T run at full shape; larger T scale the T=1 run");
  cost_cmd->add_option("--csv", cost.csv, "CSV output path");

  BenchStreamArgs stream;
  stream.stream.shape = gcm::ShapeConfig{};
  auto* stream_cmd = app.add_subcommand("bench-stream", "Run long GC and STM streams and track state size");
  stream_cmd->add_option("--frames", stream.stream.frames)->check(CLI::PositiveNumber);
  add_shape_options(stream_cmd, stream.stream.shape);
  stream_cmd->add_option("--stm-read-every", stream.stream.stm_read_every, "Sample STM reads every N frames");
  stream_cmd->add_option("--seed", stream.stream.seed);
  stream_cmd->add_option("--dtype", stream.dtype)->check(CLI::IsMember({"f32", "f64"}));
  stream_cmd->add_flag("--trajectories", stream.trajectories, "Include per-frame state sizes in the report");
  stream_cmd->add_option("--report", stream.report, "JSON report path");

  SegmentArgs seg;
  auto* seg_cmd = app.add_subcommand("segment", "Segment a synthetic video from its first-frame mask");
  seg_cmd->add_option("--video", seg.video, "Video spec JSON")->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("--backend", seg.backend)->check(CLI::IsMember({"gc", "stm"}));
  seg_cmd->add_option("--norm", seg.norm, "none, double-softmax (gc) or affinity-softmax (stm)")
      ->check(CLI::IsMember({"none", "double-softmax", "affinity-softmax"}));
  seg_cmd->add_option("--dtype", seg.dtype)->check(CLI::IsMember({"f32", "f64"}));
  seg_cmd->add_option("--min-iou", seg.min_iou, "Pass threshold on mean IoU");
  seg_cmd->add_flag("--oracle", seg.oracle, "Also run the nearest-neighbor oracle; mean IoU must be within the margin of it");
  seg_cmd->add_option("--oracle-margin", seg.oracle_margin);
  seg_cmd->add_option("--max-locations", seg.max_locations, "Refuse videos with more than H*W locations");
  seg_cmd->add_option("--key-sharpness", seg.embedding.key_sharpness);
  seg_cmd->add_option("--query-sharpness", seg.embedding.query_sharpness);
  seg_cmd->add_option("--dump-pgm", seg.dump_pgm, "Directory for per-frame PGM masks");
  seg_cmd->add_option("--report", seg.report, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e);
    return kExitUsage;
  }

  try {
    if (*equiv_cmd) return run_equiv(equiv, out_dir);
    if (*cost_cmd) return run_bench_cost(cost, out_dir);
    if (*stream_cmd) return run_bench_stream(stream, out_dir);
    if (*seg_cmd) return run_segment(seg, out_dir);
  } catch (const gcm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFail;
  }
  return kExitUsage;
}
