#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gcm/pipeline.hpp"
#include "gcm/streaming.hpp"

using gcm::Mask;
using gcm::VideoSpec;

namespace {

std::pair<double, double> centroid(const Mask& m) {
  double sx = 0, sy = 0, n = 0;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.values[y * m.width + x] >= 0.5) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        n += 1;
      }
  return {sx / n, sy / n};
}

Mask mask_from(std::size_t h, std::size_t w, std::initializer_list<std::size_t> on) {
  Mask m{h, w, std::vector<double>(h * w, 0.0)};
  for (auto i : on) m.values[i] = 1.0;
  return m;
}

VideoSpec small_spec() {
  VideoSpec s;
  s.name = "small";
  s.height = 32;
  s.width = 32;
  s.frames = 12;
  s.seed = 5;
  s.object_size = 8;
  s.start_x = 4;
  s.start_y = 6;
  s.velocity_x = 1.5;
  s.velocity_y = 1;
  s.noise = 0.05;
  return s;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("static object keeps its mask") {
    VideoSpec s;
    s.frames = 5;
    const auto v = gcm::generate_video(s);
    REQUIRE(v.frames.size() == 5);
    for (const auto& m : v.ground_truth_masks) {
      CHECK(m.values == v.ground_truth_masks[0].values);
      CHECK(m.area() == 256);
    }
    CHECK(centroid(v.ground_truth_masks[0]).first == doctest::Approx(31.5));
  }

  TEST_CASE("constant velocity moves the centroid by the velocity each frame") {
    VideoSpec s;
    s.frames = 6;
    s.start_x = 4;
    s.start_y = 4;
    s.velocity_x = 2;
    s.velocity_y = 1;
    const auto v = gcm::generate_video(s);
    for (std::size_t f = 1; f < 6; ++f) {
      const auto a = centroid(v.ground_truth_masks[f - 1]);
      const auto b = centroid(v.ground_truth_masks[f]);
      CHECK(b.first - a.first == doctest::Approx(2.0));
      CHECK(b.second - a.second == doctest::Approx(1.0));
    }
  }

  TEST_CASE("occluded frames lose visible object area") {
    VideoSpec s;
    s.frames = 6;
    s.object_size = 10;
    s.start_x = 20;
    s.start_y = 20;
    s.occluder = gcm::Occluder{22, 4, 2, 3, {0.1, 0.15, 0.1}};
    const auto v = gcm::generate_video(s);
    CHECK(v.ground_truth_masks[1].area() == 100);
    CHECK(v.ground_truth_masks[2].area() == 60);
    CHECK(v.ground_truth_masks[3].area() == 60);
    CHECK(v.ground_truth_masks[4].area() == 100);
    // Covered pixels take the occluder color.
    const auto& img = v.frames[2];
    CHECK(img.rgb[(25 * img.width + 23) * 3 + 0] == doctest::Approx(0.1));
  }

  TEST_CASE("degenerate specs are rejected") {
    VideoSpec s;
    s.frames = 0;
    CHECK_THROWS_AS(gcm::generate_video(s), gcm::ConfigError);
    s = VideoSpec{};
    s.object_size = 65;
    CHECK_THROWS_AS(gcm::generate_video(s), gcm::ConfigError);
    s = VideoSpec{};
    s.background_color = s.object_color;
    CHECK_THROWS_AS(gcm::generate_video(s), gcm::ConfigError);
    s = VideoSpec{};
    s.noise = -0.1;
    CHECK_THROWS_AS(gcm::generate_video(s), gcm::ConfigError);
  }

  TEST_CASE("generation is seed-deterministic") {
    const auto a = gcm::generate_video(small_spec());
    const auto b = gcm::generate_video(small_spec());
    CHECK(a.frames[3].rgb == b.frames[3].rgb);
    auto other = small_spec();
    other.seed = 6;
    CHECK(gcm::generate_video(other).frames[3].rgb != a.frames[3].rgb);
    for (double v : a.frames[7].rgb) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("video specs load from the shipped fixtures") {
    const std::filesystem::path dir = GCM_DATA_DIR;
    for (const char* name : {"static-square.json", "moving-square.json", "moving-disk-occluded.json"}) {
      const auto s = gcm::load_video_spec(dir / "videos" / name);
      CHECK(s.height == 64);
      CHECK(s.frames == 30);
      CHECK(gcm::parse_video_spec(gcm::to_json(s)).seed == s.seed);
    }
    CHECK(gcm::load_video_spec(dir / "videos" / "moving-disk-occluded.json").occluder.has_value());
    CHECK_THROWS_AS(gcm::parse_video_spec(nlohmann::json{{"object", {{"shape", "triangle"}}}}), gcm::ConfigError);
  }

  TEST_CASE("encoder emits color, normalized position and the mask") {
    gcm::Image img{2, 4, std::vector<double>(24, 0.0)};
    img.rgb[(1 * 4 + 3) * 3 + 1] = 0.7;
    const Mask m = mask_from(2, 4, {7});
    const auto with = gcm::encode_frame<double>(img, &m);
    const auto without = gcm::encode_frame<float>(img, nullptr);
    CHECK(with.channels() == 6);
    CHECK(without.channels() == 5);
    CHECK(with.values()(7, 1) == doctest::Approx(0.7));
    CHECK(with.values()(7, 3) == doctest::Approx(0.75));
    CHECK(with.values()(7, 4) == doctest::Approx(0.5));
    CHECK(with.values()(7, 5) == 1.0);
    CHECK(with.values()(6, 5) == 0.0);
    CHECK(without.values()(0, 3) == 0.0f);
    const Mask wrong = mask_from(3, 4, {});
    CHECK_THROWS_AS(gcm::encode_frame<double>(img, &wrong), gcm::ShapeError);
  }

  TEST_CASE("IoU on hand-built masks") {
    const auto a = mask_from(2, 2, {0, 1});
    CHECK(gcm::compute_iou(a, a) == 1.0);
    CHECK(gcm::compute_iou(a, mask_from(2, 2, {2, 3})) == 0.0);
    CHECK(gcm::compute_iou(a, mask_from(2, 2, {1, 2})) == doctest::Approx(1.0 / 3.0));
    CHECK(gcm::compute_iou(mask_from(2, 2, {}), mask_from(2, 2, {})) == 1.0);
    auto soft = a;
    soft.values[1] = 0.49;
    CHECK(gcm::compute_iou(soft, a) == doctest::Approx(0.5));
    CHECK_THROWS_AS(gcm::compute_iou(a, mask_from(1, 4, {})), gcm::ShapeError);
  }

  TEST_CASE("segmentation result layout and soft-mask bounds") {
    const auto v = gcm::generate_video(small_spec());
    const auto r = gcm::segment_video(v, gcm::Backend::Gc, gcm::Normalization::None, gcm::DType::F32);
    REQUIRE(r.predicted_masks.size() == 12);
    CHECK(r.per_frame_iou.size() == 11);
    CHECK(r.predicted_masks[0].values == v.ground_truth_masks[0].values);
    for (const auto& m : r.predicted_masks)
      for (double x : m.values) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
      }
    for (auto s : r.state_floats) CHECK(s == 4u);
    CHECK(r.mean_iou >= 0.9);
  }

  TEST_CASE("segmentation is deterministic") {
    const auto v = gcm::generate_video(small_spec());
    const auto a = gcm::segment_video(v, gcm::Backend::Gc, gcm::Normalization::GcDoubleSoftmax, gcm::DType::F32);
    const auto b = gcm::segment_video(v, gcm::Backend::Gc, gcm::Normalization::GcDoubleSoftmax, gcm::DType::F32);
    for (std::size_t f = 0; f < a.predicted_masks.size(); ++f)
      CHECK(a.predicted_masks[f].values == b.predicted_masks[f].values);
  }

  TEST_CASE("GC and STM agree without normalization") {
    const auto v = gcm::generate_video(small_spec());
    const auto gc = gcm::segment_video(v, gcm::Backend::Gc, gcm::Normalization::None, gcm::DType::F32);
    const auto stm = gcm::segment_video(v, gcm::Backend::Stm, gcm::Normalization::None, gcm::DType::F32);
    double worst = 0;
    for (std::size_t f = 0; f < gc.predicted_masks.size(); ++f)
      for (std::size_t i = 0; i < gc.predicted_masks[f].values.size(); ++i)
        worst = std::max(worst, std::abs(gc.predicted_masks[f].values[i] - stm.predicted_masks[f].values[i]));
    CHECK(worst <= 1e-4);
    CHECK(stm.state_floats.back() == 12u * 32u * 32u * 4u);
  }

  TEST_CASE("backend and normalization must match") {
    const auto v = gcm::generate_video(small_spec());
    CHECK_THROWS_AS(gcm::segment_video(v, gcm::Backend::Gc, gcm::Normalization::StmAffinitySoftmax, gcm::DType::F32),
                    gcm::ConfigError);
    CHECK_THROWS_AS(gcm::segment_video(v, gcm::Backend::Stm, gcm::Normalization::GcDoubleSoftmax, gcm::DType::F32),
                    gcm::ConfigError);
  }

  TEST_CASE("nearest-neighbour oracle tracks the small video") {
    const auto v = gcm::generate_video(small_spec());
    const auto r = gcm::run_nearest_neighbor_oracle(v);
    CHECK(r.per_frame_iou.size() == 11);
    CHECK(r.mean_iou >= 0.95);
  }

  TEST_CASE("PGM output") {
    const auto path = std::filesystem::temp_directory_path() / "gcm_mask.pgm";
    Mask m = mask_from(2, 3, {0, 4});
    m.values[1] = 0.5;
    gcm::write_pgm(path, m);
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    CHECK(bytes.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(bytes[header.size()]) == 255);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 128);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 0);
    std::filesystem::remove(path);
  }
}

TEST_SUITE("streaming") {
  TEST_CASE("short stream keeps GC flat and STM linear") {
    gcm::StreamOptions o;
    o.shape = {4, 4, 3, 3, 2, 3};
    o.frames = 50;
    o.stm_read_every = 10;
    const auto t = gcm::run_stream_stress(o);
    CHECK(t.gc_state_floats.size() == 50);
    CHECK(t.gc_distribute_mults.size() == 49);
    CHECK(t.gc_state_flat());
    CHECK(t.gc_cost_constant());
    CHECK(t.stm_state_linear());
    CHECK(t.stm_reads_match_formula());
    std::vector<std::size_t> frames;
    for (const auto& s : t.stm_reads) frames.push_back(s.frame);
    CHECK(frames == std::vector<std::size_t>{2, 10, 20, 30, 40, 50});
    CHECK(t.stm_reads.back().frames_stored == 49);
    const auto j = gcm::to_json(t, true);
    CHECK(j["gc_state_floats"].size() == 50);
    CHECK(j["stm_state_floats_final"] == 50u * 16u * 5u);
  }

  TEST_CASE("empty stream is a config error") {
    gcm::StreamOptions o;
    o.frames = 0;
    CHECK_THROWS_AS(gcm::run_stream_stress(o), gcm::ConfigError);
  }
}
