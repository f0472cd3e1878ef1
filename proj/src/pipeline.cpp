#include "gcm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "gcm/global_context.hpp"
#include "gcm/stm.hpp"

namespace gcm {
namespace {

Rgb parse_rgb(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("colors are [r, g, b] arrays");
  Rgb c{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  for (double v : {c.r, c.g, c.b}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("color components must lie in [0, 1]");
  }
  return c;
}

nlohmann::json rgb_json(const Rgb& c) { return nlohmann::json::array({c.r, c.g, c.b}); }

// Reflects p into [0, limit] (a bouncing box).
double bounce(double p, double limit) {
  if (limit <= 0) return 0;
  const double period = 2 * limit;
  double m = std::fmod(p, period);
  if (m < 0) m += period;
  return m > limit ? period - m : m;
}

double object_size_at(const VideoSpec& s, std::size_t frame) {
  const double cap = static_cast<double>(std::min(s.height, s.width));
  return std::clamp(std::round(s.object_size + s.size_change_per_frame * static_cast<double>(frame)), 1.0, cap);
}

}  // namespace

VideoSpec parse_video_spec(const nlohmann::json& j) {
  try {
    VideoSpec s;
    s.name = j.value("name", s.name);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.frames = j.value("frames", s.frames);
    s.seed = j.value("seed", s.seed);
    if (j.contains("object")) {
      const auto& o = j.at("object");
      const auto shape = o.value("shape", std::string("square"));
      if (shape == "square") {
        s.shape = ObjectShape::Square;
      } else if (shape == "disk") {
        s.shape = ObjectShape::Disk;
      } else {
        throw ConfigError("unknown object shape '" + shape + "'");
      }
      s.object_size = o.value("size", s.object_size);
      s.size_change_per_frame = o.value("size_change_per_frame", s.size_change_per_frame);
      if (o.contains("color")) s.object_color = parse_rgb(o.at("color"));
    }
    if (j.contains("trajectory")) {
      const auto& t = j.at("trajectory");
      if (t.contains("start")) {
        s.start_x = t.at("start").at(0).get<double>();
        s.start_y = t.at("start").at(1).get<double>();
      }
      if (t.contains("velocity")) {
        s.velocity_x = t.at("velocity").at(0).get<double>();
        s.velocity_y = t.at("velocity").at(1).get<double>();
      }
    }
    if (j.contains("background")) s.background_color = parse_rgb(j.at("background"));
    s.noise = j.value("noise", s.noise);
    if (j.contains("occluder")) {
      const auto& o = j.at("occluder");
      Occluder occ;
      occ.x = o.at("x").get<std::size_t>();
      occ.width = o.at("width").get<std::size_t>();
      occ.first_frame = o.at("first_frame").get<std::size_t>();
      occ.last_frame = o.at("last_frame").get<std::size_t>();
      if (o.contains("color")) occ.color = parse_rgb(o.at("color"));
      s.occluder = occ;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed video spec: " + std::string(e.what()));
  }
}

VideoSpec load_video_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open video spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed video spec " + path.string() + ": " + e.what());
  }
  return parse_video_spec(j);
}

nlohmann::json to_json(const VideoSpec& s) {
  nlohmann::json j = {
      {"name", s.name},
      {"height", s.height},
      {"width", s.width},
      {"frames", s.frames},
      {"seed", s.seed},
      {"object",
       {{"shape", s.shape == ObjectShape::Square ? "square" : "disk"},
        {"size", s.object_size},
        {"size_change_per_frame", s.size_change_per_frame},
        {"color", rgb_json(s.object_color)}}},
      {"trajectory", {{"start", {s.start_x, s.start_y}}, {"velocity", {s.velocity_x, s.velocity_y}}}},
      {"background", rgb_json(s.background_color)},
      {"noise", s.noise},
  };
  if (s.occluder) {
    j["occluder"] = {{"x", s.occluder->x},
                     {"width", s.occluder->width},
                     {"first_frame", s.occluder->first_frame},
                     {"last_frame", s.occluder->last_frame},
                     {"color", rgb_json(s.occluder->color)}};
  }
  return j;
}

double Mask::area() const {
  return static_cast<double>(std::count_if(values.begin(), values.end(), [](double v) { return v >= 0.5; }));
}

SyntheticVideo generate_video(const VideoSpec& s) {
  if (s.frames == 0) throw ConfigError("video must have at least one frame");
  if (s.height == 0 || s.width == 0) throw ConfigError("video dimensions must be positive");
  if (s.object_size < 1) throw ConfigError("object size must be at least one pixel");
  if (s.object_size > static_cast<double>(std::min(s.height, s.width))) {
    throw ConfigError("object (" + std::to_string(s.object_size) + " px) is larger than the " +
                      std::to_string(s.height) + "x" + std::to_string(s.width) + " frame");
  }
  if (s.object_color.r == s.background_color.r && s.object_color.g == s.background_color.g &&
      s.object_color.b == s.background_color.b) {
    throw ConfigError("object and background colors must differ");
  }
  if (s.noise < 0) throw ConfigError("noise must be non-negative");
  if (s.occluder && (s.occluder->width == 0 || s.occluder->last_frame < s.occluder->first_frame)) {
    throw ConfigError("occluder needs a positive width and first_frame <= last_frame");
  }

  SyntheticVideo video;
  video.spec = s;
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> noise(0.0, s.noise > 0 ? s.noise : 1.0);
  const std::size_t n = s.height * s.width;

  for (std::size_t f = 0; f < s.frames; ++f) {
    const double size = object_size_at(s, f);
    const double x0 = bounce(s.start_x + s.velocity_x * static_cast<double>(f), static_cast<double>(s.width) - size);
    const double y0 = bounce(s.start_y + s.velocity_y * static_cast<double>(f), static_cast<double>(s.height) - size);
    const bool occluded_frame = s.occluder && f >= s.occluder->first_frame && f <= s.occluder->last_frame;

    Image img{s.height, s.width, std::vector<double>(n * 3)};
    Mask gt{s.height, s.width, std::vector<double>(n, 0.0)};
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        bool inside = false;
        if (s.shape == ObjectShape::Square) {
          inside = px >= x0 && px < x0 + size && py >= y0 && py < y0 + size;
        } else {
          const double cx = x0 + size / 2, cy = y0 + size / 2;
          const double dx = px + 0.5 - cx, dy = py + 0.5 - cy;
          inside = dx * dx + dy * dy <= size * size / 4;
        }
        const bool occluded = occluded_frame && x >= s.occluder->x && x < s.occluder->x + s.occluder->width;
        Rgb c = s.background_color;
        if (occluded) {
          c = s.occluder->color;
        } else if (inside) {
          c = s.object_color;
          gt.values[y * s.width + x] = 1.0;
        }
        double* dst = &img.rgb[(y * s.width + x) * 3];
        dst[0] = c.r;
        dst[1] = c.g;
        dst[2] = c.b;
        if (s.noise > 0) {
          for (int k = 0; k < 3; ++k) dst[k] = std::clamp(dst[k] + noise(rng), 0.0, 1.0);
        }
      }
    }
    video.frames.push_back(std::move(img));
    video.ground_truth_masks.push_back(std::move(gt));
  }
  return video;
}

template <std::floating_point T>
FeatureMap<T> encode_frame(const Image& frame, const Mask* mask) {
  if (mask != nullptr && (mask->height != frame.height || mask->width != frame.width)) {
    throw ShapeError("mask " + shape_string(mask->height, mask->width) + " does not match frame " +
                     shape_string(frame.height, frame.width));
  }
  const std::size_t channels = mask != nullptr ? 6 : 5;
  Matrix<T> values(frame.height * frame.width, channels);
  for (std::size_t y = 0; y < frame.height; ++y) {
    for (std::size_t x = 0; x < frame.width; ++x) {
      const std::size_t loc = y * frame.width + x;
      auto row = values.row(loc);
      row[0] = static_cast<T>(frame.rgb[loc * 3 + 0]);
      row[1] = static_cast<T>(frame.rgb[loc * 3 + 1]);
      row[2] = static_cast<T>(frame.rgb[loc * 3 + 2]);
      row[3] = static_cast<T>(static_cast<double>(x) / static_cast<double>(frame.width));
      row[4] = static_cast<T>(static_cast<double>(y) / static_cast<double>(frame.height));
      if (mask != nullptr) row[5] = static_cast<T>(mask->values[loc]);
    }
  }
  return FeatureMap<T>(frame.height, frame.width, std::move(values));
}

double compute_iou(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.values.size() != gt.values.size()) {
    throw ShapeError("IoU of " + shape_string(pred.height, pred.width) + " and " +
                     shape_string(gt.height, gt.width) + " masks");
  }
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] >= 0.5;
    const bool g = gt.values[i] >= 0.5;
    both += p && g;
    either += p || g;
  }
  return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

std::string to_string(Backend b) { return b == Backend::Gc ? "gc" : "stm"; }

Backend parse_backend(const std::string& s) {
  if (s == "gc") return Backend::Gc;
  if (s == "stm") return Backend::Stm;
  throw ConfigError("unknown backend '" + s + "' (expected gc or stm)");
}

template <std::floating_point T>
ProjectionSet<T> segmentation_projections(const Image& first_frame, const Mask& first_mask,
                                          const EmbeddingParams& params) {
  if (first_mask.height != first_frame.height || first_mask.width != first_frame.width) {
    throw ShapeError("first mask does not match first frame");
  }
  double fg[3] = {0, 0, 0}, bg[3] = {0, 0, 0};
  double fg_weight = 0, bg_weight = 0;
  for (std::size_t i = 0; i < first_mask.values.size(); ++i) {
    const double m = first_mask.values[i];
    for (int k = 0; k < 3; ++k) {
      fg[k] += m * first_frame.rgb[i * 3 + k];
      bg[k] += (1 - m) * first_frame.rgb[i * 3 + k];
    }
    fg_weight += m;
    bg_weight += 1 - m;
  }
  if (fg_weight <= 0 || bg_weight <= 0) {
    throw ConfigError("the first mask must contain both object and background pixels");
  }
  double axis[3], mid[3], len2 = 0;
  for (int k = 0; k < 3; ++k) {
    fg[k] /= fg_weight;
    bg[k] /= bg_weight;
    axis[k] = fg[k] - bg[k];
    mid[k] = (fg[k] + bg[k]) / 2;
    len2 += axis[k] * axis[k];
  }
  if (len2 < 1e-8) throw ConfigError("object and background colors are indistinguishable in the first frame");
  // z = s_q at the object mean color, -s_q at the background mean color.
  const double gain = 2 * params.query_sharpness / len2;
  double offset = 0;
  for (int k = 0; k < 3; ++k) offset += axis[k] * mid[k];

  Matrix<T> query(5, 2);
  for (int k = 0; k < 3; ++k) {
    query(k, 0) = static_cast<T>(gain * axis[k]);
    query(k, 1) = static_cast<T>(-gain * axis[k]);
  }
  const std::vector<T> query_bias = {static_cast<T>(-gain * offset), static_cast<T>(gain * offset)};

  Matrix<T> key(6, 2);
  key(5, 0) = static_cast<T>(params.key_sharpness);
  key(5, 1) = static_cast<T>(-params.key_sharpness);

  Matrix<T> value(6, 2);
  value(5, 0) = T{1};
  value(5, 1) = T{-1};
  const std::vector<T> value_bias = {T{0}, T{1}};

  return ProjectionSet<T>(ProjectionMode::Linear, std::move(key), std::move(query), std::move(value), {},
                          query_bias, value_bias);
}

template <std::floating_point T>
SegmentationResult run_sequence(const SyntheticVideo& video, Backend backend, const ProjectionSet<T>& p,
                                Normalization norm) {
  if (video.frames.empty()) throw ConfigError("cannot segment an empty video");
  if (backend == Backend::Gc && norm == Normalization::StmAffinitySoftmax) {
    throw ConfigError("the gc backend does not support " + to_string(norm));
  }
  if (backend == Backend::Stm && norm == Normalization::GcDoubleSoftmax) {
    throw ConfigError("the stm backend does not support " + to_string(norm));
  }

  SegmentationResult result;
  result.video = video.spec.name;
  result.backend = to_string(backend);
  result.norm = to_string(norm);

  GlobalContext<T> gc(p.key_channels(), p.value_channels());
  StmMemory<T> stm(p.key_channels(), p.value_channels());
  OpCounters counters;

  auto absorb = [&](const Image& frame, const Mask& mask) {
    const auto features = encode_frame<T>(frame, &mask);
    if (backend == Backend::Gc) {
      gc = update(std::move(gc), extract(features, p, norm, counters));
      result.state_floats.push_back(gc.persistent_floats());
    } else {
      stm = write(std::move(stm), produce(features, p, counters));
      result.state_floats.push_back(stm.persistent_floats());
    }
  };

  const Mask& first = video.ground_truth_masks.front();
  result.predicted_masks.push_back(first);
  absorb(video.frames.front(), first);

  for (std::size_t f = 1; f < video.frames.size(); ++f) {
    const Image& frame = video.frames[f];
    const auto query = encode_frame<T>(frame, nullptr);
    const auto out = backend == Backend::Gc ? distribute(query, gc, p, norm, counters)
                                            : read(query, stm, p, norm, counters);
    Mask soft{frame.height, frame.width, std::vector<double>(out.rows())};
    for (std::size_t i = 0; i < out.rows(); ++i) soft.values[i] = std::clamp(static_cast<double>(out(i, 0)), 0.0, 1.0);
    result.per_frame_iou.push_back(compute_iou(soft, video.ground_truth_masks[f]));
    absorb(frame, soft);
    result.predicted_masks.push_back(std::move(soft));
  }
  if (!result.per_frame_iou.empty()) {
    result.mean_iou = std::accumulate(result.per_frame_iou.begin(), result.per_frame_iou.end(), 0.0) /
                      static_cast<double>(result.per_frame_iou.size());
  } else {
    result.mean_iou = 1.0;
  }
  return result;
}

SegmentationResult segment_video(const SyntheticVideo& video, Backend backend, Normalization norm, DType dtype,
                                 const EmbeddingParams& params) {
  if (video.frames.empty()) throw ConfigError("cannot segment an empty video");
  if (dtype == DType::F32) {
    const auto p = segmentation_projections<float>(video.frames.front(), video.ground_truth_masks.front(), params);
    return run_sequence<float>(video, backend, p, norm);
  }
  const auto p = segmentation_projections<double>(video.frames.front(), video.ground_truth_masks.front(), params);
  return run_sequence<double>(video, backend, p, norm);
}

SegmentationResult run_nearest_neighbor_oracle(const SyntheticVideo& video) {
  if (video.frames.empty()) throw ConfigError("cannot segment an empty video");
  SegmentationResult result;
  result.video = video.spec.name;
  result.backend = "nearest-neighbor-oracle";
  result.norm = "none";

  constexpr std::size_t kDims = 5;
  std::vector<float> memory;  // kDims floats per stored pixel
  std::vector<unsigned char> labels;

  auto features_of = [](const Image& frame) {
    const auto fm = encode_frame<float>(frame, nullptr);
    return std::vector<float>(fm.values().data().begin(), fm.values().data().end());
  };
  auto store = [&](const std::vector<float>& feats, const Mask& mask) {
    memory.insert(memory.end(), feats.begin(), feats.end());
    for (double v : mask.values) labels.push_back(v >= 0.5 ? 1 : 0);
  };

  const Mask& first = video.ground_truth_masks.front();
  result.predicted_masks.push_back(first);
  store(features_of(video.frames.front()), first);
  result.state_floats.push_back(memory.size());

  for (std::size_t f = 1; f < video.frames.size(); ++f) {
    const Image& frame = video.frames[f];
    const auto feats = features_of(frame);
    const std::size_t n = frame.height * frame.width;
    const std::size_t stored = labels.size();
    Mask pred{frame.height, frame.width, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      const float* q = &feats[i * kDims];
      float best = std::numeric_limits<float>::max();
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < stored; ++j) {
        const float* m = &memory[j * kDims];
        float d = 0;
        for (std::size_t k = 0; k < kDims; ++k) {
          const float diff = q[k] - m[k];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      pred.values[i] = labels[best_j];
    }
    result.per_frame_iou.push_back(compute_iou(pred, video.ground_truth_masks[f]));
    store(feats, pred);
    result.state_floats.push_back(memory.size());
    result.predicted_masks.push_back(std::move(pred));
  }
  result.mean_iou = result.per_frame_iou.empty()
                        ? 1.0
                        : std::accumulate(result.per_frame_iou.begin(), result.per_frame_iou.end(), 0.0) /
                              static_cast<double>(result.per_frame_iou.size());
  return result;
}

nlohmann::json to_json(const SegmentationResult& r) {
  return {{"video", r.video},           {"backend", r.backend},     {"norm", r.norm},
          {"mean_iou", r.mean_iou},     {"per_frame_iou", r.per_frame_iou},
          {"state_floats", r.state_floats}};
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (double v : mask.values) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
}

#define GCM_INSTANTIATE(T)                                                                                   \
  template FeatureMap<T> encode_frame(const Image&, const Mask*);                                            \
  template ProjectionSet<T> segmentation_projections(const Image&, const Mask&, const EmbeddingParams&);     \
  template SegmentationResult run_sequence(const SyntheticVideo&, Backend, const ProjectionSet<T>&, Normalization);

GCM_INSTANTIATE(float)
GCM_INSTANTIATE(double)

#undef GCM_INSTANTIATE

}  // namespace gcm
