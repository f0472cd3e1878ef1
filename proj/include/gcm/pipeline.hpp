#pragma once

// Streaming semi-supervised segmentation on synthetic videos.
//
// Frame 1 and its ground-truth mask seed the memory. Every later frame is
// read against the memory, decoded into a soft mask, scored, and fed back
// (unthresholded) as the next context frame.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcm/attention.hpp"

namespace gcm {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

enum class ObjectShape { Square, Disk };

struct Occluder {
  std::size_t x = 0;      // first covered column
  std::size_t width = 1;  // strip width in pixels
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;  // inclusive, 0-based
  Rgb color{0.5, 0.5, 0.5};
};

// Frame indices are 0-based. Positions are the top-left corner of the
// object's bounding box; the box bounces off the frame borders so the object
// stays fully inside.
struct VideoSpec {
  std::string name = "video";
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 30;
  std::uint64_t seed = 1;
  ObjectShape shape = ObjectShape::Square;
  double object_size = 16;
  double size_change_per_frame = 0;
  double start_x = 24;
  double start_y = 24;
  double velocity_x = 0;
  double velocity_y = 0;
  Rgb object_color{0.9, 0.2, 0.2};
  Rgb background_color{0.1, 0.3, 0.8};
  double noise = 0;  // per-channel gaussian sigma, clamped to [0, 1]
  std::optional<Occluder> occluder;
};

VideoSpec parse_video_spec(const nlohmann::json& j);
VideoSpec load_video_spec(const std::filesystem::path& path);
nlohmann::json to_json(const VideoSpec& spec);

// H x W x 3, values in [0, 1], pixel (y, x) at offset (y * W + x) * 3.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> rgb;
};

// H x W, values in [0, 1], pixel (y, x) at y * W + x.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double area() const;  // pixels >= 0.5
};

struct SyntheticVideo {
  std::vector<Image> frames;
  std::vector<Mask> ground_truth_masks;
  VideoSpec spec;
};

// Throws ConfigError for degenerate specs (object larger than the frame,
// identical object/background colors, empty video).
SyntheticVideo generate_video(const VideoSpec& spec);

// Per-pixel [r, g, b, x/W, y/H], plus the mask value when one is given.
template <std::floating_point T>
FeatureMap<T> encode_frame(const Image& frame, const Mask* mask);

// |pred >= 0.5 ∧ gt| / |pred >= 0.5 ∨ gt|; 1 when both are empty.
double compute_iou(const Mask& pred, const Mask& gt);

enum class Backend { Gc, Stm };

std::string to_string(Backend b);
Backend parse_backend(const std::string& s);

struct EmbeddingParams {
  double key_sharpness = 20;    // logit gap between masked and unmasked locations
  double query_sharpness = 10;  // logit at the reference object / background color
};

// Designed projections (C = 6, C_q = 5, C_N = 2, C_M = 2).
//   keys:    [s_k * mask, -s_k * mask]  -> channel 0 pools the object, 1 the background
//   values:  [mask, 1 - mask]           -> value channel 0 is the foreground indicator
//   queries: [+z, -z], z = s_q * projection of the color onto the axis between
//            the reference object and background mean colors, zero at the midpoint
// The reference colors come from the first frame and its mask.
template <std::floating_point T>
ProjectionSet<T> segmentation_projections(const Image& first_frame, const Mask& first_mask,
                                          const EmbeddingParams& params = {});

struct SegmentationResult {
  std::string video;
  std::string backend;
  std::string norm;
  // Frame 1 holds the given mask; frames 2..N hold predictions.
  std::vector<Mask> predicted_masks;
  // IoU of frames 2..N.
  std::vector<double> per_frame_iou;
  double mean_iou = 0;
  // Persistent memory floats after absorbing each frame.
  std::vector<std::uint64_t> state_floats;
};

// Soft mask = clamp(channel 0 of the memory read, 0, 1).
template <std::floating_point T>
SegmentationResult run_sequence(const SyntheticVideo& video, Backend backend, const ProjectionSet<T>& p,
                                Normalization norm);

// Designed projections + run_sequence in one call.
SegmentationResult segment_video(const SyntheticVideo& video, Backend backend, Normalization norm, DType dtype,
                                 const EmbeddingParams& params = {});

// Upper-bound reference: each query pixel takes the label of its nearest
// stored pixel (Euclidean distance over the query features) among all past
// frames. Frame 1 is labeled by ground truth, later frames by the oracle's own
// predictions.
SegmentationResult run_nearest_neighbor_oracle(const SyntheticVideo& video);

nlohmann::json to_json(const SegmentationResult& result);

// Binary PGM (P5), 255 = foreground score 1.
void write_pgm(const std::filesystem::path& path, const Mask& mask);

}  // namespace gcm
