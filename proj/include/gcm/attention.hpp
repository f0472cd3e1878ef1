#pragma once

// Key / query / value generation shared by the global-context and
// space-time-memory paths. Both memories must see identical projections for
// their outputs to be comparable, so there is exactly one implementation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcm/tensor.hpp"

namespace gcm {

// A dense H x W x C grid flattened to (H*W) x C, row index y * W + x.
template <std::floating_point T>
class FeatureMap {
 public:
  FeatureMap(std::size_t height, std::size_t width, Matrix<T> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t locations() const { return height_ * width_; }
  std::size_t channels() const { return values_.cols(); }
  const Matrix<T>& values() const { return values_; }

  // Reorders locations: row i of the result is row order[i] of this map.
  FeatureMap permuted(std::span<const std::size_t> order) const;

  template <std::floating_point U>
  FeatureMap<U> cast() const {
    return FeatureMap<U>(height_, width_, values_.template cast<U>());
  }

 private:
  std::size_t height_;
  std::size_t width_;
  Matrix<T> values_;
};

enum class ProjectionMode { Linear, Conv3x3 };

enum class Normalization { None, GcDoubleSoftmax, StmAffinitySoftmax };

std::string to_string(ProjectionMode m);
std::string to_string(Normalization n);
ProjectionMode parse_projection_mode(const std::string& s);
Normalization parse_normalization(const std::string& s);

struct ProjectionShape {
  std::size_t context_channels = 0;  // C: key/value encoder input (carries the mask)
  std::size_t query_channels = 0;    // C_q: query encoder input
  std::size_t key_channels = 0;      // C_N
  std::size_t value_channels = 0;    // C_M
};

// The k, q, v functions. In conv3x3 mode each weight matrix stacks nine
// C x C_out taps, tap index (dy + 1) * 3 + (dx + 1).
template <std::floating_point T>
class ProjectionSet {
 public:
  ProjectionSet(ProjectionMode mode, Matrix<T> key_weights, Matrix<T> query_weights, Matrix<T> value_weights,
                std::vector<T> key_bias = {}, std::vector<T> query_bias = {}, std::vector<T> value_bias = {});

  // Weights and biases uniform in [-1/sqrt(C_in), 1/sqrt(C_in)].
  static ProjectionSet random(const ProjectionShape& shape, ProjectionMode mode, std::uint64_t seed,
                              bool with_bias = true);

  ProjectionMode mode() const { return mode_; }
  std::size_t taps() const { return mode_ == ProjectionMode::Linear ? 1 : 9; }
  ProjectionShape shape() const;
  std::size_t key_channels() const { return key_weights_.cols(); }
  std::size_t value_channels() const { return value_weights_.cols(); }
  std::size_t context_channels() const { return key_weights_.rows() / taps(); }
  std::size_t query_channels() const { return query_weights_.rows() / taps(); }

  const Matrix<T>& key_weights() const { return key_weights_; }
  const Matrix<T>& query_weights() const { return query_weights_; }
  const Matrix<T>& value_weights() const { return value_weights_; }
  const std::vector<T>& key_bias() const { return key_bias_; }
  const std::vector<T>& query_bias() const { return query_bias_; }
  const std::vector<T>& value_bias() const { return value_bias_; }

  template <std::floating_point U>
  ProjectionSet<U> cast() const {
    return ProjectionSet<U>(mode_, key_weights_.template cast<U>(), query_weights_.template cast<U>(),
                            value_weights_.template cast<U>(), {key_bias_.begin(), key_bias_.end()},
                            {query_bias_.begin(), query_bias_.end()}, {value_bias_.begin(), value_bias_.end()});
  }

 private:
  ProjectionMode mode_;
  Matrix<T> key_weights_;
  Matrix<T> query_weights_;
  Matrix<T> value_weights_;
  std::vector<T> key_bias_;
  std::vector<T> query_bias_;
  std::vector<T> value_bias_;
};

// Keys, (H*W) x C_N. GcDoubleSoftmax normalizes each column over locations.
template <std::floating_point T>
Matrix<T> make_keys(const FeatureMap<T>& x, const ProjectionSet<T>& p, Normalization norm);

// Queries, (H*W) x C_N. GcDoubleSoftmax normalizes each row over channels.
template <std::floating_point T>
Matrix<T> make_queries(const FeatureMap<T>& x, const ProjectionSet<T>& p, Normalization norm);

// Values, (H*W) x C_M. Never normalized.
template <std::floating_point T>
Matrix<T> make_values(const FeatureMap<T>& x, const ProjectionSet<T>& p);

// Projection fixtures: a JSON manifest naming GCT1 files per role.
//
//   {"C": 6, "C_q": 5, "C_N": 4, "C_M": 5, "mode": "linear", "seed": 7,
//    "files": {"key": "k.gct", "query": "q.gct", "value": "v.gct",
//              "key_bias": "kb.gct", ...}}
//
// Without "files" the set is drawn from `seed`. Bias files are 1 x C_out.
template <std::floating_point T>
ProjectionSet<T> load_projection_manifest(const std::filesystem::path& manifest);

template <std::floating_point T>
void save_projection_manifest(const std::filesystem::path& manifest, const ProjectionSet<T>& p,
                              std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace gcm
