#include "gcm/attention.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "gcm/tensor_io.hpp"

namespace gcm {

template <std::floating_point T>
FeatureMap<T>::FeatureMap(std::size_t height, std::size_t width, Matrix<T> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height_ == 0 || width_ == 0 || values_.cols() == 0) {
    throw ShapeError("feature map dimensions must be positive, got " + std::to_string(height_) + "x" +
                     std::to_string(width_) + "x" + std::to_string(values_.cols()));
  }
  if (values_.rows() != height_ * width_) {
    throw ShapeError("feature matrix " + values_.shape_string() + " does not flatten a " + std::to_string(height_) +
                     "x" + std::to_string(width_) + " grid");
  }
}

template <std::floating_point T>
FeatureMap<T> FeatureMap<T>::permuted(std::span<const std::size_t> order) const {
  if (order.size() != locations()) throw ShapeError("permutation length does not match location count");
  Matrix<T> out(values_.rows(), values_.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = values_.row(order[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return FeatureMap(height_, width_, std::move(out));
}

std::string to_string(ProjectionMode m) { return m == ProjectionMode::Linear ? "linear" : "conv3x3"; }

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::None:
      return "none";
    case Normalization::GcDoubleSoftmax:
      return "gc-double-softmax";
    case Normalization::StmAffinitySoftmax:
      return "stm-affinity-softmax";
  }
  return "?";
}

ProjectionMode parse_projection_mode(const std::string& s) {
  if (s == "linear") return ProjectionMode::Linear;
  if (s == "conv3x3") return ProjectionMode::Conv3x3;
  throw ConfigError("unknown projection mode '" + s + "' (expected linear or conv3x3)");
}

Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::None;
  if (s == "gc-double-softmax" || s == "double-softmax") return Normalization::GcDoubleSoftmax;
  if (s == "stm-affinity-softmax" || s == "affinity-softmax") return Normalization::StmAffinitySoftmax;
  throw ConfigError("unknown normalization '" + s + "'");
}

namespace {

template <std::floating_point T>
std::vector<T> bias_or_zero(std::vector<T> bias, std::size_t width, const char* role) {
  if (bias.empty()) return std::vector<T>(width, T{0});
  if (bias.size() != width) {
    throw ShapeError(std::string(role) + " bias has length " + std::to_string(bias.size()) + ", expected " +
                     std::to_string(width));
  }
  return bias;
}

// Per-location affine map or zero-padded 3x3 convolution.
template <std::floating_point T>
Matrix<T> project(const FeatureMap<T>& x, const Matrix<T>& weights, const std::vector<T>& bias, ProjectionMode mode,
                  const char* role) {
  const std::size_t taps = mode == ProjectionMode::Linear ? 1 : 9;
  const std::size_t in = x.channels();
  if (weights.rows() != taps * in) {
    throw ShapeError(std::string(role) + " projection expects " + std::to_string(weights.rows() / taps) +
                     " input channels, feature map has " + std::to_string(in));
  }
  const std::size_t out_ch = weights.cols();
  Matrix<T> out(x.locations(), out_ch);
  const Matrix<T>& src = x.values();
  const auto h = static_cast<std::ptrdiff_t>(x.height());
  const auto w = static_cast<std::ptrdiff_t>(x.width());

  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
      const auto loc = static_cast<std::size_t>(y * w + xx);
      auto dst = out.row(loc);
      std::copy(bias.begin(), bias.end(), dst.begin());
      for (std::size_t tap = 0; tap < taps; ++tap) {
        std::ptrdiff_t ny = y, nx = xx;
        if (taps == 9) {
          ny += static_cast<std::ptrdiff_t>(tap / 3) - 1;
          nx += static_cast<std::ptrdiff_t>(tap % 3) - 1;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        }
        const auto in_row = src.row(static_cast<std::size_t>(ny * w + nx));
        for (std::size_t c = 0; c < in; ++c) {
          const T s = in_row[c];
          const auto wrow = weights.row(tap * in + c);
          for (std::size_t o = 0; o < out_ch; ++o) dst[o] += s * wrow[o];
        }
      }
    }
  }
  return out;
}

template <std::floating_point T>
Matrix<T> uniform_matrix(std::size_t rows, std::size_t cols, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<T> dist(-bound, bound);
  Matrix<T> m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

template <std::floating_point T>
std::vector<T> uniform_vector(std::size_t n, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<T> dist(-bound, bound);
  std::vector<T> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

template <std::floating_point T>
ProjectionSet<T>::ProjectionSet(ProjectionMode mode, Matrix<T> key_weights, Matrix<T> query_weights,
                                Matrix<T> value_weights, std::vector<T> key_bias, std::vector<T> query_bias,
                                std::vector<T> value_bias)
    : mode_(mode),
      key_weights_(std::move(key_weights)),
      query_weights_(std::move(query_weights)),
      value_weights_(std::move(value_weights)) {
  const std::size_t t = taps();
  if (key_weights_.rows() != value_weights_.rows()) {
    throw ShapeError("key weights " + key_weights_.shape_string() + " and value weights " +
                     value_weights_.shape_string() + " must read the same input channels");
  }
  if (key_weights_.rows() % t != 0 || query_weights_.rows() % t != 0 || key_weights_.rows() == 0 ||
      query_weights_.rows() == 0) {
    throw ShapeError("conv3x3 weights must stack 9 taps per input channel");
  }
  if (query_weights_.cols() != key_weights_.cols()) {
    throw ShapeError("queries and keys must share C_N: " + query_weights_.shape_string() + " vs " +
                     key_weights_.shape_string());
  }
  if (key_weights_.cols() == 0 || value_weights_.cols() == 0) throw ShapeError("C_N and C_M must be positive");
  key_bias_ = bias_or_zero(std::move(key_bias), key_weights_.cols(), "key");
  query_bias_ = bias_or_zero(std::move(query_bias), query_weights_.cols(), "query");
  value_bias_ = bias_or_zero(std::move(value_bias), value_weights_.cols(), "value");
}

template <std::floating_point T>
ProjectionSet<T> ProjectionSet<T>::random(const ProjectionShape& shape, ProjectionMode mode, std::uint64_t seed,
                                          bool with_bias) {
  if (shape.context_channels == 0 || shape.query_channels == 0 || shape.key_channels == 0 ||
      shape.value_channels == 0) {
    throw ConfigError("projection shape dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  const std::size_t t = mode == ProjectionMode::Linear ? 1 : 9;
  const T context_bound = T{1} / std::sqrt(static_cast<T>(shape.context_channels));
  const T query_bound = T{1} / std::sqrt(static_cast<T>(shape.query_channels));
  auto k = uniform_matrix<T>(t * shape.context_channels, shape.key_channels, context_bound, rng);
  auto q = uniform_matrix<T>(t * shape.query_channels, shape.key_channels, query_bound, rng);
  auto v = uniform_matrix<T>(t * shape.context_channels, shape.value_channels, context_bound, rng);
  std::vector<T> kb, qb, vb;
  if (with_bias) {
    kb = uniform_vector<T>(shape.key_channels, context_bound, rng);
    qb = uniform_vector<T>(shape.key_channels, query_bound, rng);
    vb = uniform_vector<T>(shape.value_channels, context_bound, rng);
  }
  return ProjectionSet(mode, std::move(k), std::move(q), std::move(v), std::move(kb), std::move(qb), std::move(vb));
}

template <std::floating_point T>
ProjectionShape ProjectionSet<T>::shape() const {
  return {context_channels(), query_channels(), key_channels(), value_channels()};
}

template <std::floating_point T>
Matrix<T> make_keys(const FeatureMap<T>& x, const ProjectionSet<T>& p, Normalization norm) {
  auto keys = project(x, p.key_weights(), p.key_bias(), p.mode(), "key");
  if (norm == Normalization::GcDoubleSoftmax) return softmax_cols(keys);
  return keys;
}

template <std::floating_point T>
Matrix<T> make_queries(const FeatureMap<T>& x, const ProjectionSet<T>& p, Normalization norm) {
  auto queries = project(x, p.query_weights(), p.query_bias(), p.mode(), "query");
  if (norm == Normalization::GcDoubleSoftmax) return softmax_rows(queries);
  return queries;
}

template <std::floating_point T>
Matrix<T> make_values(const FeatureMap<T>& x, const ProjectionSet<T>& p) {
  return project(x, p.value_weights(), p.value_bias(), p.mode(), "value");
}

namespace {

template <std::floating_point T>
std::vector<T> bias_from_file(const std::filesystem::path& path) {
  const auto m = read_tensor<T>(path);
  return {m.data().begin(), m.data().end()};
}

}  // namespace

template <std::floating_point T>
ProjectionSet<T> load_projection_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot open projection manifest " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed projection manifest: " + std::string(e.what()));
  }
  try {
    const ProjectionShape shape{j.at("C").get<std::size_t>(), j.at("C_q").get<std::size_t>(),
                                j.at("C_N").get<std::size_t>(), j.at("C_M").get<std::size_t>()};
    const auto mode = parse_projection_mode(j.value("mode", std::string("linear")));
    if (!j.contains("files")) {
      return ProjectionSet<T>::random(shape, mode, j.at("seed").get<std::uint64_t>());
    }
    const auto base = manifest.parent_path();
    const auto& files = j.at("files");
    auto opt_bias = [&](const char* key) {
      return files.contains(key) ? bias_from_file<T>(base / files.at(key).get<std::string>()) : std::vector<T>{};
    };
    ProjectionSet<T> p(mode, read_tensor<T>(base / files.at("key").get<std::string>()),
                       read_tensor<T>(base / files.at("query").get<std::string>()),
                       read_tensor<T>(base / files.at("value").get<std::string>()), opt_bias("key_bias"),
                       opt_bias("query_bias"), opt_bias("value_bias"));
    const auto got = p.shape();
    if (got.context_channels != shape.context_channels || got.query_channels != shape.query_channels ||
        got.key_channels != shape.key_channels || got.value_channels != shape.value_channels) {
      throw ShapeError("projection files disagree with the dimensions declared in " + manifest.string());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed projection manifest: " + std::string(e.what()));
  }
}

template <std::floating_point T>
void save_projection_manifest(const std::filesystem::path& manifest, const ProjectionSet<T>& p,
                              std::optional<std::uint64_t> seed) {
  const auto base = manifest.parent_path();
  const auto stem = manifest.stem().string();
  auto as_row = [](const std::vector<T>& b) { return Matrix<T>(1, b.size(), b); };
  nlohmann::json files;
  const std::pair<const char*, Matrix<T>> parts[] = {
      {"key", p.key_weights()},           {"query", p.query_weights()},
      {"value", p.value_weights()},       {"key_bias", as_row(p.key_bias())},
      {"query_bias", as_row(p.query_bias())}, {"value_bias", as_row(p.value_bias())},
  };
  for (const auto& [role, m] : parts) {
    const std::string name = stem + "." + role + ".gct";
    write_tensor(base / name, m);
    files[role] = name;
  }
  const auto shape = p.shape();
  nlohmann::json j = {{"C", shape.context_channels}, {"C_q", shape.query_channels}, {"C_N", shape.key_channels},
                      {"C_M", shape.value_channels}, {"mode", to_string(p.mode())}, {"files", files}};
  if (seed) j["seed"] = *seed;
  std::ofstream out(manifest);
  if (!out) throw ConfigError("cannot write projection manifest " + manifest.string());
  out << j.dump(2) << '\n';
}

#define GCM_INSTANTIATE(T)                                                                                     \
  template class FeatureMap<T>;                                                                                \
  template class ProjectionSet<T>;                                                                             \
  template Matrix<T> make_keys(const FeatureMap<T>&, const ProjectionSet<T>&, Normalization);                 \
  template Matrix<T> make_queries(const FeatureMap<T>&, const ProjectionSet<T>&, Normalization);              \
  template Matrix<T> make_values(const FeatureMap<T>&, const ProjectionSet<T>&);                              \
  template ProjectionSet<T> load_projection_manifest(const std::filesystem::path&);                           \
  template void save_projection_manifest(const std::filesystem::path&, const ProjectionSet<T>&,               \
                                         std::optional<std::uint64_t>);

GCM_INSTANTIATE(float)
GCM_INSTANTIATE(double)

#undef GCM_INSTANTIATE

}  // namespace gcm
