#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bgerase/random.hpp"
#include "bgerase/video.hpp"

namespace bgerase {

struct Stride3 {
  int t = 1;
  int h = 1;
  int w = 1;
  friend bool operator==(const Stride3&, const Stride3&) = default;
};

/// Channel-first feature volume dimensions: C x T x H x W.
struct FeatureShape {
  int channels = 0;
  int frames = 0;
  int height = 0;
  int width = 0;

  std::size_t spatial() const { return static_cast<std::size_t>(height) * width; }
  std::size_t volume() const { return spatial() * frames; }
  std::size_t size() const { return volume() * channels; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

std::string to_string(const FeatureShape& s);

template <typename T>
struct FeatureMap {
  FeatureShape shape;
  std::vector<T> data;

  FeatureMap() = default;
  explicit FeatureMap(FeatureShape s) : shape(s), data(s.size(), T(0)) {}

  T& at(int c, int t, int y, int x) { return data[index(c, t, y, x)]; }
  T at(int c, int t, int y, int x) const { return data[index(c, t, y, x)]; }
  std::size_t index(int c, int t, int y, int x) const {
    return ((static_cast<std::size_t>(c) * shape.frames + t) * shape.height + y) * shape.width + x;
  }
};

/// Reorders a T x H x W x C clip into a C x T x H x W network input.
template <typename T>
FeatureMap<T> clip_to_input(const VideoClip& clip);

struct EncoderConfig {
  int in_channels = 3;
  std::vector<int> channels{16, 32, 64, 128};
  /// Stride of the first convolution of each stage.
  std::vector<Stride3> strides{{1, 2, 2}, {2, 2, 2}, {2, 2, 2}, {1, 2, 2}};
  int convs_per_stage = 2;
  int norm_groups = 4;
  int embedding_dim = 128;
  bool normalize_embeddings = true;
  /// Output classes of the pretext classifier head; 0 disables the head.
  int classifier_classes = 0;
  /// Expected clip dims; zero entries are not checked.
  int input_frames = 0;
  int input_height = 0;
  int input_width = 0;

  void validate() const;
  int feature_channels() const { return channels.back(); }
  FeatureShape feature_shape(int frames, int height, int width) const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Activations kept by a forward pass for the backward pass.
template <typename T>
struct ConvBlockCache {
  FeatureShape in_shape;
  FeatureShape out_shape;
  std::vector<T> normalized;  ///< group-normalized conv output
  std::vector<T> inv_std;     ///< one per group
  std::vector<T> output;      ///< after ReLU
};

template <typename T>
struct EncoderTape {
  FeatureMap<T> input;
  std::vector<ConvBlockCache<T>> blocks;
};

/// Spatial global max pooling, C x T' x H' x W' -> C x T'.
template <typename T>
struct PooledTemporal {
  int channels = 0;
  int frames = 0;
  std::vector<T> values;
  std::vector<std::size_t> argmax;  ///< flat feature index of each max

  T at(int c, int t) const { return values[static_cast<std::size_t>(c) * frames + t]; }
};

template <typename T>
PooledTemporal<T> pool_psi(const FeatureMap<T>& f);

/// Routes a C x T' gradient back onto the max locations.
template <typename T>
FeatureMap<T> pool_psi_backward(const FeatureShape& shape, const PooledTemporal<T>& pooled,
                                std::span<const T> grad);

/// Global max over (t, h, w).
template <typename T>
struct GlobalPooled {
  std::vector<T> values;
  std::vector<std::size_t> argmax;
};

template <typename T>
GlobalPooled<T> global_max_pool(const FeatureMap<T>& f);

/// Output of the projection head: pooled C vector, raw D vector, embedding.
template <typename T>
struct Projection {
  GlobalPooled<T> pooled;
  std::vector<T> raw;
  T norm = T(0);
  std::vector<T> embedding;  ///< raw / ||raw|| when normalized, raw otherwise
  bool normalized = true;
};

template <typename T>
struct Classification {
  GlobalPooled<T> pooled;
  std::vector<T> logits;
};

/// The 3D convolutional backbone together with its projection and classifier heads.
///
/// Each stage is (conv3x3x3 - GroupNorm - ReLU) x convs_per_stage with the
/// stage stride on its first convolution. All parameters live in one flat
/// vector; `layout()` names the slices.
template <typename T>
class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }
  const std::vector<ParamInfo>& layout() const noexcept { return layout_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<T> parameters() noexcept { return params_; }
  std::span<const T> parameters() const noexcept { return params_; }

  /// He-normal convolutions, unit GroupNorm scale, small uniform heads.
  void initialize(Rng& rng);

  template <typename U>
  Encoder<U> cast() const {
    Encoder<U> out(config_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return out;
  }

  FeatureShape feature_shape(const FeatureShape& input) const;
  void check_input(const ClipShape& clip) const;

  FeatureMap<T> forward(const FeatureMap<T>& input, EncoderTape<T>* tape = nullptr) const;
  FeatureMap<T> forward(const VideoClip& clip, EncoderTape<T>* tape = nullptr) const;

  /// Accumulates dL/dtheta into `grad_params`; fills `grad_input` when given.
  void backward(const EncoderTape<T>& tape, const FeatureMap<T>& grad_features,
                std::span<T> grad_params, FeatureMap<T>* grad_input = nullptr) const;

  Projection<T> project(const FeatureMap<T>& features) const;
  /// Gradient of the projection w.r.t. its feature map, given dL/d embedding.
  FeatureMap<T> project_backward(const FeatureShape& shape, const Projection<T>& p,
                                 std::span<const T> grad_embedding,
                                 std::span<T> grad_params) const;

  Classification<T> classify(const FeatureMap<T>& features) const;
  FeatureMap<T> classify_backward(const FeatureShape& shape, const Classification<T>& c,
                                  std::span<const T> grad_logits,
                                  std::span<T> grad_params) const;

  const ParamInfo& param(const std::string& name) const;

 private:
  struct ConvSpec {
    int in_channels;
    int out_channels;
    Stride3 stride;
    std::size_t weight, gamma, beta;  // offsets into params_
  };

  EncoderConfig config_;
  std::vector<ParamInfo> layout_;
  std::vector<ConvSpec> convs_;
  std::size_t proj_weight_ = 0, proj_bias_ = 0;
  std::size_t cls_weight_ = 0, cls_bias_ = 0;
  std::vector<T> params_;
};

/// theta_bar <- m * theta_bar + (1 - m) * theta.
template <typename T>
void momentum_update(const Encoder<T>& online, Encoder<T>& momentum, double m);

/// Feature maps for each clip of a batch; samples never interact.
template <typename T>
std::vector<FeatureMap<T>> encode(const Encoder<T>& encoder, std::span<const VideoClip> clips);

}  // namespace bgerase
