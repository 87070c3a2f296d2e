#include "bgerase/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "bgerase/errors.hpp"

namespace bgerase {

std::string to_string(const FeatureShape& s) {
  std::ostringstream os;
  os << s.channels << "x" << s.frames << "x" << s.height << "x" << s.width;
  return os.str();
}

template <typename T>
FeatureMap<T> clip_to_input(const VideoClip& clip) {
  const ClipShape& s = clip.shape();
  FeatureMap<T> out(FeatureShape{s.channels, s.frames, s.height, s.width});
  const auto src = clip.data();
  const std::size_t vol = out.shape.volume();
  for (std::size_t p = 0; p < vol; ++p) {
    for (int c = 0; c < s.channels; ++c) {
      out.data[static_cast<std::size_t>(c) * vol + p] = static_cast<T>(src[p * s.channels + c]);
    }
  }
  return out;
}

namespace {

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel * kKernel;
constexpr double kNormEps = 1e-5;

int out_extent(int in, int stride) { return (in - 1) / stride + 1; }

int effective_groups(int channels, int requested) {
  int g = std::clamp(requested, 1, channels);
  while (channels % g != 0) --g;
  return g;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column matrix of shape (Cin * 27) x (To * Ho * Wo) for a padding-1 3x3x3 convolution.
template <typename T>
void im2col(const T* x, const FeatureShape& in, const FeatureShape& out, const Stride3& s,
            T* col) {
  const std::size_t P = out.volume();
  for (int ci = 0; ci < in.channels; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * in.volume();
    for (int kt = 0; kt < kKernel; ++kt) {
      for (int kh = 0; kh < kKernel; ++kh) {
        for (int kw = 0; kw < kKernel; ++kw) {
          T* dst = col + (static_cast<std::size_t>(ci) * kTaps + (kt * kKernel + kh) * kKernel + kw) * P;
          for (int to = 0; to < out.frames; ++to) {
            const int ti = to * s.t + kt - 1;
            for (int ho = 0; ho < out.height; ++ho) {
              const int hi = ho * s.h + kh - 1;
              T* row = dst + (static_cast<std::size_t>(to) * out.height + ho) * out.width;
              if (ti < 0 || ti >= in.frames || hi < 0 || hi >= in.height) {
                std::fill(row, row + out.width, T(0));
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(ti) * in.height + hi) * in.width;
              for (int wo = 0; wo < out.width; ++wo) {
                const int wi = wo * s.w + kw - 1;
                row[wo] = (wi >= 0 && wi < in.width) ? src[wi] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const FeatureShape& in, const FeatureShape& out, const Stride3& s,
            T* dx) {
  const std::size_t P = out.volume();
  for (int ci = 0; ci < in.channels; ++ci) {
    T* xc = dx + static_cast<std::size_t>(ci) * in.volume();
    for (int kt = 0; kt < kKernel; ++kt) {
      for (int kh = 0; kh < kKernel; ++kh) {
        for (int kw = 0; kw < kKernel; ++kw) {
          const T* src =
              col + (static_cast<std::size_t>(ci) * kTaps + (kt * kKernel + kh) * kKernel + kw) * P;
          for (int to = 0; to < out.frames; ++to) {
            const int ti = to * s.t + kt - 1;
            if (ti < 0 || ti >= in.frames) continue;
            for (int ho = 0; ho < out.height; ++ho) {
              const int hi = ho * s.h + kh - 1;
              if (hi < 0 || hi >= in.height) continue;
              const T* row = src + (static_cast<std::size_t>(to) * out.height + ho) * out.width;
              T* dst = xc + (static_cast<std::size_t>(ti) * in.height + hi) * in.width;
              for (int wo = 0; wo < out.width; ++wo) {
                const int wi = wo * s.w + kw - 1;
                if (wi >= 0 && wi < in.width) dst[wi] += row[wo];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[3];
  return buffers[slot];
}

}  // namespace

void EncoderConfig::validate() const {
  if (in_channels < 1) throw ConfigError("encoder in_channels must be positive");
  if (channels.empty()) throw ConfigError("encoder needs at least one stage");
  if (strides.size() != channels.size()) {
    throw ConfigError("encoder strides (" + std::to_string(strides.size()) +
                      ") must match stages (" + std::to_string(channels.size()) + ")");
  }
  for (int c : channels) {
    if (c < 1) throw ConfigError("encoder channel counts must be positive");
  }
  for (const auto& s : strides) {
    if (s.t < 1 || s.h < 1 || s.w < 1) throw ConfigError("encoder strides must be positive");
  }
  if (convs_per_stage < 1) throw ConfigError("convs_per_stage must be >= 1");
  if (norm_groups < 1) throw ConfigError("norm_groups must be >= 1");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (classifier_classes < 0) throw ConfigError("classifier_classes must be >= 0");
}

FeatureShape EncoderConfig::feature_shape(int frames, int height, int width) const {
  FeatureShape s{in_channels, frames, height, width};
  for (std::size_t i = 0; i < channels.size(); ++i) {
    s = {channels[i], out_extent(s.frames, strides[i].t), out_extent(s.height, strides[i].h),
         out_extent(s.width, strides[i].w)};
  }
  return s;
}

template <typename T>
Encoder<T>::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    layout_.push_back({std::move(name), std::move(shape), offset, n});
    offset += n;
    return layout_.back().offset;
  };
  int in = config_.in_channels;
  for (std::size_t s = 0; s < config_.channels.size(); ++s) {
    const int out = config_.channels[s];
    for (int k = 0; k < config_.convs_per_stage; ++k) {
      const std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(k);
      ConvSpec spec{};
      spec.in_channels = in;
      spec.out_channels = out;
      spec.stride = k == 0 ? config_.strides[s] : Stride3{};
      spec.weight = add(prefix + ".conv.weight", {out, in, kKernel, kKernel, kKernel});
      spec.gamma = add(prefix + ".norm.gamma", {out});
      spec.beta = add(prefix + ".norm.beta", {out});
      convs_.push_back(spec);
      in = out;
    }
  }
  const int C = config_.feature_channels();
  proj_weight_ = add("proj.weight", {config_.embedding_dim, C});
  proj_bias_ = add("proj.bias", {config_.embedding_dim});
  if (config_.classifier_classes > 0) {
    cls_weight_ = add("cls.weight", {config_.classifier_classes, C});
    cls_bias_ = add("cls.bias", {config_.classifier_classes});
  }
  params_.assign(offset, T(0));
  for (const auto& c : convs_) std::fill_n(params_.begin() + c.gamma, c.out_channels, T(1));
}

template <typename T>
void Encoder<T>::initialize(Rng& rng) {
  for (const auto& c : convs_) {
    const double fan_in = static_cast<double>(c.in_channels) * kTaps;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    const std::size_t n = static_cast<std::size_t>(c.out_channels) * c.in_channels * kTaps;
    for (std::size_t i = 0; i < n; ++i) params_[c.weight + i] = static_cast<T>(normal(rng));
    std::fill_n(params_.begin() + c.gamma, c.out_channels, T(1));
    std::fill_n(params_.begin() + c.beta, c.out_channels, T(0));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.feature_channels()));
  std::uniform_real_distribution<double> uni(-bound, bound);
  auto fill = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = static_cast<T>(uni(rng));
  };
  const std::size_t C = config_.feature_channels();
  fill(proj_weight_, C * config_.embedding_dim);
  fill(proj_bias_, config_.embedding_dim);
  if (config_.classifier_classes > 0) {
    fill(cls_weight_, C * config_.classifier_classes);
    fill(cls_bias_, config_.classifier_classes);
  }
}

template <typename T>
const ParamInfo& Encoder<T>::param(const std::string& name) const {
  for (const auto& p : layout_) {
    if (p.name == name) return p;
  }
  throw InputError("no parameter named '" + name + "'");
}

template <typename T>
FeatureShape Encoder<T>::feature_shape(const FeatureShape& input) const {
  return config_.feature_shape(input.frames, input.height, input.width);
}

template <typename T>
void Encoder<T>::check_input(const ClipShape& clip) const {
  const bool bad = clip.channels != config_.in_channels ||
                   (config_.input_frames > 0 && clip.frames != config_.input_frames) ||
                   (config_.input_height > 0 && clip.height != config_.input_height) ||
                   (config_.input_width > 0 && clip.width != config_.input_width);
  if (bad) {
    throw InputError("encoder input " + to_string(clip) + " does not match configured " +
                     std::to_string(config_.input_frames) + "x" +
                     std::to_string(config_.input_height) + "x" +
                     std::to_string(config_.input_width) + "x" +
                     std::to_string(config_.in_channels));
  }
}

template <typename T>
FeatureMap<T> Encoder<T>::forward(const VideoClip& clip, EncoderTape<T>* tape) const {
  check_input(clip.shape());
  return forward(clip_to_input<T>(clip), tape);
}

template <typename T>
FeatureMap<T> Encoder<T>::forward(const FeatureMap<T>& input, EncoderTape<T>* tape) const {
  if (input.shape.channels != config_.in_channels) {
    throw InputError("encoder expects " + std::to_string(config_.in_channels) +
                     " input channels, got feature " + to_string(input.shape));
  }
  if (tape) {
    tape->input = input;
    tape->blocks.assign(convs_.size(), {});
  }
  FeatureMap<T> x = input;
  std::vector<T>& col = scratch<T>(0);
  for (std::size_t b = 0; b < convs_.size(); ++b) {
    const ConvSpec& cv = convs_[b];
    const FeatureShape in = x.shape;
    const FeatureShape out{cv.out_channels, out_extent(in.frames, cv.stride.t),
                           out_extent(in.height, cv.stride.h), out_extent(in.width, cv.stride.w)};
    const std::size_t K = static_cast<std::size_t>(cv.in_channels) * kTaps;
    const std::size_t P = out.volume();
    col.resize(K * P);
    im2col(x.data.data(), in, out, cv.stride, col.data());

    FeatureMap<T> y(out);
    Eigen::Map<const RowMat<T>> W(params_.data() + cv.weight, cv.out_channels, K);
    Eigen::Map<const RowMat<T>> C(col.data(), K, P);
    Eigen::Map<RowMat<T>> Y(y.data.data(), cv.out_channels, P);
    Y.noalias() = W * C;

    const int groups = effective_groups(cv.out_channels, config_.norm_groups);
    const std::size_t group_len = y.data.size() / groups;
    const std::size_t per_channel = P;
    std::vector<T> inv_std(groups);
    for (int g = 0; g < groups; ++g) {
      T* v = y.data.data() + g * group_len;
      double mean = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) mean += v[i];
      mean /= static_cast<double>(group_len);
      double var = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) {
        const double d = v[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(group_len);
      const double is = 1.0 / std::sqrt(var + kNormEps);
      inv_std[g] = static_cast<T>(is);
      for (std::size_t i = 0; i < group_len; ++i) v[i] = static_cast<T>((v[i] - mean) * is);
    }
    if (tape) {
      auto& cache = tape->blocks[b];
      cache.in_shape = in;
      cache.out_shape = out;
      cache.normalized = y.data;
      cache.inv_std = inv_std;
    }
    for (int c = 0; c < cv.out_channels; ++c) {
      const T gamma = params_[cv.gamma + c], beta = params_[cv.beta + c];
      T* v = y.data.data() + c * per_channel;
      for (std::size_t i = 0; i < per_channel; ++i) {
        const T a = gamma * v[i] + beta;
        v[i] = a > T(0) ? a : T(0);
      }
    }
    if (tape) tape->blocks[b].output = y.data;
    x = std::move(y);
  }
  return x;
}

template <typename T>
void Encoder<T>::backward(const EncoderTape<T>& tape, const FeatureMap<T>& grad_features,
                          std::span<T> grad_params, FeatureMap<T>* grad_input) const {
  if (tape.blocks.size() != convs_.size()) throw InputError("encoder tape is empty");
  if (grad_params.size() != params_.size()) {
    throw InputError("gradient buffer size does not match parameter count");
  }
  std::vector<T> grad = grad_features.data;
  std::vector<T>& col = scratch<T>(0);
  std::vector<T>& dcol = scratch<T>(1);
  for (std::size_t bi = convs_.size(); bi-- > 0;) {
    const ConvSpec& cv = convs_[bi];
    const ConvBlockCache<T>& cache = tape.blocks[bi];
    const std::size_t P = cache.out_shape.volume();
    if (grad.size() != cache.output.size()) throw InputError("feature gradient shape mismatch");

    // ReLU and GroupNorm affine.
    for (int c = 0; c < cv.out_channels; ++c) {
      const T gamma = params_[cv.gamma + c];
      T dgamma = 0, dbeta = 0;
      for (std::size_t i = c * P; i < (c + 1) * P; ++i) {
        if (!(cache.output[i] > T(0))) grad[i] = T(0);
        dgamma += grad[i] * cache.normalized[i];
        dbeta += grad[i];
        grad[i] *= gamma;
      }
      grad_params[cv.gamma + c] += dgamma;
      grad_params[cv.beta + c] += dbeta;
    }
    // GroupNorm normalization.
    const int groups = effective_groups(cv.out_channels, config_.norm_groups);
    const std::size_t group_len = grad.size() / groups;
    for (int g = 0; g < groups; ++g) {
      T* d = grad.data() + g * group_len;
      const T* xh = cache.normalized.data() + g * group_len;
      double sum = 0.0, dot = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) {
        sum += d[i];
        dot += static_cast<double>(d[i]) * xh[i];
      }
      const double n = static_cast<double>(group_len);
      const double is = cache.inv_std[g];
      for (std::size_t i = 0; i < group_len; ++i) {
        d[i] = static_cast<T>(is * (d[i] - sum / n - xh[i] * dot / n));
      }
    }
    // Convolution.
    const FeatureShape in = cache.in_shape;
    const T* x = bi == 0 ? tape.input.data.data() : tape.blocks[bi - 1].output.data();
    const std::size_t K = static_cast<std::size_t>(cv.in_channels) * kTaps;
    col.resize(K * P);
    im2col(x, in, cache.out_shape, cv.stride, col.data());
    Eigen::Map<const RowMat<T>> dY(grad.data(), cv.out_channels, P);
    Eigen::Map<const RowMat<T>> C(col.data(), K, P);
    Eigen::Map<RowMat<T>> dW(grad_params.data() + cv.weight, cv.out_channels, K);
    dW.noalias() += dY * C.transpose();

    if (bi == 0 && grad_input == nullptr) break;
    Eigen::Map<const RowMat<T>> W(params_.data() + cv.weight, cv.out_channels, K);
    dcol.resize(K * P);
    Eigen::Map<RowMat<T>> dC(dcol.data(), K, P);
    dC.noalias() = W.transpose() * dY;
    std::vector<T> dx(in.size(), T(0));
    col2im(dcol.data(), in, cache.out_shape, cv.stride, dx.data());
    grad = std::move(dx);
  }
  if (grad_input) {
    grad_input->shape = tape.input.shape;
    grad_input->data = std::move(grad);
  }
}

template <typename T>
GlobalPooled<T> global_max_pool(const FeatureMap<T>& f) {
  GlobalPooled<T> out;
  const std::size_t vol = f.shape.volume();
  out.values.resize(f.shape.channels);
  out.argmax.resize(f.shape.channels);
  for (int c = 0; c < f.shape.channels; ++c) {
    const auto begin = f.data.begin() + static_cast<std::ptrdiff_t>(c * vol);
    const auto it = std::max_element(begin, begin + static_cast<std::ptrdiff_t>(vol));
    out.values[c] = *it;
    out.argmax[c] = static_cast<std::size_t>(it - f.data.begin());
  }
  return out;
}

template <typename T>
PooledTemporal<T> pool_psi(const FeatureMap<T>& f) {
  PooledTemporal<T> out;
  out.channels = f.shape.channels;
  out.frames = f.shape.frames;
  const std::size_t n = static_cast<std::size_t>(out.channels) * out.frames;
  const std::size_t sp = f.shape.spatial();
  if (sp == 0) throw InputError("pool_psi: empty spatial extent");
  out.values.resize(n);
  out.argmax.resize(n);
  for (std::size_t ct = 0; ct < n; ++ct) {
    const auto begin = f.data.begin() + static_cast<std::ptrdiff_t>(ct * sp);
    const auto it = std::max_element(begin, begin + static_cast<std::ptrdiff_t>(sp));
    out.values[ct] = *it;
    out.argmax[ct] = static_cast<std::size_t>(it - f.data.begin());
  }
  return out;
}

template <typename T>
FeatureMap<T> pool_psi_backward(const FeatureShape& shape, const PooledTemporal<T>& pooled,
                                std::span<const T> grad) {
  if (grad.size() != pooled.values.size()) throw InputError("pool_psi gradient size mismatch");
  FeatureMap<T> out(shape);
  for (std::size_t i = 0; i < grad.size(); ++i) out.data[pooled.argmax[i]] += grad[i];
  return out;
}

template <typename T>
Projection<T> Encoder<T>::project(const FeatureMap<T>& features) const {
  if (features.shape.channels != config_.feature_channels()) {
    throw InputError("projection expects " + std::to_string(config_.feature_channels()) +
                     " channels, got " + to_string(features.shape));
  }
  Projection<T> p;
  p.pooled = global_max_pool(features);
  const int C = config_.feature_channels(), D = config_.embedding_dim;
  Eigen::Map<const RowMat<T>> W(params_.data() + proj_weight_, D, C);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params_.data() + proj_bias_, D);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> x(p.pooled.values.data(), C);
  p.raw.resize(D);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> raw(p.raw.data(), D);
  raw.noalias() = W * x + b;
  p.normalized = config_.normalize_embeddings;
  double ss = 0.0;
  for (T v : p.raw) ss += static_cast<double>(v) * v;
  p.norm = static_cast<T>(std::sqrt(ss));
  p.embedding = p.raw;
  if (p.normalized) {
    const T denom = std::max(p.norm, T(1e-12));
    for (T& v : p.embedding) v /= denom;
  }
  return p;
}

template <typename T>
FeatureMap<T> Encoder<T>::project_backward(const FeatureShape& shape, const Projection<T>& p,
                                           std::span<const T> grad_embedding,
                                           std::span<T> grad_params) const {
  const int C = config_.feature_channels(), D = config_.embedding_dim;
  if (grad_embedding.size() != static_cast<std::size_t>(D)) {
    throw InputError("embedding gradient has wrong dimension");
  }
  std::vector<T> draw(grad_embedding.begin(), grad_embedding.end());
  if (p.normalized) {
    const T denom = std::max(p.norm, T(1e-12));
    T dot = 0;
    for (int i = 0; i < D; ++i) dot += p.embedding[i] * grad_embedding[i];
    for (int i = 0; i < D; ++i) draw[i] = (grad_embedding[i] - p.embedding[i] * dot) / denom;
  }
  for (int d = 0; d < D; ++d) {
    grad_params[proj_bias_ + d] += draw[d];
    T* row = grad_params.data() + proj_weight_ + static_cast<std::size_t>(d) * C;
    for (int c = 0; c < C; ++c) row[c] += draw[d] * p.pooled.values[c];
  }
  FeatureMap<T> out(shape);
  for (int c = 0; c < C; ++c) {
    T g = 0;
    for (int d = 0; d < D; ++d) g += params_[proj_weight_ + static_cast<std::size_t>(d) * C + c] * draw[d];
    out.data[p.pooled.argmax[c]] += g;
  }
  return out;
}

template <typename T>
Classification<T> Encoder<T>::classify(const FeatureMap<T>& features) const {
  const int M = config_.classifier_classes, C = config_.feature_channels();
  if (M == 0) throw ConfigError("encoder has no classifier head");
  if (features.shape.channels != C) throw InputError("classifier feature channel mismatch");
  Classification<T> out;
  out.pooled = global_max_pool(features);
  out.logits.resize(M);
  for (int m = 0; m < M; ++m) {
    T acc = params_[cls_bias_ + m];
    for (int c = 0; c < C; ++c) {
      acc += params_[cls_weight_ + static_cast<std::size_t>(m) * C + c] * out.pooled.values[c];
    }
    out.logits[m] = acc;
  }
  return out;
}

template <typename T>
FeatureMap<T> Encoder<T>::classify_backward(const FeatureShape& shape,
                                            const Classification<T>& cl,
                                            std::span<const T> grad_logits,
                                            std::span<T> grad_params) const {
  const int M = config_.classifier_classes, C = config_.feature_channels();
  if (grad_logits.size() != static_cast<std::size_t>(M)) throw InputError("logit gradient size");
  FeatureMap<T> out(shape);
  for (int m = 0; m < M; ++m) {
    grad_params[cls_bias_ + m] += grad_logits[m];
    for (int c = 0; c < C; ++c) {
      grad_params[cls_weight_ + static_cast<std::size_t>(m) * C + c] +=
          grad_logits[m] * cl.pooled.values[c];
    }
  }
  for (int c = 0; c < C; ++c) {
    T g = 0;
    for (int m = 0; m < M; ++m) {
      g += params_[cls_weight_ + static_cast<std::size_t>(m) * C + c] * grad_logits[m];
    }
    out.data[cl.pooled.argmax[c]] += g;
  }
  return out;
}

template <typename T>
void momentum_update(const Encoder<T>& online, Encoder<T>& momentum, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  const auto& a = online.layout();
  const auto& b = momentum.layout();
  bool congruent = a.size() == b.size() && online.parameter_count() == momentum.parameter_count();
  for (std::size_t i = 0; congruent && i < a.size(); ++i) {
    congruent = a[i].name == b[i].name && a[i].shape == b[i].shape;
  }
  if (!congruent) throw InputError("momentum_update: parameter trees are not congruent");
  const auto src = online.parameters();
  auto dst = momentum.parameters();
  const T keep = static_cast<T>(m), take = static_cast<T>(1.0 - m);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + take * src[i];
}

template <typename T>
std::vector<FeatureMap<T>> encode(const Encoder<T>& encoder, std::span<const VideoClip> clips) {
  std::vector<FeatureMap<T>> out;
  out.reserve(clips.size());
  for (const auto& clip : clips) out.push_back(encoder.forward(clip));
  return out;
}

#define BGERASE_INSTANTIATE(T)                                                             \
  template FeatureMap<T> clip_to_input<T>(const VideoClip&);                               \
  template class Encoder<T>;                                                               \
  template GlobalPooled<T> global_max_pool<T>(const FeatureMap<T>&);                       \
  template PooledTemporal<T> pool_psi<T>(const FeatureMap<T>&);                            \
  template FeatureMap<T> pool_psi_backward<T>(const FeatureShape&, const PooledTemporal<T>&, \
                                              std::span<const T>);                         \
  template void momentum_update<T>(const Encoder<T>&, Encoder<T>&, double);                \
  template std::vector<FeatureMap<T>> encode<T>(const Encoder<T>&, std::span<const VideoClip>);

BGERASE_INSTANTIATE(float)
BGERASE_INSTANTIATE(double)

#undef BGERASE_INSTANTIATE

}  // namespace bgerase
