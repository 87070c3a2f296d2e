#include "bgerase/video.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bgerase/errors.hpp"

namespace bgerase {

std::string to_string(const ClipShape& s) {
  std::ostringstream os;
  os << s.frames << "x" << s.height << "x" << s.width << "x" << s.channels;
  return os.str();
}

VideoClip::VideoClip(ClipShape shape, std::vector<float> data, std::string video_id,
                     int start_index, int stride)
    : shape_(shape),
      data_(std::move(data)),
      video_id_(std::move(video_id)),
      start_index_(start_index),
      stride_(stride) {
  if (shape_.frames < 1 || shape_.height < 1 || shape_.width < 1 || shape_.channels < 1) {
    throw InputError("VideoClip: invalid shape " + to_string(shape_));
  }
  if (data_.size() != shape_.size()) {
    throw InputError("VideoClip: data size " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
  if (stride_ < 1) throw InputError("VideoClip: stride must be >= 1");
}

VideoClip::VideoClip(ClipShape shape, std::string video_id)
    : VideoClip(shape, std::vector<float>(shape.size(), 0.0f), std::move(video_id)) {}

std::span<float> VideoClip::frame(int t) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(t) * shape_.frame_size(),
                                         shape_.frame_size());
}

std::span<const float> VideoClip::frame(int t) const {
  return std::span<const float>(data_).subspan(
      static_cast<std::size_t>(t) * shape_.frame_size(), shape_.frame_size());
}

void VideoClip::set_provenance(std::string video_id, int start_index, int stride) {
  video_id_ = std::move(video_id);
  start_index_ = start_index;
  stride_ = stride;
}

bool VideoClip::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

void VideoClip::clamp_unit() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

VideoClip RawVideo::to_clip() const {
  std::vector<float> data(pixels.size());
  std::transform(pixels.begin(), pixels.end(), data.begin(),
                 [](std::uint8_t p) { return static_cast<float>(p) / 255.0f; });
  return VideoClip(shape, std::move(data), id, 0, 1);
}

int valid_start_count(int video_frames, int length, int stride) {
  if (length < 1 || stride < 1) throw InputError("clip length and stride must be >= 1");
  const long need = static_cast<long>(length) * stride;
  if (video_frames < need) return 0;
  return static_cast<int>(video_frames - need + 1);
}

namespace {

void check_window(int video_frames, int start, int length, int stride) {
  const long need = static_cast<long>(length) * stride;
  if (video_frames < need) {
    throw InputError("video too short: clip of " + std::to_string(length) + " frames at stride " +
                     std::to_string(stride) + " requires " + std::to_string(need) +
                     " frames, video has " + std::to_string(video_frames));
  }
  if (start < 0 || start > video_frames - need) {
    throw InputError("clip start " + std::to_string(start) + " outside valid range [0, " +
                     std::to_string(video_frames - need) + "]");
  }
}

template <typename Pixel, typename Convert>
VideoClip gather(const std::string& id, const ClipShape& src, std::span<const Pixel> pixels,
                 int start, int length, int stride, Convert convert) {
  check_window(src.frames, start, length, stride);
  ClipShape shape{length, src.height, src.width, src.channels};
  std::vector<float> out(shape.size());
  const std::size_t fs = src.frame_size();
  for (int i = 0; i < length; ++i) {
    const std::size_t from = static_cast<std::size_t>(start + i * stride) * fs;
    std::transform(pixels.begin() + from, pixels.begin() + from + fs,
                   out.begin() + static_cast<std::size_t>(i) * fs, convert);
  }
  return VideoClip(shape, std::move(out), id, start, stride);
}

int draw_start(int video_frames, int length, int stride, Rng& rng) {
  const int n = valid_start_count(video_frames, length, stride);
  if (n == 0) check_window(video_frames, 0, length, stride);
  return uniform_int(rng, 0, n - 1);
}

}  // namespace

VideoClip sample_clip_at(const RawVideo& video, int start, int length, int stride) {
  return gather<std::uint8_t>(video.id, video.shape, video.pixels, start, length, stride,
                              [](std::uint8_t p) { return static_cast<float>(p) / 255.0f; });
}

VideoClip sample_clip_at(const VideoClip& video, int start, int length, int stride) {
  return gather<float>(video.video_id(), video.shape(), video.data(), start, length, stride,
                       [](float p) { return p; });
}

VideoClip sample_clip(const RawVideo& video, int length, int stride, Rng& rng) {
  return sample_clip_at(video, draw_start(video.shape.frames, length, stride, rng), length,
                        stride);
}

VideoClip sample_clip(const VideoClip& video, int length, int stride, Rng& rng) {
  return sample_clip_at(video, draw_start(video.frames(), length, stride, rng), length, stride);
}

std::vector<int> uniform_clip_starts(int video_frames, int length, int stride, int count) {
  const int n = valid_start_count(video_frames, length, stride);
  if (n == 0) check_window(video_frames, 0, length, stride);
  if (count < 1) throw InputError("clip count must be >= 1");
  std::vector<int> starts(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    starts[i] = count == 1 ? (n - 1) / 2
                           : static_cast<int>(std::lround(static_cast<double>(i) * (n - 1) /
                                                          (count - 1)));
  }
  return starts;
}

CropWindow draw_crop_window(const ClipShape& shape, int out_h, int out_w, Rng& rng) {
  if (out_h < 1 || out_w < 1 || out_h > shape.height || out_w > shape.width) {
    throw InputError("crop " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " does not fit frame " + std::to_string(shape.height) + "x" +
                     std::to_string(shape.width));
  }
  CropWindow w{0, 0, out_h, out_w};
  w.top = uniform_int(rng, 0, shape.height - out_h);
  w.left = uniform_int(rng, 0, shape.width - out_w);
  return w;
}

CropWindow center_crop_window(const ClipShape& shape, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > shape.height || out_w > shape.width) {
    throw InputError("center crop does not fit frame");
  }
  return {(shape.height - out_h) / 2, (shape.width - out_w) / 2, out_h, out_w};
}

VideoClip crop(const VideoClip& clip, const CropWindow& w) {
  const ClipShape& s = clip.shape();
  if (w.top < 0 || w.left < 0 || w.top + w.height > s.height || w.left + w.width > s.width) {
    throw InputError("crop window outside frame");
  }
  ClipShape out_shape{s.frames, w.height, w.width, s.channels};
  std::vector<float> out(out_shape.size());
  const std::size_t row = static_cast<std::size_t>(w.width) * s.channels;
  auto dst = out.begin();
  for (int t = 0; t < s.frames; ++t) {
    for (int y = 0; y < w.height; ++y) {
      const float* src = &clip.data()[((static_cast<std::size_t>(t) * s.height + w.top + y) *
                                           s.width + w.left) * s.channels];
      dst = std::copy(src, src + row, dst);
    }
  }
  return VideoClip(out_shape, std::move(out), clip.video_id(), clip.start_index(),
                   clip.stride());
}

CroppedClip random_spatial_crop(const VideoClip& clip, int out_h, int out_w, Rng& rng) {
  const CropWindow w = draw_crop_window(clip.shape(), out_h, out_w, rng);
  return {crop(clip, w), w};
}

AugmentationSet AugmentationSet::identity() {
  AugmentationSet a;
  a.rotation_max_degrees = 0.0;
  a.brightness = 0.0;
  a.contrast = 0.0;
  a.saturation = 0.0;
  return a;
}

bool AugmentationParams::is_identity() const {
  return rotation_degrees == 0.0 && brightness_shift == 0.0 && contrast_factor == 1.0 &&
         saturation_factor == 1.0;
}

namespace {

// Symmetric draw from the open interval (-m, m); zero magnitude yields exactly 0.
double draw_symmetric(double m, Rng& rng) {
  if (m <= 0.0) return 0.0;
  for (;;) {
    const double v = m * (2.0 * uniform01(rng) - 1.0);
    if (std::abs(v) < m) return v;
  }
}

}  // namespace

AugmentationParams draw_augmentation(const AugmentationSet& aug, Rng& rng) {
  AugmentationParams p;
  if (aug.rotation_enabled) p.rotation_degrees = draw_symmetric(aug.rotation_max_degrees, rng);
  if (aug.color_enabled) {
    p.brightness_shift = draw_symmetric(aug.brightness, rng);
    p.contrast_factor = 1.0 + draw_symmetric(aug.contrast, rng);
    p.saturation_factor = 1.0 + draw_symmetric(aug.saturation, rng);
  }
  return p;
}

void augment_frame(std::span<const float> in, std::span<float> out, int height, int width,
                   int channels, const AugmentationParams& p) {
  if (p.rotation_degrees == 0.0) {
    std::copy(in.begin(), in.end(), out.begin());
  } else {
    // Inverse-map each output pixel; corners outside the source replicate the edge.
    const double theta = p.rotation_degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (height - 1) * 0.5, cx = (width - 1) * 0.5;
    auto px = [&](int y, int x, int c) {
      y = std::clamp(y, 0, height - 1);
      x = std::clamp(x, 0, width - 1);
      return in[(static_cast<std::size_t>(y) * width + x) * channels + c];
    };
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double sy = cs * dy + sn * dx + cy;
        const double sx = -sn * dy + cs * dx + cx;
        const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        for (int c = 0; c < channels; ++c) {
          const double v = (1 - fy) * ((1 - fx) * px(y0, x0, c) + fx * px(y0, x0 + 1, c)) +
                           fy * ((1 - fx) * px(y0 + 1, x0, c) + fx * px(y0 + 1, x0 + 1, c));
          out[(static_cast<std::size_t>(y) * width + x) * channels + c] = static_cast<float>(v);
        }
      }
    }
  }

  const bool color = p.brightness_shift != 0.0 || p.contrast_factor != 1.0 ||
                     p.saturation_factor != 1.0;
  if (!color) return;
  const std::size_t pixels = static_cast<std::size_t>(height) * width;
  for (std::size_t i = 0; i < pixels; ++i) {
    float* v = &out[i * channels];
    for (int c = 0; c < channels; ++c) {
      v[c] = static_cast<float>(v[c] + p.brightness_shift);
      v[c] = static_cast<float>((v[c] - 0.5) * p.contrast_factor + 0.5);
    }
    if (channels == 3 && p.saturation_factor != 1.0) {
      const double gray = 0.299 * v[0] + 0.587 * v[1] + 0.114 * v[2];
      for (int c = 0; c < 3; ++c) {
        v[c] = static_cast<float>(gray + p.saturation_factor * (v[c] - gray));
      }
    }
    for (int c = 0; c < channels; ++c) v[c] = std::clamp(v[c], 0.0f, 1.0f);
  }
}

VideoClip apply_augmentation(const VideoClip& clip, const AugmentationParams& params) {
  if (params.is_identity()) return clip;
  VideoClip out(clip.shape(), std::vector<float>(clip.shape().size()), clip.video_id(),
                clip.start_index(), clip.stride());
  for (int t = 0; t < clip.frames(); ++t) {
    augment_frame(clip.frame(t), out.frame(t), clip.height(), clip.width(), clip.channels(),
                  params);
  }
  return out;
}

AugmentedClip apply_basic_augmentation(const VideoClip& clip, const AugmentationSet& aug,
                                       Rng& rng) {
  const AugmentationParams p = draw_augmentation(aug, rng);
  return {apply_augmentation(clip, p), p};
}

FrameTensor temporal_difference(const VideoClip& clip) {
  if (clip.frames() < 2) {
    throw InputError("temporal difference needs at least 2 frames, clip has " +
                     std::to_string(clip.frames()));
  }
  FrameTensor out;
  out.shape = clip.shape();
  out.shape.frames -= 1;
  out.data.resize(out.shape.size());
  const std::size_t fs = clip.shape().frame_size();
  const auto src = clip.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = src[i + fs] - src[i];
  return out;
}

VideoClip make_static(const VideoClip& clip, int index) {
  if (index < 0 || index >= clip.frames()) throw InputError("static frame index out of range");
  VideoClip out = clip;
  const auto src = clip.frame(index);
  for (int t = 0; t < clip.frames(); ++t) std::copy(src.begin(), src.end(), out.frame(t).begin());
  return out;
}

}  // namespace bgerase
