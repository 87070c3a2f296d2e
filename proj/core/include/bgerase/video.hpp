#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bgerase/random.hpp"

namespace bgerase {

/// Dimensions of a frame block laid out T x H x W x C, row-major.
struct ClipShape {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  std::size_t size() const { return frame_size() * frames; }
  bool same_frame_dims(const ClipShape& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const ClipShape&, const ClipShape&) = default;
};

std::string to_string(const ClipShape& s);

/// Unconstrained real tensor over T x H x W x C (e.g. temporal differences).
struct FrameTensor {
  ClipShape shape;
  std::vector<float> data;

  float at(int t, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(t) * shape.height + y) * shape.width + x) *
                    shape.channels + c];
  }
};

/// A block of frames with pixel values in [0,1] plus provenance.
class VideoClip {
 public:
  VideoClip() = default;
  VideoClip(ClipShape shape, std::vector<float> data, std::string video_id = {},
            int start_index = 0, int stride = 1);
  /// Zero-filled clip.
  explicit VideoClip(ClipShape shape, std::string video_id = {});

  const ClipShape& shape() const noexcept { return shape_; }
  int frames() const noexcept { return shape_.frames; }
  int height() const noexcept { return shape_.height; }
  int width() const noexcept { return shape_.width; }
  int channels() const noexcept { return shape_.channels; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<float> frame(int t);
  std::span<const float> frame(int t) const;

  float& at(int t, int y, int x, int c) {
    return data_[index(t, y, x, c)];
  }
  float at(int t, int y, int x, int c) const { return data_[index(t, y, x, c)]; }

  const std::string& video_id() const noexcept { return video_id_; }
  int start_index() const noexcept { return start_index_; }
  int stride() const noexcept { return stride_; }
  void set_provenance(std::string video_id, int start_index, int stride);

  /// True when every value lies in [0,1].
  bool in_unit_range() const;
  /// Clamp every value into [0,1] in place.
  void clamp_unit();

 private:
  std::size_t index(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * shape_.height + y) * shape_.width + x) *
               shape_.channels + c;
  }

  ClipShape shape_;
  std::vector<float> data_;
  std::string video_id_;
  int start_index_ = 0;
  int stride_ = 1;
};

/// A whole decoded video in its 8-bit storage form.
struct RawVideo {
  std::string id;
  ClipShape shape;
  std::vector<std::uint8_t> pixels;

  /// All frames as a [0,1] clip (start 0, stride 1).
  VideoClip to_clip() const;
};

/// Number of legal window starts for a clip of `length` frames at `stride`.
int valid_start_count(int video_frames, int length, int stride);

VideoClip sample_clip_at(const RawVideo& video, int start, int length, int stride);
VideoClip sample_clip_at(const VideoClip& video, int start, int length, int stride);

/// Draws the window start uniformly among valid starts.
VideoClip sample_clip(const RawVideo& video, int length, int stride, Rng& rng);
VideoClip sample_clip(const VideoClip& video, int length, int stride, Rng& rng);

/// `count` starts evenly spread over the valid range (first and last included).
std::vector<int> uniform_clip_starts(int video_frames, int length, int stride, int count);

struct CropWindow {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

CropWindow draw_crop_window(const ClipShape& shape, int out_h, int out_w, Rng& rng);
CropWindow center_crop_window(const ClipShape& shape, int out_h, int out_w);
VideoClip crop(const VideoClip& clip, const CropWindow& window);

struct CroppedClip {
  VideoClip clip;
  CropWindow window;
};

/// One crop window for the whole clip.
CroppedClip random_spatial_crop(const VideoClip& clip, int out_h, int out_w, Rng& rng);

/// The basic augmentation set: small rotation plus color jitter.
struct AugmentationSet {
  double rotation_max_degrees = 10.0;
  double brightness = 0.2;   ///< additive shift drawn from (-b, b)
  double contrast = 0.2;     ///< factor drawn from (1-c, 1+c), pivot 0.5
  double saturation = 0.2;   ///< factor drawn from (1-s, 1+s), pivot per-pixel gray
  bool rotation_enabled = true;
  bool color_enabled = true;

  static AugmentationSet identity();
};

/// Concrete parameters drawn once per clip.
struct AugmentationParams {
  double rotation_degrees = 0.0;
  double brightness_shift = 0.0;
  double contrast_factor = 1.0;
  double saturation_factor = 1.0;

  bool is_identity() const;
};

AugmentationParams draw_augmentation(const AugmentationSet& aug, Rng& rng);

/// Transforms one H x W x C frame; `out` must not alias `in`.
void augment_frame(std::span<const float> in, std::span<float> out, int height, int width,
                   int channels, const AugmentationParams& params);

VideoClip apply_augmentation(const VideoClip& clip, const AugmentationParams& params);

struct AugmentedClip {
  VideoClip clip;
  AugmentationParams params;
};

AugmentedClip apply_basic_augmentation(const VideoClip& clip, const AugmentationSet& aug,
                                       Rng& rng);

/// out[t] = frames[t+1] - frames[t].
FrameTensor temporal_difference(const VideoClip& clip);

/// Repeat frame `index` across all frames.
VideoClip make_static(const VideoClip& clip, int index);

}  // namespace bgerase
