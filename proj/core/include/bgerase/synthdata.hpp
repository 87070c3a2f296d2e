#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bgerase/random.hpp"
#include "bgerase/video.hpp"

namespace bgerase {

inline constexpr std::uint32_t kBevdVersion = 1;
inline constexpr std::uint32_t kManifestVersion = 1;

enum class Split { train, test_inbias, test_antibias, test_actor, test_static };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);
const std::vector<Split>& all_splits();

enum class MotionProgram {
  translate_left,
  translate_right,
  translate_up,
  translate_down,
  orbit_clockwise,
  orbit_counterclockwise,
  oscillate,
  expand_contract,
};

std::string_view motion_name(MotionProgram m);
/// Class label c executes program c mod 8.
MotionProgram motion_for_class(int class_label);

struct DatasetConfig {
  int num_classes = 8;
  int videos_per_class = 100;
  int test_videos_per_class = 25;
  double bias_rho = 0.9;
  int frames = 32;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
  /// Maximum background drift in pixels per frame (camera pan).
  double camera_pan = 0.5;
  /// Per-pixel sensor noise standard deviation.
  double noise_sigma = 0.01;
  /// Sprite radius range as a fraction of min(H, W).
  double sprite_scale_lo = 0.10;
  double sprite_scale_hi = 0.16;
  /// Translation speed range as a fraction of the frame width per frame.
  double speed_lo = 0.012;
  double speed_hi = 0.025;
  /// Relative speed modulation within a video, in [0, 1): speed(t) = v (1 + tempo cos(w t + phi)).
  double tempo = 0.0;
  /// When false every actor is the same white disk, so only motion separates classes.
  bool actor_variety = true;
  /// HSV saturation of backgrounds; their hue encodes the background id.
  double background_saturation = 0.45;
  int threads = 0;  ///< 0: hardware concurrency

  void validate() const;
  int videos_in_split(Split s) const;
};

struct VideoRecord {
  std::string id;
  int class_label = 0;
  int background_id = -1;  ///< -1 for the plain actor background
  Split split = Split::train;
  std::string path;         ///< relative to the manifest directory
  std::uint64_t seed = 0;
  int index = 0;            ///< global record index
  int static_frame = -1;    ///< frame repeated in test_static videos
};

struct SyntheticDatasetManifest {
  std::uint32_t version = kManifestVersion;
  DatasetConfig config;
  std::vector<VideoRecord> records;

  std::vector<const VideoRecord*> split_records(Split s) const;
  const VideoRecord& record(std::string_view id) const;
  ClipShape video_shape() const;
};

/// Sprite appearance and trajectory parameters; independent of the background.
struct SpriteRecipe {
  int shape = 0;  ///< 0 square, 1 disk, 2 diamond, 3 ring
  float color[3] = {1.0f, 1.0f, 1.0f};
  double radius = 4.0;
  double x0 = 0.0, y0 = 0.0;
  double speed = 1.0;    ///< px/frame for translations, rad/frame otherwise
  double amplitude = 0;  ///< orbit radius / oscillation amplitude / size swing
  double phase = 0.0;
  double tempo_phase = 0.0;
};

struct BackgroundRecipe {
  double phase_x = 0.0, phase_y = 0.0;
  double pan_x = 0.0, pan_y = 0.0;  ///< px/frame
};

struct VideoRecipe {
  VideoRecord record;
  SpriteRecipe sprite;
  BackgroundRecipe background;
};

VideoRecipe make_recipe(const DatasetConfig& cfg, int index, int class_label, Split split);

struct RenderedVideo {
  RawVideo video;
  std::vector<std::uint8_t> sprite_mask;  ///< T x H x W, 1 where the sprite is drawn
};

/// Deterministic rendering; `background_override` swaps the scene only.
RenderedVideo render_video(const DatasetConfig& cfg, const VideoRecipe& recipe,
                           std::optional<int> background_override = std::nullopt);

/// Renders every split, writes BEVD files and manifest.json under `out_dir`.
SyntheticDatasetManifest generate_dataset(const DatasetConfig& cfg,
                                          const std::filesystem::path& out_dir);

// -- on-disk format ---------------------------------------------------------

void write_bevd(const std::filesystem::path& path, const RawVideo& video);
RawVideo read_bevd(const std::filesystem::path& path);

std::string manifest_to_json(const SyntheticDatasetManifest& m);
SyntheticDatasetManifest manifest_from_json(std::string_view text);
void write_manifest(const std::filesystem::path& path, const SyntheticDatasetManifest& m);
SyntheticDatasetManifest read_manifest(const std::filesystem::path& path);

/// A manifest bound to its directory with an in-memory video cache.
///
/// `video()` may be called concurrently; returned references stay valid for
/// the lifetime of the dataset.
class Dataset {
 public:
  Dataset(SyntheticDatasetManifest manifest, std::filesystem::path root);
  static Dataset open(const std::filesystem::path& manifest_or_dir);

  const SyntheticDatasetManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  /// Reads and validates the file against the manifest; cached afterwards.
  const RawVideo& video(const VideoRecord& record) const;
  const RawVideo& video(std::string_view id) const;
  void preload() const;

 private:
  SyntheticDatasetManifest manifest_;
  std::filesystem::path root_;
  mutable std::map<std::string, RawVideo, std::less<>> cache_;
  std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
};

struct ClipParams {
  int length = 8;
  int stride = 2;
};

VideoClip load_clip(const Dataset& dataset, std::string_view record_id, const ClipParams& params,
                    Rng& rng);

}  // namespace bgerase
