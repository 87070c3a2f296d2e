#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bgerase/distractor.hpp"
#include "bgerase/encoder.hpp"
#include "bgerase/objectives.hpp"
#include "bgerase/synthdata.hpp"
#include "bgerase/video.hpp"

namespace bgerase {

inline constexpr int kSchemaVersion = 1;

enum class ObjectiveKind { contrastive, pretext };
enum class NegativeSource { queue, batch };
enum class ProbeFeatures { embedding, backbone };

std::string_view objective_name(ObjectiveKind k);
ObjectiveKind parse_objective(std::string_view name);
std::string_view negative_source_name(NegativeSource s);
NegativeSource parse_negative_source(std::string_view name);
std::string_view probe_features_name(ProbeFeatures f);
ProbeFeatures parse_probe_features(std::string_view name);

/// Every experiment knob under a flat dotted key, e.g. `distractor.gamma`.
struct ExperimentConfig {
  // data.*
  std::string data_root;
  int data_classes = 8;
  int data_videos_per_class = 100;
  int data_test_videos_per_class = 25;
  double data_bias = 0.9;
  int data_frames = 32;
  int data_height = 64;
  int data_width = 64;
  double data_camera_pan = 0.5;
  double data_noise_sigma = 0.01;
  double data_sprite_scale_lo = 0.10;
  double data_sprite_scale_hi = 0.16;
  double data_speed_lo = 0.012;
  double data_speed_hi = 0.025;
  double data_tempo = 0.0;
  bool data_actor_variety = true;
  double data_background_saturation = 0.45;
  long long data_seed = -1;  ///< -1: use run.seed

  // clip.*
  int clip_length = 8;
  int clip_stride = 2;
  int clip_crop_height = 56;
  int clip_crop_width = 56;

  // aug.*
  bool aug_enabled = true;
  double aug_rotation = 10.0;
  double aug_brightness = 0.2;
  double aug_contrast = 0.2;
  double aug_saturation = 0.2;

  // distractor.*
  DistractorVariant distractor_variant = DistractorVariant::intra_frame;
  double distractor_gamma = 0.3;
  double distractor_sigma = 0.1;
  double distractor_cutmix_lo = 0.25;
  double distractor_cutmix_hi = 0.5;

  // objective.*
  ObjectiveKind objective_kind = ObjectiveKind::contrastive;
  bool objective_be = true;
  bool objective_hard_negative = true;
  PretextKind objective_pretext = PretextKind::rotation4;
  double objective_beta = 1.0;
  Reduction objective_consistency = Reduction::sum;
  double objective_temperature = 0.1;
  NegativeSource objective_negatives = NegativeSource::queue;
  int objective_queue_size = 1024;
  double objective_momentum = 0.999;
  bool objective_mask_same_video = true;

  // encoder.*
  std::vector<int> encoder_channels{16, 32, 64, 128};
  std::vector<int> encoder_strides{1, 2, 2, 2, 2, 2, 2, 2, 2, 1, 2, 2};
  int encoder_convs_per_stage = 2;
  int encoder_norm_groups = 4;
  int encoder_embedding_dim = 128;
  bool encoder_normalize = true;

  // optim.*
  int optim_epochs = 30;
  int optim_batch_size = 16;
  double optim_lr = 0.01;
  double optim_momentum = 0.9;
  double optim_weight_decay = 5e-4;
  std::vector<int> optim_lr_steps{20, 25};
  double optim_lr_decay = 0.1;

  // eval.*
  int eval_clips = 10;
  ProbeFeatures eval_probe_features = ProbeFeatures::embedding;
  int eval_probe_iterations = 300;
  double eval_probe_lr = 0.5;
  double eval_probe_l2 = 1e-3;
  std::vector<int> eval_retrieval_k{1, 5, 10, 20, 50};
  /// Full fine-tuning, used instead of the linear probe when requested.
  int eval_finetune_epochs = 10;
  double eval_finetune_lr = 0.01;

  // run.*
  std::uint64_t run_seed = 0;
  int run_threads = 0;

  /// Parses and assigns one key; throws ConfigError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Applies a flat JSON object of key/value pairs.
  void merge_json(std::string_view text);
  void merge_file(const std::filesystem::path& path);

  /// Canonical JSON: flat object, sorted keys.
  std::string to_json(int indent = -1) const;
  static ExperimentConfig from_json(std::string_view text);

  /// Hex digest of the canonical JSON; independent of key order in the source.
  std::string hash() const;
  static const std::vector<std::string>& keys();

  void validate() const;

  /// True when training uses the distractor and the consistency/hard-negative terms.
  bool be_active() const { return objective_be; }
  DistractorVariant effective_variant() const {
    return objective_be ? distractor_variant : DistractorVariant::none;
  }

  DatasetConfig dataset_config() const;
  ClipParams clip_params() const { return {clip_length, clip_stride}; }
  AugmentationSet augmentation() const;
  DistractorSpec distractor_spec() const;
  EncoderConfig encoder_config() const;
  PretextTask pretext_task() const { return PretextTask(objective_pretext); }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Copies a dataset's generator settings into the data.* keys.
void adopt_dataset_config(ExperimentConfig& cfg, const DatasetConfig& data);

/// Dataset root from `data.root`, else $BGERASE_DATA_DIR, else "data".
std::filesystem::path resolve_data_root(const ExperimentConfig& cfg);

/// Hex FNV-1a digest of a byte string.
std::string hex_digest(std::string_view bytes);

}  // namespace bgerase
