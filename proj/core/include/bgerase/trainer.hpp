#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bgerase/checkpoint.hpp"
#include "bgerase/config.hpp"
#include "bgerase/encoder.hpp"
#include "bgerase/objectives.hpp"
#include "bgerase/synthdata.hpp"

namespace bgerase {

struct StepMetrics {
  std::uint64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double pos_sim = 0.0;   ///< contrastive only
  double neg_sim = 0.0;   ///< contrastive only
  double hard_sim = 0.0;  ///< contrastive with hard negatives only
  std::size_t negatives = 0;
  double pretext = 0.0;      ///< pretext only
  double consistency = 0.0;  ///< pretext only
  double accuracy = 0.0;     ///< pretext only
};

/// One JSON line with `schema_version`.
std::string metrics_json_line(const StepMetrics& m, ObjectiveKind kind);

/// SGD with momentum and L2 weight decay: v = mu v + (g + wd theta); theta -= lr v.
void sgd_update(std::span<float> params, std::span<float> velocity, std::span<const float> grad,
                double lr, double momentum, double weight_decay);

/// Step schedule: lr * decay^(number of milestones <= epoch).
double scheduled_lr(double base, const std::vector<int>& milestones, double decay, int epoch);

/// The two views, distracted clip and hard negative built for one training video.
struct ContrastiveViews {
  VideoClip original;   ///< x^o: crop 1 with a1
  VideoClip distracted; ///< x^d: crop 2 with a2, then the distractor
  std::optional<VideoClip> hard;  ///< different clip of the same video, crop 1 with a1
  DistractorTrace trace;
};

/// Builds the contrastive views of one video; `donor` feeds inter_frame, mixup and cutmix.
ContrastiveViews make_contrastive_views(const ExperimentConfig& cfg, const RawVideo& video,
                                        const RawVideo* donor, bool want_hard, Rng& rng);

/// Start of a second clip at least about half a clip span away from `start`.
std::optional<int> hard_negative_start(int video_frames, int length, int stride, int start,
                                       Rng& rng);

/// Self-supervised pretraining driver for both objective kinds.
///
/// Every random draw derives from `run.seed`, so two trainers built from the
/// same config and dataset produce identical losses and parameters.
class Trainer {
 public:
  Trainer(ExperimentConfig cfg, const Dataset& data);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const Encoder<float>& encoder() const noexcept { return online_; }
  const Encoder<float>& momentum_encoder() const noexcept { return momentum_; }
  const EmbeddingQueue& queue() const noexcept { return queue_; }
  std::uint64_t steps_done() const noexcept { return step_; }
  int epoch() const noexcept { return epoch_; }
  std::size_t steps_per_epoch() const;

  /// Where a diagnostic dump is written when the loss becomes non-finite.
  void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }
  void set_metrics_stream(std::ostream* out) { metrics_ = out; }

  /// One optimization step on the given training records.
  StepMetrics step(const std::vector<const VideoRecord*>& batch);

  /// Runs the remaining epochs; `on_step` sees every step's metrics.
  void run(const std::function<void(const StepMetrics&)>& on_step = {});

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  StepMetrics contrastive_step(const std::vector<const VideoRecord*>& batch, Rng& rng);
  StepMetrics pretext_step(const std::vector<const VideoRecord*>& batch, Rng& rng);
  const RawVideo* pick_donor(const VideoRecord& self, Rng& rng) const;
  void check_finite(const StepMetrics& m, const std::vector<const VideoRecord*>& batch) const;

  ExperimentConfig cfg_;
  const Dataset& data_;
  std::vector<const VideoRecord*> train_;
  Encoder<float> online_;
  Encoder<float> momentum_;
  EmbeddingQueue queue_;
  std::vector<float> velocity_;
  std::vector<float> grad_;
  std::uint64_t step_ = 0;
  int epoch_ = 0;
  std::filesystem::path dump_dir_ = ".";
  std::ostream* metrics_ = nullptr;
};

}  // namespace bgerase
