#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bgerase/config.hpp"
#include "bgerase/encoder.hpp"
#include "bgerase/synthdata.hpp"
#include "bgerase/video.hpp"

namespace bgerase {

// -- features ---------------------------------------------------------------

/// Global-max backbone vector (C) or pre-normalization projection (D).
std::vector<double> clip_feature(const Encoder<float>& encoder, const VideoClip& clip,
                                 ProbeFeatures source);

/// Per-video list of per-clip feature vectors.
struct VideoFeatures {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<std::vector<std::vector<double>>> clips;  ///< [video][clip][dim]
};

struct FeatureRequest {
  ProbeFeatures source = ProbeFeatures::embedding;
  int clips = 10;       ///< uniformly spaced over the valid range
  ClipParams clip;
  int crop_height = 0;  ///< center crop; 0 keeps the full frame
  int crop_width = 0;
  int threads = 0;      ///< 0: hardware concurrency
  /// Replace each video with its static version (frame `static_frame` repeated).
  bool make_static = false;
};

VideoFeatures extract_features(const Encoder<float>& encoder, const Dataset& data,
                               const std::vector<const VideoRecord*>& records,
                               const FeatureRequest& request);

/// FeatureRequest matching an experiment's eval settings.
FeatureRequest feature_request(const ExperimentConfig& cfg, ProbeFeatures source);

// -- linear probe -----------------------------------------------------------

struct ProbeConfig {
  int iterations = 300;
  double lr = 0.5;
  double l2 = 1e-3;
  double momentum = 0.9;
};

/// Multinomial logistic regression on standardized features.
class LinearProbe {
 public:
  LinearProbe() = default;

  /// Each training row is one clip feature labelled with its video's class.
  static LinearProbe fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                         int num_classes, const ProbeConfig& cfg);

  std::vector<double> logits(const std::vector<double>& feature) const;
  int num_classes() const noexcept { return classes_; }
  std::size_t dim() const noexcept { return mean_.size(); }
  double final_loss() const noexcept { return final_loss_; }

 private:
  int classes_ = 0;
  std::vector<double> mean_, inv_std_;
  std::vector<double> weight_;  ///< classes x dim
  std::vector<double> bias_;
  double final_loss_ = 0.0;
};

struct ProbeResult {
  std::string split;
  std::vector<double> per_class_accuracy;
  std::vector<int> per_class_count;
  double top1 = 0.0;
  int num_clips_averaged = 10;
  std::vector<int> predictions;  ///< per test video
};

/// Scores each video by the argmax of its class scores summed over clips.
ProbeResult score_videos(const std::vector<std::vector<double>>& scores,
                         const std::vector<int>& labels, int num_classes, std::string split,
                         int clips_averaged);

/// Trains on every clip of `train`, predicts each test video from its mean clip logits.
ProbeResult probe_predict(const LinearProbe& probe, const VideoFeatures& test, int num_classes,
                          std::string split);

ProbeResult linear_probe(const VideoFeatures& train, const VideoFeatures& test, int num_classes,
                         const ProbeConfig& cfg, std::string split);

/// k-fold cross-fit on one split: each fold is predicted by a probe trained on the others.
ProbeResult cross_fit_probe(const VideoFeatures& features, int num_classes, int folds,
                            const ProbeConfig& cfg, std::string split);

std::string probe_result_json(const ProbeResult& r);
std::string probe_result_text(const ProbeResult& r);

// -- retrieval --------------------------------------------------------------

struct RecallTable {
  std::vector<int> k;            ///< effective (clamped) K values
  std::vector<int> requested_k;
  std::vector<double> recall;    ///< fraction in [0,1]
  std::vector<std::string> warnings;
};

/// Cosine nearest neighbours; ties ordered by gallery index.
RecallTable retrieval_recall(const std::vector<std::vector<double>>& gallery,
                             const std::vector<int>& gallery_labels,
                             const std::vector<std::vector<double>>& queries,
                             const std::vector<int>& query_labels, const std::vector<int>& ks);

std::string recall_json(const RecallTable& t);
std::string recall_text(const RecallTable& t);

// -- statistics -------------------------------------------------------------

struct PearsonResult {
  bool defined = false;
  std::string error;  ///< set when undefined
  double rho = 0.0;
  double p_value = 1.0;
  double t = 0.0;
  int n = 0;
};

/// Pearson correlation with a two-tailed Student-t p-value on n - 2 dof.
PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);

enum class Improvement { absolute, relative };

struct BiasDiagnostic {
  std::vector<double> static_acc_per_class;
  std::vector<double> improvement_per_class;
  Improvement improvement = Improvement::absolute;
  PearsonResult correlation;
};

/// Correlates static accuracy with the BE-minus-baseline per-class accuracy change.
BiasDiagnostic bias_correlation(const ProbeResult& baseline, const ProbeResult& be,
                                const ProbeResult& static_probe,
                                Improvement mode = Improvement::absolute);

std::string bias_json(const BiasDiagnostic& d);

// -- saliency ---------------------------------------------------------------

struct SaliencyMap {
  int frames = 0, height = 0, width = 0;
  std::vector<float> values;  ///< T x H x W in [0,1]
  bool degenerate = false;
  std::string warning;

  float at(int t, int y, int x) const {
    return values[(static_cast<std::size_t>(t) * height + y) * width + x];
  }
};

/// Trilinear (half-pixel centers) resize of a T' x H' x W' volume.
std::vector<float> resize_trilinear(const std::vector<float>& in, int t0, int h0, int w0, int t1,
                                    int h1, int w1);

/// Channel mean of a feature map, resized to the given dims and min-max normalized.
SaliencyMap saliency_from_features(const FeatureMap<float>& f, int frames, int height, int width);
SaliencyMap saliency_map(const Encoder<float>& encoder, const VideoClip& clip);

/// Intersection over union of the top `fraction` voxels of two maps.
double top_fraction_iou(const SaliencyMap& a, const SaliencyMap& b, double fraction = 0.1);

enum class Attack { static_video, paste_static_actor, add_static_frame };

std::string_view attack_name(Attack a);
Attack parse_attack(std::string_view name);

struct AttackSpec {
  Attack kind = Attack::add_static_frame;
  double lambda = 0.3;
  int frame = -1;          ///< -1: middle frame
  std::uint64_t seed = 0;  ///< actor placement and color
};

VideoClip apply_attack(const VideoClip& clip, const AttackSpec& spec);

struct AdversarialReport {
  SaliencyMap before;
  SaliencyMap after;
  double iou_top10 = 0.0;
  double embedding_cosine = 1.0;  ///< cosine of embeddings before/after
  std::optional<int> prediction_before;
  std::optional<int> prediction_after;
};

AdversarialReport adversarial_probe(const Encoder<float>& encoder, const VideoClip& clip,
                                    const AttackSpec& spec, const LinearProbe* probe = nullptr,
                                    ProbeFeatures source = ProbeFeatures::embedding);

/// Writes `<prefix>_<t>.png` overlays (frame blended with a heat map) into `dir`.
std::vector<std::filesystem::path> write_saliency_pngs(const std::filesystem::path& dir,
                                                       const std::string& prefix,
                                                       const VideoClip& clip,
                                                       const SaliencyMap& map);

/// 8-bit RGB PNG writer.
void write_png(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& rgb);

}  // namespace bgerase
