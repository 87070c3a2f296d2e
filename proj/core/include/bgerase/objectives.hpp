#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bgerase/encoder.hpp"
#include "bgerase/random.hpp"
#include "bgerase/video.hpp"

namespace bgerase {

// -- pretext ----------------------------------------------------------------

enum class PretextKind { rotation4, clip_order3 };

std::string_view pretext_name(PretextKind k);
PretextKind parse_pretext(std::string_view name);

/// A labelled family of deterministic clip transformations.
///
/// rotation4 rotates every frame by label * 90 degrees (square frames only).
/// clip_order3 cuts the clip into three contiguous sub-clips and reassembles
/// them in the label-th lexicographic permutation of (0, 1, 2).
class PretextTask {
 public:
  explicit PretextTask(PretextKind kind = PretextKind::rotation4) : kind_(kind) {}

  PretextKind kind() const noexcept { return kind_; }
  int num_labels() const noexcept { return kind_ == PretextKind::rotation4 ? 4 : 6; }
  VideoClip apply(const VideoClip& clip, int label) const;

 private:
  PretextKind kind_;
};

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;  ///< dloss / dlogits
  int predicted = 0;
};

/// Numerically stable softmax cross-entropy for one example.
CrossEntropy softmax_cross_entropy(std::span<const double> logits, int label);

struct PretextLoss {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<double>> grad;  ///< per example, dloss / dlogits
};

/// Mean cross-entropy over every (clip, transformation) example.
PretextLoss pretext_loss(const std::vector<std::vector<double>>& logits,
                         const std::vector<int>& labels);

// -- consistency ------------------------------------------------------------

enum class Reduction { sum, mean };

std::string_view reduction_name(Reduction r);
Reduction parse_reduction(std::string_view name);

struct ConsistencyLoss {
  double value = 0.0;
  std::vector<double> grad_a;  ///< dvalue / dpsi(a)
  std::vector<double> grad_b;
};

/// Squared distance between two C x T' pooled maps.
template <typename T>
ConsistencyLoss consistency_loss(const PooledTemporal<T>& a, const PooledTemporal<T>& b,
                                 Reduction reduction = Reduction::sum);

/// psi-pools both feature maps first.
template <typename T>
double consistency_loss(const FeatureMap<T>& f_o, const FeatureMap<T>& f_d,
                        Reduction reduction = Reduction::sum);

/// L_p + beta * L_be.
double combined_pretext_loss(double pretext, double consistency, double beta = 1.0);

// -- contrastive ------------------------------------------------------------

/// An embedding with identity metadata used for integrity audits.
struct TaggedEmbedding {
  std::vector<double> z;
  std::uint64_t uid = 0;
  std::string video_id;
  int clip_start = 0;
};

/// Negatives for a batch: a shared pool (queue snapshot or in-batch keys) and
/// at most one same-video hard negative per anchor.
struct NegativeSets {
  std::vector<TaggedEmbedding> shared;
  std::vector<std::optional<TaggedEmbedding>> hard;
  /// Drop shared entries that come from the anchor's own video.
  bool mask_same_video = true;
};

struct InfoNceResult {
  double loss = 0.0;
  std::vector<double> grad_anchor;
  std::vector<double> grad_positive;
  std::vector<std::vector<double>> grad_negatives;
  double pos_sim = 0.0;
  double mean_neg_sim = 0.0;
};

/// -log(exp(s_p/tau) / (exp(s_p/tau) + sum_n exp(s_n/tau))) with dot-product scores.
InfoNceResult infonce(std::span<const double> anchor, std::span<const double> positive,
                      const std::vector<std::span<const double>>& negatives, double tau);

struct InfoNceBatch {
  double loss = 0.0;  ///< mean over anchors
  std::vector<std::vector<double>> grad_anchor;
  std::vector<std::vector<double>> grad_positive;
  std::vector<std::vector<double>> grad_hard;  ///< empty rows when no hard negative
  double pos_sim = 0.0;
  double neg_sim = 0.0;
  double hard_sim = 0.0;      ///< mean over anchors that have a hard negative
  std::size_t negatives = 0;  ///< total scored negatives
};

/// Batch-averaged InfoNCE; with `use_hard` each anchor's hard negative joins its set.
///
/// Throws InputError when an anchor has no negatives or when a negative carries
/// the uid of the anchor or its positive.
InfoNceBatch infonce_be(const std::vector<TaggedEmbedding>& anchors,
                        const std::vector<TaggedEmbedding>& positives,
                        const NegativeSets& negatives, double tau, bool use_hard);

/// Fixed-capacity FIFO of detached embeddings.
class EmbeddingQueue {
 public:
  EmbeddingQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Fills the queue with random unit vectors carrying reserved uids.
  void fill_random(Rng& rng);
  void push(const TaggedEmbedding& e);
  void push(const std::vector<TaggedEmbedding>& batch);
  void clear();

  /// Oldest first.
  std::vector<TaggedEmbedding> snapshot() const;
  const TaggedEmbedding& at(std::size_t i) const;  ///< i = 0 is the oldest

  /// Raw ring access for serialization.
  const std::vector<TaggedEmbedding>& ring() const noexcept { return entries_; }
  std::size_t head() const noexcept { return head_; }
  void restore(std::vector<TaggedEmbedding> ring, std::size_t head);

  static constexpr std::uint64_t kRandomUidBase = 0x8000000000000000ULL;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::vector<TaggedEmbedding> entries_;
  std::size_t head_ = 0;  ///< index of the oldest entry once full
};

// -- batch objectives (used by the trainers and gradient checks) -------------

struct PretextSample {
  VideoClip original;
  VideoClip distracted;
};

struct PretextObjective {
  double total = 0.0;
  double pretext = 0.0;
  double consistency = 0.0;
  double accuracy = 0.0;
};

/// L_p + beta * L_be over a batch; accumulates dL/dtheta into `grad` when non-empty.
template <typename T>
PretextObjective pretext_objective(const Encoder<T>& encoder, const PretextTask& task,
                                   const std::vector<PretextSample>& batch, double beta,
                                   Reduction reduction, std::span<T> grad);

struct ContrastiveObjective {
  double loss = 0.0;
  double pos_sim = 0.0;
  double neg_sim = 0.0;
  std::size_t negatives = 0;
  double hard_sim = 0.0;
};

/// InfoNCE over online-encoded anchors against fixed (detached) keys.
template <typename T>
ContrastiveObjective contrastive_objective(const Encoder<T>& online,
                                           const std::vector<VideoClip>& anchors,
                                           const std::vector<std::uint64_t>& anchor_uids,
                                           const std::vector<TaggedEmbedding>& positives,
                                           const NegativeSets& negatives, double tau,
                                           bool use_hard, std::span<T> grad);

/// Embedding of a clip as a tagged vector (used for keys).
template <typename T>
TaggedEmbedding embed(const Encoder<T>& encoder, const VideoClip& clip, std::uint64_t uid);

}  // namespace bgerase
