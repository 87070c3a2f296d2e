#include "bgerase/objectives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <limits>

#include "bgerase/errors.hpp"

namespace bgerase {

std::string_view pretext_name(PretextKind k) {
  return k == PretextKind::rotation4 ? "rotation4" : "clip_order3";
}

PretextKind parse_pretext(std::string_view name) {
  if (name == "rotation4" || name == "rotation") return PretextKind::rotation4;
  if (name == "clip_order3" || name == "clip_order") return PretextKind::clip_order3;
  throw ConfigError("unknown pretext task '" + std::string(name) + "'");
}

namespace {

constexpr std::array<std::array<int, 3>, 6> kOrders{
    {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

VideoClip rotate_quarters(const VideoClip& clip, int quarters) {
  if (quarters == 0) return clip;
  if (clip.height() != clip.width()) {
    throw InputError("rotation pretext needs square frames, got " + to_string(clip.shape()));
  }
  const int n = clip.height(), ch = clip.channels();
  VideoClip out(clip.shape(), clip.video_id());
  out.set_provenance(clip.video_id(), clip.start_index(), clip.stride());
  for (int t = 0; t < clip.frames(); ++t) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        int sy = y, sx = x;
        switch (quarters) {
          case 1: sy = x; sx = n - 1 - y; break;
          case 2: sy = n - 1 - y; sx = n - 1 - x; break;
          default: sy = n - 1 - x; sx = y; break;
        }
        for (int c = 0; c < ch; ++c) out.at(t, y, x, c) = clip.at(t, sy, sx, c);
      }
    }
  }
  return out;
}

VideoClip reorder_segments(const VideoClip& clip, int label) {
  const int T = clip.frames();
  if (T < 3) throw InputError("clip order pretext needs at least 3 frames");
  std::array<int, 4> bounds{0, 0, 0, T};
  const int base = T / 3, rem = T % 3;
  for (int i = 0; i < 2; ++i) bounds[i + 1] = bounds[i] + base + (i < rem ? 1 : 0);
  VideoClip out(clip.shape(), clip.video_id());
  out.set_provenance(clip.video_id(), clip.start_index(), clip.stride());
  int dst = 0;
  for (int seg : kOrders[label]) {
    for (int t = bounds[seg]; t < bounds[seg + 1]; ++t, ++dst) {
      const auto src = clip.frame(t);
      std::copy(src.begin(), src.end(), out.frame(dst).begin());
    }
  }
  return out;
}

}  // namespace

VideoClip PretextTask::apply(const VideoClip& clip, int label) const {
  if (label < 0 || label >= num_labels()) {
    throw InputError("pretext label " + std::to_string(label) + " outside [0," +
                     std::to_string(num_labels()) + ")");
  }
  return kind_ == PretextKind::rotation4 ? rotate_quarters(clip, label)
                                         : reorder_segments(clip, label);
}

CrossEntropy softmax_cross_entropy(std::span<const double> logits, int label) {
  if (logits.empty()) throw InputError("cross-entropy over empty logits");
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw InputError("cross-entropy label out of range");
  }
  CrossEntropy out;
  const auto top = std::max_element(logits.begin(), logits.end());
  const double m = *top;
  out.predicted = static_cast<int>(top - logits.begin());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double lse = m + std::log(z);
  out.loss = lse - logits[label];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - lse);
  out.grad[label] -= 1.0;
  return out;
}

PretextLoss pretext_loss(const std::vector<std::vector<double>>& logits,
                         const std::vector<int>& labels) {
  if (logits.empty()) throw InputError("pretext loss over an empty batch");
  if (logits.size() != labels.size()) throw InputError("pretext logits/labels size mismatch");
  PretextLoss out;
  const double inv = 1.0 / static_cast<double>(logits.size());
  int correct = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    CrossEntropy ce = softmax_cross_entropy(logits[i], labels[i]);
    out.loss += ce.loss * inv;
    if (ce.predicted == labels[i]) ++correct;
    for (double& g : ce.grad) g *= inv;
    out.grad.push_back(std::move(ce.grad));
  }
  out.accuracy = correct * inv;
  return out;
}

std::string_view reduction_name(Reduction r) { return r == Reduction::sum ? "sum" : "mean"; }

Reduction parse_reduction(std::string_view name) {
  if (name == "sum") return Reduction::sum;
  if (name == "mean") return Reduction::mean;
  throw ConfigError("unknown consistency reduction '" + std::string(name) + "'");
}

template <typename T>
ConsistencyLoss consistency_loss(const PooledTemporal<T>& a, const PooledTemporal<T>& b,
                                 Reduction reduction) {
  if (a.channels != b.channels || a.frames != b.frames) {
    throw InputError("consistency loss shape mismatch: " + std::to_string(a.channels) + "x" +
                     std::to_string(a.frames) + " vs " + std::to_string(b.channels) + "x" +
                     std::to_string(b.frames));
  }
  const std::size_t n = a.values.size();
  const double scale = reduction == Reduction::mean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
  ConsistencyLoss out;
  out.grad_a.resize(n);
  out.grad_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    out.value += d * d;
    out.grad_a[i] = 2.0 * d * scale;
    out.grad_b[i] = -2.0 * d * scale;
  }
  out.value *= scale;
  return out;
}

template <typename T>
double consistency_loss(const FeatureMap<T>& f_o, const FeatureMap<T>& f_d, Reduction reduction) {
  if (!(f_o.shape == f_d.shape)) {
    throw InputError("consistency loss shape mismatch: " + to_string(f_o.shape) + " vs " +
                     to_string(f_d.shape));
  }
  return consistency_loss(pool_psi(f_o), pool_psi(f_d), reduction).value;
}

double combined_pretext_loss(double pretext, double consistency, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  return pretext + beta * consistency;
}

InfoNceResult infonce(std::span<const double> anchor, std::span<const double> positive,
                      const std::vector<std::span<const double>>& negatives, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  if (negatives.empty()) throw InputError("InfoNCE needs at least one negative");
  const std::size_t D = anchor.size();
  if (positive.size() != D) throw InputError("InfoNCE positive dimension mismatch");
  auto dot = [D](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) s += a[i] * b[i];
    return s;
  };

  std::vector<double> logits(negatives.size() + 1);
  logits[0] = dot(anchor, positive) / tau;
  InfoNceResult out;
  out.pos_sim = logits[0] * tau;
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    if (negatives[n].size() != D) throw InputError("InfoNCE negative dimension mismatch");
    const double s = dot(anchor, negatives[n]);
    out.mean_neg_sim += s;
    logits[n + 1] = s / tau;
  }
  out.mean_neg_sim /= static_cast<double>(negatives.size());

  const CrossEntropy ce = softmax_cross_entropy(logits, 0);
  out.loss = ce.loss;
  // dL/ds_k = grad_k / tau
  out.grad_anchor.assign(D, 0.0);
  out.grad_positive.resize(D);
  const double gp = ce.grad[0] / tau;
  for (std::size_t i = 0; i < D; ++i) {
    out.grad_anchor[i] += gp * positive[i];
    out.grad_positive[i] = gp * anchor[i];
  }
  out.grad_negatives.resize(negatives.size());
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    const double gn = ce.grad[n + 1] / tau;
    auto& g = out.grad_negatives[n];
    g.resize(D);
    for (std::size_t i = 0; i < D; ++i) {
      out.grad_anchor[i] += gn * negatives[n][i];
      g[i] = gn * anchor[i];
    }
  }
  return out;
}

InfoNceBatch infonce_be(const std::vector<TaggedEmbedding>& anchors,
                        const std::vector<TaggedEmbedding>& positives,
                        const NegativeSets& negatives, double tau, bool use_hard) {
  if (anchors.empty()) throw InputError("InfoNCE over an empty batch");
  if (positives.size() != anchors.size()) throw InputError("anchor/positive count mismatch");
  if (!negatives.hard.empty() && negatives.hard.size() != anchors.size()) {
    throw InputError("hard negative list must have one slot per anchor");
  }
  InfoNceBatch out;
  const double inv = 1.0 / static_cast<double>(anchors.size());
  std::size_t hard_count = 0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const TaggedEmbedding& a = anchors[i];
    const TaggedEmbedding& p = positives[i];
    auto audit = [&](const TaggedEmbedding& n) {
      if (n.uid == a.uid || n.uid == p.uid) {
        throw InputError("integrity violation: negative set of anchor '" + a.video_id +
                         "' contains its own anchor or positive");
      }
    };
    std::vector<std::span<const double>> set;
    set.reserve(negatives.shared.size() + 1);
    for (const auto& n : negatives.shared) {
      if (negatives.mask_same_video && !a.video_id.empty() && n.video_id == a.video_id) continue;
      audit(n);
      set.emplace_back(n.z);
    }
    const TaggedEmbedding* hard = nullptr;
    if (use_hard && !negatives.hard.empty() && negatives.hard[i]) {
      hard = &*negatives.hard[i];
      if (hard->video_id != a.video_id || hard->clip_start == a.clip_start) {
        throw InputError("hard negative for '" + a.video_id +
                         "' must be a different clip of the same video");
      }
      audit(*hard);
      set.emplace_back(hard->z);
    }
    if (set.empty()) {
      throw InputError("empty negative set for anchor '" + a.video_id + "'");
    }
    InfoNceResult r = infonce(a.z, p.z, set, tau);
    out.loss += r.loss * inv;
    out.pos_sim += r.pos_sim * inv;
    out.neg_sim += r.mean_neg_sim * inv;
    out.negatives += set.size();
    for (double& g : r.grad_anchor) g *= inv;
    for (double& g : r.grad_positive) g *= inv;
    out.grad_anchor.push_back(std::move(r.grad_anchor));
    out.grad_positive.push_back(std::move(r.grad_positive));
    if (hard) {
      std::vector<double> gh = std::move(r.grad_negatives.back());
      for (double& g : gh) g *= inv;
      out.grad_hard.push_back(std::move(gh));
      out.hard_sim += std::inner_product(a.z.begin(), a.z.end(), hard->z.begin(), 0.0);
      ++hard_count;
    } else {
      out.grad_hard.emplace_back();
    }
  }
  if (hard_count > 0) out.hard_sim /= static_cast<double>(hard_count);
  return out;
}

EmbeddingQueue::EmbeddingQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw ConfigError("queue capacity must be positive");
  if (dim == 0) throw ConfigError("queue embedding dimension must be positive");
  entries_.reserve(capacity);
}

void EmbeddingQueue::fill_random(Rng& rng) {
  clear();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < capacity_; ++i) {
    TaggedEmbedding e;
    e.uid = kRandomUidBase + i;
    e.z.resize(dim_);
    double ss = 0.0;
    for (double& v : e.z) {
      v = normal(rng);
      ss += v * v;
    }
    const double inv = 1.0 / std::sqrt(std::max(ss, 1e-300));
    for (double& v : e.z) v *= inv;
    push(e);
  }
}

void EmbeddingQueue::push(const TaggedEmbedding& e) {
  if (e.z.size() != dim_) {
    throw InputError("queue expects dimension " + std::to_string(dim_) + ", got " +
                     std::to_string(e.z.size()));
  }
  if (entries_.size() < capacity_) {
    entries_.push_back(e);
    return;
  }
  entries_[head_] = e;
  head_ = (head_ + 1) % capacity_;
}

void EmbeddingQueue::push(const std::vector<TaggedEmbedding>& batch) {
  for (const auto& e : batch) {
    if (e.z.size() != dim_) throw InputError("queue embedding dimension mismatch");
  }
  for (const auto& e : batch) push(e);
}

void EmbeddingQueue::clear() {
  entries_.clear();
  head_ = 0;
}

const TaggedEmbedding& EmbeddingQueue::at(std::size_t i) const {
  if (i >= entries_.size()) throw InputError("queue index out of range");
  return entries_[(head_ + i) % entries_.size()];
}

std::vector<TaggedEmbedding> EmbeddingQueue::snapshot() const {
  std::vector<TaggedEmbedding> out;
  out.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back(at(i));
  return out;
}

void EmbeddingQueue::restore(std::vector<TaggedEmbedding> ring, std::size_t head) {
  if (ring.size() > capacity_ || (head != 0 && head >= ring.size())) {
    throw InputError("queue state does not fit its capacity");
  }
  for (const auto& e : ring) {
    if (e.z.size() != dim_) throw InputError("queue embedding dimension mismatch");
  }
  entries_ = std::move(ring);
  head_ = head;
}

template <typename T>
TaggedEmbedding embed(const Encoder<T>& encoder, const VideoClip& clip, std::uint64_t uid) {
  const Projection<T> p = encoder.project(encoder.forward(clip));
  TaggedEmbedding e;
  e.z.assign(p.embedding.begin(), p.embedding.end());
  e.uid = uid;
  e.video_id = clip.video_id();
  e.clip_start = clip.start_index();
  return e;
}

template <typename T>
PretextObjective pretext_objective(const Encoder<T>& encoder, const PretextTask& task,
                                   const std::vector<PretextSample>& batch, double beta,
                                   Reduction reduction, std::span<T> grad) {
  if (batch.empty()) throw InputError("pretext objective over an empty batch");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  const bool want_grad = !grad.empty();
  const int M = task.num_labels();
  const double inv_examples = 1.0 / (static_cast<double>(batch.size()) * M);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  PretextObjective out;
  int correct = 0;
  EncoderTape<T> tape, tape_d;
  for (const PretextSample& s : batch) {
    // The distracted branch first so that its consistency gradient is ready.
    const FeatureMap<T> f_d = encoder.forward(s.distracted, want_grad ? &tape_d : nullptr);
    const PooledTemporal<T> psi_d = pool_psi(f_d);
    for (int r = 0; r < M; ++r) {
      const FeatureMap<T> f = encoder.forward(task.apply(s.original, r), want_grad ? &tape : nullptr);
      const Classification<T> cl = encoder.classify(f);
      const std::vector<double> logits(cl.logits.begin(), cl.logits.end());
      const CrossEntropy ce = softmax_cross_entropy(logits, r);
      out.pretext += ce.loss * inv_examples;
      if (ce.predicted == r) ++correct;

      ConsistencyLoss cons;
      PooledTemporal<T> psi_o;
      if (r == 0) {
        psi_o = pool_psi(f);
        cons = consistency_loss(psi_o, psi_d, reduction);
        out.consistency += cons.value * inv_batch;
      }
      if (!want_grad) continue;

      std::vector<T> g_logits(M);
      for (int m = 0; m < M; ++m) g_logits[m] = static_cast<T>(ce.grad[m] * inv_examples);
      FeatureMap<T> g_f = encoder.classify_backward(f.shape, cl, g_logits, grad);
      if (r == 0 && beta > 0.0) {
        std::vector<T> g_psi(cons.grad_a.size()), g_psi_d(cons.grad_b.size());
        for (std::size_t i = 0; i < g_psi.size(); ++i) {
          g_psi[i] = static_cast<T>(beta * inv_batch * cons.grad_a[i]);
          g_psi_d[i] = static_cast<T>(beta * inv_batch * cons.grad_b[i]);
        }
        const FeatureMap<T> g_o = pool_psi_backward(f.shape, psi_o, std::span<const T>(g_psi));
        for (std::size_t i = 0; i < g_f.data.size(); ++i) g_f.data[i] += g_o.data[i];
        const FeatureMap<T> g_d = pool_psi_backward(f_d.shape, psi_d, std::span<const T>(g_psi_d));
        encoder.backward(tape_d, g_d, grad);
      }
      encoder.backward(tape, g_f, grad);
    }
  }
  out.accuracy = correct * inv_examples;
  out.total = combined_pretext_loss(out.pretext, out.consistency, beta);
  return out;
}

template <typename T>
ContrastiveObjective contrastive_objective(const Encoder<T>& online,
                                           const std::vector<VideoClip>& anchors,
                                           const std::vector<std::uint64_t>& anchor_uids,
                                           const std::vector<TaggedEmbedding>& positives,
                                           const NegativeSets& negatives, double tau,
                                           bool use_hard, std::span<T> grad) {
  if (anchors.size() != anchor_uids.size()) throw InputError("anchor uid count mismatch");
  const bool want_grad = !grad.empty();
  std::vector<EncoderTape<T>> tapes(want_grad ? anchors.size() : 0);
  std::vector<FeatureShape> shapes;
  std::vector<Projection<T>> projections;
  std::vector<TaggedEmbedding> z;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const FeatureMap<T> f = online.forward(anchors[i], want_grad ? &tapes[i] : nullptr);
    shapes.push_back(f.shape);
    projections.push_back(online.project(f));
    TaggedEmbedding e;
    e.z.assign(projections.back().embedding.begin(), projections.back().embedding.end());
    e.uid = anchor_uids[i];
    e.video_id = anchors[i].video_id();
    e.clip_start = anchors[i].start_index();
    z.push_back(std::move(e));
  }
  const InfoNceBatch r = infonce_be(z, positives, negatives, tau, use_hard);
  ContrastiveObjective out{r.loss, r.pos_sim, r.neg_sim, r.negatives, r.hard_sim};
  if (!want_grad) return out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::vector<T> g(r.grad_anchor[i].begin(), r.grad_anchor[i].end());
    const FeatureMap<T> g_f = online.project_backward(shapes[i], projections[i], g, grad);
    online.backward(tapes[i], g_f, grad);
  }
  return out;
}

#define BGERASE_INSTANTIATE(T)                                                                 \
  template ConsistencyLoss consistency_loss<T>(const PooledTemporal<T>&,                       \
                                               const PooledTemporal<T>&, Reduction);           \
  template double consistency_loss<T>(const FeatureMap<T>&, const FeatureMap<T>&, Reduction);  \
  template TaggedEmbedding embed<T>(const Encoder<T>&, const VideoClip&, std::uint64_t);       \
  template PretextObjective pretext_objective<T>(const Encoder<T>&, const PretextTask&,        \
                                                 const std::vector<PretextSample>&, double,    \
                                                 Reduction, std::span<T>);                     \
  template ContrastiveObjective contrastive_objective<T>(                                      \
      const Encoder<T>&, const std::vector<VideoClip>&, const std::vector<std::uint64_t>&,     \
      const std::vector<TaggedEmbedding>&, const NegativeSets&, double, bool, std::span<T>);

BGERASE_INSTANTIATE(float)
BGERASE_INSTANTIATE(double)

#undef BGERASE_INSTANTIATE

}  // namespace bgerase
