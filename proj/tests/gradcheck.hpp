#pragma once

#include <bgerase/encoder.hpp>
#include <bgerase/objectives.hpp>
#include <bgerase/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "oracles.hpp"
#include "test_support.hpp"

namespace bgerase::testing {

struct GradCheck {
  double relative_error = 0.0;  ///< ||fd - analytic|| / max(||fd||, ||analytic||)
  double fd_norm = 0.0;
  double analytic_norm = 0.0;
  std::size_t coordinates = 0;
  std::size_t refined = 0;   ///< coordinates re-differenced with a smaller step
  std::size_t unstable = 0;  ///< still switching at the smallest step
};

/// Identifies the linear piece a piecewise-smooth loss is evaluated on.
using Signature = std::function<std::uint64_t()>;

/// Central differences of `loss` over every entry of `x`, compared with `analytic`.
///
/// ReLU and max-pooling make the losses piecewise smooth. When `signature`
/// changes between x and x +- step the difference straddles a switch and is
/// not a derivative estimate; the step is then divided by ten (up to three
/// times) until both probes stay on the piece of x.
inline GradCheck central_difference(std::span<double> x, const std::function<double()>& loss,
                                    std::span<const double> analytic, double step = 1e-3,
                                    const Signature& signature = {}) {
  GradCheck r;
  r.coordinates = x.size();
  const std::uint64_t home = signature ? signature() : 0;
  double diff = 0.0, fd_sq = 0.0, an_sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    double fd = 0.0;
    double h = step;
    for (int attempt = 0; attempt < 4; ++attempt, h /= 10.0) {
      x[i] = saved + h;
      const double up = loss();
      const bool up_ok = !signature || signature() == home;
      x[i] = saved - h;
      const double down = loss();
      const bool down_ok = !signature || signature() == home;
      x[i] = saved;
      fd = (up - down) / (2.0 * h);
      if (up_ok && down_ok) break;
      if (attempt == 0) ++r.refined;
      if (attempt == 3) ++r.unstable;
    }
    diff += (fd - analytic[i]) * (fd - analytic[i]);
    fd_sq += fd * fd;
    an_sq += analytic[i] * analytic[i];
  }
  r.fd_norm = std::sqrt(fd_sq);
  r.analytic_norm = std::sqrt(an_sq);
  r.relative_error = std::sqrt(diff) / std::max({r.fd_norm, r.analytic_norm, 1e-300});
  return r;
}

/// Hash of every ReLU on/off state and every max-pooling winner for the given inputs.
template <typename T>
std::uint64_t activation_signature(const Encoder<T>& enc, const std::vector<VideoClip>& clips) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
  };
  for (const auto& clip : clips) {
    EncoderTape<T> tape;
    const FeatureMap<T> f = enc.forward(clip, &tape);
    for (const auto& block : tape.blocks) {
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < block.output.size(); ++i) {
        word = (word << 1) | (block.output[i] > T(0));
        if (i % 64 == 63) mix(word);
      }
      mix(word);
    }
    for (std::size_t a : pool_psi(f).argmax) mix(a);
    for (std::size_t a : global_max_pool(f).argmax) mix(a);
  }
  return h;
}

/// Two 3x3x3 conv stages, tiny enough for exhaustive finite differences.
inline EncoderConfig two_layer_config(int embedding_dim = 6, int classes = 0) {
  EncoderConfig c;
  c.channels = {3, 4};
  c.strides = {{1, 1, 1}, {1, 2, 2}};
  c.convs_per_stage = 1;
  c.norm_groups = 1;
  c.embedding_dim = embedding_dim;
  c.classifier_classes = classes;
  return c;
}

struct TwoVideoBatch {
  std::vector<VideoClip> original;
  std::vector<VideoClip> distracted;
};

/// Two random 4x6x6 clips and their intra-frame blends at lambda = 0.3.
inline TwoVideoBatch two_videos(Rng& rng) {
  TwoVideoBatch b;
  for (int i = 0; i < 2; ++i) {
    VideoClip c = random_clip({4, 6, 6, 3}, rng, "v" + std::to_string(i));
    VideoClip d = c;
    const int k = i + 1;
    for (int t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < d.frame(t).size(); ++j)
        d.frame(t)[j] = 0.7f * c.frame(t)[j] + 0.3f * c.frame(k)[j];
    b.original.push_back(c);
    b.distracted.push_back(d);
  }
  return b;
}

/// Consistency loss summed over a two-video batch, through the encoder parameters.
inline GradCheck consistency_gradient_check(std::uint64_t seed) {
  Encoder<double> enc(two_layer_config());
  Rng rng(seed);
  enc.initialize(rng);
  const TwoVideoBatch b = two_videos(rng);
  auto loss = [&] {
    double s = 0;
    for (int i = 0; i < 2; ++i) {
      s += consistency_loss(enc.forward(b.original[i]), enc.forward(b.distracted[i]));
    }
    return s;
  };
  std::vector<double> grad(enc.parameter_count(), 0.0);
  for (int i = 0; i < 2; ++i) {
    EncoderTape<double> to, td;
    const auto fo = enc.forward(b.original[i], &to);
    const auto fd = enc.forward(b.distracted[i], &td);
    const auto po = pool_psi(fo), pd = pool_psi(fd);
    const auto c = consistency_loss(po, pd);
    const std::vector<double> ga(c.grad_a.begin(), c.grad_a.end());
    const std::vector<double> gb(c.grad_b.begin(), c.grad_b.end());
    enc.backward(to, pool_psi_backward(fo.shape, po, std::span<const double>(ga)), grad);
    enc.backward(td, pool_psi_backward(fd.shape, pd, std::span<const double>(gb)), grad);
  }
  std::vector<VideoClip> all = b.original;
  all.insert(all.end(), b.distracted.begin(), b.distracted.end());
  return central_difference(enc.parameters(), loss, grad, 1e-3,
                            [&] { return activation_signature(enc, all); });
}

/// Rotation pretext cross-entropy plus beta-weighted consistency.
inline GradCheck combined_gradient_check(std::uint64_t seed, Reduction reduction,
                                         double beta = 1.0) {
  Encoder<double> enc(two_layer_config(4, 4));
  Rng rng(seed);
  enc.initialize(rng);
  const TwoVideoBatch tv = two_videos(rng);
  std::vector<PretextSample> batch;
  for (int i = 0; i < 2; ++i) batch.push_back({tv.original[i], tv.distracted[i]});
  const PretextTask task(PretextKind::rotation4);
  std::vector<VideoClip> all;
  for (const auto& s : batch) {
    all.push_back(s.distracted);
    for (int r = 0; r < task.num_labels(); ++r) all.push_back(task.apply(s.original, r));
  }
  auto loss = [&] { return pretext_objective<double>(enc, task, batch, beta, reduction, {}).total; };
  std::vector<double> grad(enc.parameter_count(), 0.0);
  pretext_objective<double>(enc, task, batch, beta, reduction, grad);
  return central_difference(enc.parameters(), loss, grad, 1e-3,
                            [&] { return activation_signature(enc, all); });
}

/// InfoNCE over a two-video batch with fixed keys, five shared negatives and one hard negative.
inline GradCheck infonce_gradient_check(std::uint64_t seed, bool use_hard, double tau) {
  Encoder<double> enc(two_layer_config(6));
  Rng rng(seed);
  enc.initialize(rng);
  const TwoVideoBatch tv = two_videos(rng);
  const std::vector<std::uint64_t> uids{1, 2};
  std::vector<TaggedEmbedding> positives;
  for (int i = 0; i < 2; ++i) positives.push_back(embed(enc, tv.distracted[i], 10 + i));
  NegativeSets neg;
  for (int k = 0; k < 5; ++k) neg.shared.push_back(tagged(random_unit(6, rng), 100 + k, "q"));
  neg.hard = {tagged(random_unit(6, rng), 20, "v0", 2), std::nullopt};
  auto loss = [&] {
    return contrastive_objective<double>(enc, tv.original, uids, positives, neg, tau, use_hard, {})
        .loss;
  };
  std::vector<double> grad(enc.parameter_count(), 0.0);
  contrastive_objective<double>(enc, tv.original, uids, positives, neg, tau, use_hard, grad);
  return central_difference(enc.parameters(), loss, grad, 1e-3,
                            [&] { return activation_signature(enc, tv.original); });
}

}  // namespace bgerase::testing
