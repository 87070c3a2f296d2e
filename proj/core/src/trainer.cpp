#include "bgerase/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bgerase/errors.hpp"

namespace bgerase {

using nlohmann::json;

std::string metrics_json_line(const StepMetrics& m, ObjectiveKind kind) {
  json j{{"schema_version", kSchemaVersion}, {"step", m.step}, {"epoch", m.epoch},
         {"lr", m.lr}, {"loss", m.loss}};
  if (kind == ObjectiveKind::contrastive) {
    j["pos_sim"] = m.pos_sim;
    j["neg_sim"] = m.neg_sim;
    j["negatives"] = m.negatives;
    j["hard_sim"] = m.hard_sim;
  } else {
    j["pretext"] = m.pretext;
    j["consistency"] = m.consistency;
    j["accuracy"] = m.accuracy;
  }
  // NaN is not representable in JSON; keep the line parseable.
  for (auto& [k, v] : j.items()) {
    if (v.is_number_float() && !std::isfinite(v.get<double>())) v = nullptr;
  }
  return j.dump();
}

void sgd_update(std::span<float> params, std::span<float> velocity, std::span<const float> grad,
                double lr, double momentum, double weight_decay) {
  if (params.size() != velocity.size() || params.size() != grad.size()) {
    throw InputError("sgd_update: parameter, velocity and gradient sizes differ");
  }
  const float mu = static_cast<float>(momentum), wd = static_cast<float>(weight_decay),
              eta = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] + (grad[i] + wd * params[i]);
    params[i] -= eta * velocity[i];
  }
}

double scheduled_lr(double base, const std::vector<int>& milestones, double decay, int epoch) {
  double lr = base;
  for (int m : milestones) {
    if (epoch >= m) lr *= decay;
  }
  return lr;
}

std::optional<int> hard_negative_start(int video_frames, int length, int stride, int start,
                                       Rng& rng) {
  const int n = valid_start_count(video_frames, length, stride);
  const int gap = std::max(1, (length - 1) * stride / 2);
  std::vector<int> options;
  for (int s = 0; s < n; ++s) {
    if (std::abs(s - start) >= gap) options.push_back(s);
  }
  if (options.empty()) {
    for (int s = 0; s < n; ++s) {
      if (s != start) options.push_back(s);
    }
  }
  if (options.empty()) return std::nullopt;
  return options[uniform_int(rng, 0, static_cast<int>(options.size()) - 1)];
}

ContrastiveViews make_contrastive_views(const ExperimentConfig& cfg, const RawVideo& video,
                                        const RawVideo* donor, bool want_hard, Rng& rng) {
  const AugmentationSet aug = cfg.augmentation();
  const VideoClip x = sample_clip(video, cfg.clip_length, cfg.clip_stride, rng);
  const CropWindow w1 = draw_crop_window(x.shape(), cfg.clip_crop_height, cfg.clip_crop_width, rng);
  const CropWindow w2 = draw_crop_window(x.shape(), cfg.clip_crop_height, cfg.clip_crop_width, rng);
  const AugmentationParams a1 = draw_augmentation(aug, rng);
  const AugmentationParams a2 = draw_augmentation(aug, rng);

  ContrastiveViews v;
  v.original = apply_augmentation(crop(x, w1), a1);
  const VideoClip x_v = apply_augmentation(crop(x, w2), a2);

  const DistractorSpec spec = cfg.distractor_spec();
  std::optional<VideoClip> donor_clip;
  const bool uses_donor = spec.needs_donor() || spec.variant == DistractorVariant::cutmix;
  if (uses_donor && donor != nullptr) {
    const VideoClip d = sample_clip(*donor, cfg.clip_length, cfg.clip_stride, rng);
    donor_clip = apply_augmentation(crop(d, w2), a2);
  }
  DistractedClip dc = make_distractor(x_v, spec, donor_clip ? &*donor_clip : nullptr, rng);
  v.distracted = std::move(dc.clip);
  v.trace = dc.trace;

  if (want_hard) {
    if (const auto s2 = hard_negative_start(video.shape.frames, cfg.clip_length,
                                            cfg.clip_stride, x.start_index(), rng)) {
      const VideoClip other = sample_clip_at(video, *s2, cfg.clip_length, cfg.clip_stride);
      v.hard = apply_augmentation(crop(other, w1), a1);
    }
  }
  return v;
}

Trainer::Trainer(ExperimentConfig cfg, const Dataset& data)
    : cfg_(std::move(cfg)),
      data_(data),
      online_(cfg_.encoder_config()),
      momentum_(cfg_.encoder_config()),
      queue_(static_cast<std::size_t>(cfg_.objective_queue_size),
             static_cast<std::size_t>(cfg_.encoder_embedding_dim)) {
  cfg_.validate();
  const ClipShape vs = data_.manifest().video_shape();
  if (vs.frames < cfg_.clip_length * cfg_.clip_stride || vs.height < cfg_.clip_crop_height ||
      vs.width < cfg_.clip_crop_width) {
    throw ConfigError("dataset videos " + to_string(vs) + " too small for clip " +
                      std::to_string(cfg_.clip_length) + "x" + std::to_string(cfg_.clip_stride) +
                      " crop " + std::to_string(cfg_.clip_crop_height) + "x" +
                      std::to_string(cfg_.clip_crop_width));
  }
  train_ = data_.manifest().split_records(Split::train);
  if (train_.empty()) throw InputError("dataset has no training videos");

  Rng init(derive_seed(cfg_.run_seed, "encoder.init"));
  online_.initialize(init);
  std::copy(online_.parameters().begin(), online_.parameters().end(),
            momentum_.parameters().begin());
  Rng qrng(derive_seed(cfg_.run_seed, "queue.init"));
  queue_.fill_random(qrng);
  velocity_.assign(online_.parameter_count(), 0.0f);
  grad_.assign(online_.parameter_count(), 0.0f);
}

std::size_t Trainer::steps_per_epoch() const {
  const std::size_t b = static_cast<std::size_t>(cfg_.optim_batch_size);
  return (train_.size() + b - 1) / b;
}

const RawVideo* Trainer::pick_donor(const VideoRecord& self, Rng& rng) const {
  if (train_.size() < 2) return nullptr;
  for (;;) {
    const VideoRecord* r = train_[uniform_int(rng, 0, static_cast<int>(train_.size()) - 1)];
    if (r->id != self.id) return &data_.video(*r);
  }
}

void Trainer::check_finite(const StepMetrics& m,
                           const std::vector<const VideoRecord*>& batch) const {
  if (std::isfinite(m.loss)) return;
  double pnorm = 0.0, gnorm = 0.0;
  for (float p : online_.parameters()) pnorm += static_cast<double>(p) * p;
  for (float g : grad_) gnorm += static_cast<double>(g) * g;
  json ids = json::array();
  for (const auto* r : batch) ids.push_back(r->id);
  json dump{{"schema_version", kSchemaVersion},
            {"reason", "non-finite loss"},
            {"step", m.step},
            {"epoch", m.epoch},
            {"lr", m.lr},
            {"loss", std::isnan(m.loss) ? "nan" : "inf"},
            {"param_norm", std::sqrt(pnorm)},
            {"grad_norm", std::isfinite(gnorm) ? json(std::sqrt(gnorm)) : json("non-finite")},
            {"batch", ids},
            {"config_hash", cfg_.hash()},
            {"config", json::parse(cfg_.to_json())}};
  std::filesystem::create_directories(dump_dir_);
  const auto path = dump_dir_ / "nan_dump.json";
  std::ofstream(path) << dump.dump(2) << "\n";
  throw NumericError("non-finite loss at step " + std::to_string(m.step) + "; diagnostics in " +
                     path.string());
}

StepMetrics Trainer::step(const std::vector<const VideoRecord*>& batch) {
  if (batch.empty()) throw InputError("training step on an empty batch");
  ++step_;
  Rng rng(derive_seed(derive_seed(cfg_.run_seed, "train.step"), step_));
  std::fill(grad_.begin(), grad_.end(), 0.0f);
  StepMetrics m = cfg_.objective_kind == ObjectiveKind::contrastive ? contrastive_step(batch, rng)
                                                                   : pretext_step(batch, rng);
  if (metrics_ != nullptr) *metrics_ << metrics_json_line(m, cfg_.objective_kind) << "\n";
  return m;
}

StepMetrics Trainer::contrastive_step(const std::vector<const VideoRecord*>& batch, Rng& rng) {
  const bool use_hard = cfg_.be_active() && cfg_.objective_hard_negative;
  const std::uint64_t uid_base = step_ * static_cast<std::uint64_t>(batch.size()) * 4;

  std::vector<VideoClip> anchors;
  std::vector<std::uint64_t> anchor_uids;
  std::vector<TaggedEmbedding> keys;
  NegativeSets neg;
  neg.mask_same_video = cfg_.objective_mask_same_video;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VideoRecord& rec = *batch[i];
    Rng srng(derive_seed(rng(), i));
    const RawVideo* donor = pick_donor(rec, srng);
    ContrastiveViews v = make_contrastive_views(cfg_, data_.video(rec), donor, use_hard, srng);
    const std::uint64_t uid = uid_base + i * 4;
    keys.push_back(embed(momentum_, v.distracted, uid + 1));
    if (use_hard && v.hard) {
      neg.hard.push_back(embed(momentum_, *v.hard, uid + 2));
    } else {
      neg.hard.emplace_back();
    }
    anchors.push_back(std::move(v.original));
    anchor_uids.push_back(uid);
  }
  neg.shared = cfg_.objective_negatives == NegativeSource::queue ? queue_.snapshot() : keys;

  const ContrastiveObjective obj =
      contrastive_objective(online_, anchors, anchor_uids, keys, neg,
                            cfg_.objective_temperature, use_hard, std::span<float>(grad_));
  StepMetrics m;
  m.step = step_;
  m.epoch = epoch_;
  m.lr = scheduled_lr(cfg_.optim_lr, cfg_.optim_lr_steps, cfg_.optim_lr_decay, epoch_);
  m.loss = obj.loss;
  m.pos_sim = obj.pos_sim;
  m.neg_sim = obj.neg_sim;
  m.negatives = obj.negatives;
  m.hard_sim = obj.hard_sim;
  check_finite(m, batch);

  sgd_update(online_.parameters(), velocity_, grad_, m.lr, cfg_.optim_momentum,
             cfg_.optim_weight_decay);
  momentum_update(online_, momentum_, cfg_.objective_momentum);
  if (cfg_.objective_negatives == NegativeSource::queue) queue_.push(keys);
  return m;
}

StepMetrics Trainer::pretext_step(const std::vector<const VideoRecord*>& batch, Rng& rng) {
  const PretextTask task = cfg_.pretext_task();
  std::vector<PretextSample> samples;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VideoRecord& rec = *batch[i];
    Rng srng(derive_seed(rng(), i));
    const RawVideo* donor = pick_donor(rec, srng);
    ContrastiveViews v = make_contrastive_views(cfg_, data_.video(rec), donor, false, srng);
    samples.push_back({std::move(v.original), std::move(v.distracted)});
  }
  const double beta = cfg_.be_active() ? cfg_.objective_beta : 0.0;
  const PretextObjective obj = pretext_objective(online_, task, samples, beta,
                                                 cfg_.objective_consistency,
                                                 std::span<float>(grad_));
  StepMetrics m;
  m.step = step_;
  m.epoch = epoch_;
  m.lr = scheduled_lr(cfg_.optim_lr, cfg_.optim_lr_steps, cfg_.optim_lr_decay, epoch_);
  m.loss = obj.total;
  m.pretext = obj.pretext;
  m.consistency = obj.consistency;
  m.accuracy = obj.accuracy;
  check_finite(m, batch);
  sgd_update(online_.parameters(), velocity_, grad_, m.lr, cfg_.optim_momentum,
             cfg_.optim_weight_decay);
  return m;
}

void Trainer::run(const std::function<void(const StepMetrics&)>& on_step) {
  const std::size_t B = static_cast<std::size_t>(cfg_.optim_batch_size);
  for (; epoch_ < cfg_.optim_epochs; ++epoch_) {
    std::vector<const VideoRecord*> order = train_;
    Rng shuffle(derive_seed(derive_seed(cfg_.run_seed, "train.order"),
                            static_cast<std::uint64_t>(epoch_)));
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t b = 0; b < order.size(); b += B) {
      const std::vector<const VideoRecord*> batch(
          order.begin() + static_cast<std::ptrdiff_t>(b),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + B)));
      const StepMetrics m = step(batch);
      if (on_step) on_step(m);
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.step = step_;
  c.epoch = epoch_;
  c.online.assign(online_.parameters().begin(), online_.parameters().end());
  if (cfg_.objective_kind == ObjectiveKind::contrastive) {
    c.momentum.assign(momentum_.parameters().begin(), momentum_.parameters().end());
    c.queue_capacity = queue_.capacity();
    c.queue_head = queue_.head();
    c.queue = queue_.ring();
  }
  c.velocity = velocity_;
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (!(c.config.encoder_config() == cfg_.encoder_config())) {
    throw ConfigError("checkpoint encoder config differs from the trainer's");
  }
  if (c.online.size() != online_.parameter_count() ||
      c.velocity.size() != online_.parameter_count()) {
    throw InputError("checkpoint parameter count mismatch");
  }
  std::copy(c.online.begin(), c.online.end(), online_.parameters().begin());
  velocity_ = c.velocity;
  if (!c.momentum.empty()) {
    std::copy(c.momentum.begin(), c.momentum.end(), momentum_.parameters().begin());
  }
  if (!c.queue.empty()) queue_.restore(c.queue, c.queue_head);
  step_ = c.step;
  epoch_ = c.epoch;
}

}  // namespace bgerase
