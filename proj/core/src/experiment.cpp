#include "bgerase/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bgerase/errors.hpp"

namespace bgerase {

using nlohmann::json;
namespace fs = std::filesystem;

std::string dataset_mismatch(const DatasetConfig& want, const DatasetConfig& have) {
  std::ostringstream os;
  auto cmp = [&](const char* name, auto a, auto b) {
    if (a != b) os << " " << name << " (config " << a << ", on disk " << b << ")";
  };
  cmp("classes", want.num_classes, have.num_classes);
  cmp("videos_per_class", want.videos_per_class, have.videos_per_class);
  cmp("test_videos_per_class", want.test_videos_per_class, have.test_videos_per_class);
  cmp("bias", want.bias_rho, have.bias_rho);
  cmp("frames", want.frames, have.frames);
  cmp("height", want.height, have.height);
  cmp("width", want.width, have.width);
  cmp("seed", want.seed, have.seed);
  cmp("camera_pan", want.camera_pan, have.camera_pan);
  cmp("noise_sigma", want.noise_sigma, have.noise_sigma);
  cmp("sprite_scale_lo", want.sprite_scale_lo, have.sprite_scale_lo);
  cmp("sprite_scale_hi", want.sprite_scale_hi, have.sprite_scale_hi);
  cmp("speed_lo", want.speed_lo, have.speed_lo);
  cmp("speed_hi", want.speed_hi, have.speed_hi);
  cmp("tempo", want.tempo, have.tempo);
  cmp("actor_variety", want.actor_variety, have.actor_variety);
  cmp("background_saturation", want.background_saturation, have.background_saturation);
  return os.str();
}

namespace {

json probe_json(const ProbeResult& r) {
  return json{{"split", r.split},
              {"top1", r.top1},
              {"per_class_accuracy", r.per_class_accuracy},
              {"per_class_count", r.per_class_count},
              {"num_clips_averaged", r.num_clips_averaged}};
}

}  // namespace

Dataset ensure_dataset(const ExperimentConfig& cfg, const fs::path& root) {
  const DatasetConfig want = cfg.dataset_config();
  if (fs::exists(root / "manifest.json")) {
    Dataset d = Dataset::open(root);
    const std::string diff = dataset_mismatch(want, d.manifest().config);
    if (!diff.empty()) {
      throw ConfigError("dataset at " + root.string() + " was generated with other settings:" +
                        diff);
    }
    return d;
  }
  generate_dataset(want, root);
  return Dataset::open(root);
}

Checkpoint pretrain(const ExperimentConfig& cfg, const Dataset& data, const fs::path& out_dir,
                    const ProgressFn& progress) {
  Trainer trainer(cfg, data);
  std::ofstream metrics;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics.open(out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (out_dir / "metrics.jsonl").string());
    trainer.set_metrics_stream(&metrics);
    trainer.set_dump_dir(out_dir);
    std::ofstream(out_dir / "config.json") << cfg.to_json(2) << "\n";
  }
  const std::size_t per_epoch = trainer.steps_per_epoch();
  double epoch_loss = 0.0;
  std::size_t in_epoch = 0;
  trainer.run([&](const StepMetrics& m) {
    epoch_loss += m.loss;
    if (++in_epoch == per_epoch) {
      if (progress) {
        std::ostringstream os;
        os << "epoch " << m.epoch + 1 << "/" << cfg.optim_epochs << " loss " << std::fixed
           << std::setprecision(4) << epoch_loss / static_cast<double>(in_epoch);
        progress(os.str());
      }
      epoch_loss = 0.0;
      in_epoch = 0;
    }
  });
  Checkpoint ckpt = trainer.checkpoint();
  if (!out_dir.empty()) save_checkpoint(out_dir / "checkpoint.bgck", ckpt);
  return ckpt;
}

ProbeConfig probe_config(const ExperimentConfig& cfg) {
  ProbeConfig p;
  p.iterations = cfg.eval_probe_iterations;
  p.lr = cfg.eval_probe_lr;
  p.l2 = cfg.eval_probe_l2;
  return p;
}

Evaluator::Evaluator(Encoder<float> encoder, ExperimentConfig cfg, const Dataset& data)
    : encoder_(std::move(encoder)), cfg_(std::move(cfg)), data_(data) {}

const VideoFeatures& Evaluator::features(Split split, ProbeFeatures source) {
  const auto key = std::make_pair(split, source);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto records = data_.manifest().split_records(split);
  if (records.empty()) {
    throw InputError("split '" + std::string(split_name(split)) + "' has no videos");
  }
  VideoFeatures f = extract_features(encoder_, data_, records, feature_request(cfg_, source));
  return cache_.emplace(key, std::move(f)).first->second;
}

const LinearProbe& Evaluator::probe() {
  if (!probe_) {
    const VideoFeatures& train = features(Split::train, cfg_.eval_probe_features);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (std::size_t v = 0; v < train.clips.size(); ++v) {
      for (const auto& c : train.clips[v]) {
        x.push_back(c);
        y.push_back(train.labels[v]);
      }
    }
    probe_ = std::make_unique<LinearProbe>(
        LinearProbe::fit(x, y, data_.manifest().config.num_classes, probe_config(cfg_)));
  }
  return *probe_;
}

ProbeResult Evaluator::probe_split(Split test) {
  const LinearProbe& p = probe();
  return probe_predict(p, features(test, cfg_.eval_probe_features),
                       data_.manifest().config.num_classes, std::string(split_name(test)));
}

ProbeResult Evaluator::static_probe() {
  return cross_fit_probe(features(Split::test_static, cfg_.eval_probe_features),
                         data_.manifest().config.num_classes, 2, probe_config(cfg_),
                         std::string(split_name(Split::test_static)));
}

RecallTable Evaluator::retrieval(Split gallery, Split query) {
  auto center = [&](Split s) {
    const auto records = data_.manifest().split_records(s);
    if (records.empty()) {
      throw InputError("split '" + std::string(split_name(s)) + "' has no videos");
    }
    FeatureRequest req = feature_request(cfg_, ProbeFeatures::backbone);
    req.clips = 1;
    VideoFeatures f = extract_features(encoder_, data_, records, req);
    std::vector<std::vector<double>> x;
    for (auto& c : f.clips) x.push_back(std::move(c.front()));
    return std::make_pair(std::move(x), std::move(f.labels));
  };
  const auto [gx, gy] = center(gallery);
  if (gallery == query) return retrieval_recall(gx, gy, gx, gy, cfg_.eval_retrieval_k);
  const auto [qx, qy] = center(query);
  return retrieval_recall(gx, gy, qx, qy, cfg_.eval_retrieval_k);
}

DiagnoseResult diagnose(Evaluator& baseline, Evaluator& be, Split split, Improvement mode) {
  DiagnoseResult r;
  r.baseline = baseline.probe_split(split);
  r.be = be.probe_split(split);
  r.static_probe = baseline.static_probe();
  r.diagnostic = bias_correlation(r.baseline, r.be, r.static_probe, mode);
  return r;
}

std::string diagnose_json(const DiagnoseResult& r, const std::string& baseline_hash,
                          const std::string& be_hash) {
  json j{{"schema_version", kSchemaVersion},
         {"baseline_checkpoint", baseline_hash},
         {"be_checkpoint", be_hash},
         {"baseline", probe_json(r.baseline)},
         {"be", probe_json(r.be)},
         {"static", probe_json(r.static_probe)},
         {"diagnostic", json::parse(bias_json(r.diagnostic))}};
  j["diagnostic"].erase("schema_version");
  return j.dump(2);
}

ExperimentConfig ablation_config(const ExperimentConfig& base, DistractorVariant v) {
  ExperimentConfig c = base;
  c.distractor_variant = v;
  c.objective_be = v != DistractorVariant::none;
  return c;
}

std::vector<AblationRow> ablate_distractors(const ExperimentConfig& cfg, const Dataset& data,
                                            const fs::path& out_dir,
                                            const ProgressFn& progress) {
  std::vector<AblationRow> rows;
  for (DistractorVariant v : all_variants()) {
    const ExperimentConfig c = ablation_config(cfg, v);
    const std::string name(variant_name(v));
    const fs::path dir = out_dir.empty() ? fs::path{} : out_dir / name;
    auto tagged = [&](const std::string& msg) {
      if (progress) progress(name + ": " + msg);
    };
    AblationRow row;
    row.variant = v;
    row.checkpoint = pretrain(c, data, dir, tagged);
    Evaluator ev(row.checkpoint.encoder(), c, data);
    row.antibias = ev.probe_split(Split::test_antibias);
    row.inbias = ev.probe_split(Split::test_inbias);
    if (!dir.empty()) {
      const MetricsSummary s = summarize_metrics(dir / "metrics.jsonl");
      row.final_loss = s.epoch_mean_loss.empty() ? s.last_loss : s.epoch_mean_loss.back();
    }
    tagged("anti-bias top1 " + std::to_string(row.antibias.top1) + ", in-bias top1 " +
           std::to_string(row.inbias.top1));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_json(const std::vector<AblationRow>& rows, const ExperimentConfig& cfg) {
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back(json{{"variant", variant_name(r.variant)},
                         {"antibias_top1", r.antibias.top1},
                         {"inbias_top1", r.inbias.top1},
                         {"final_loss", r.final_loss},
                         {"checkpoint_hash", r.checkpoint.content_hash},
                         {"config_hash", r.checkpoint.config.hash()}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"seed", cfg.run_seed},
              {"base_config_hash", cfg.hash()},
              {"rows", table}}
      .dump(2);
}

std::string ablation_text(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "variant" << std::right << std::setw(12) << "anti-bias"
     << std::setw(12) << "in-bias" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << variant_name(r.variant) << std::right << std::fixed
       << std::setprecision(2) << std::setw(11) << 100.0 * r.antibias.top1 << "%" << std::setw(11)
       << 100.0 * r.inbias.top1 << "%\n";
  }
  return os.str();
}

MetricsSummary summarize_metrics(const fs::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw IoError("cannot read metrics log " + jsonl.string());
  MetricsSummary s;
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw InputError(jsonl.string() + ":" + std::to_string(lineno) + ": not valid JSON");
    }
    if (!j.contains("schema_version") || !j.contains("epoch") || !j.contains("loss")) {
      throw InputError(jsonl.string() + ":" + std::to_string(lineno) +
                       ": missing schema_version/epoch/loss");
    }
    const int epoch = j.at("epoch").get<int>();
    const double loss = j.at("loss").is_null() ? std::nan("") : j.at("loss").get<double>();
    if (!std::isfinite(loss)) s.warnings.push_back("non-finite loss at line " + std::to_string(lineno));
    if (s.steps == 0) s.first_loss = loss;
    s.last_loss = loss;
    ++s.steps;
    if (epoch < 0) throw InputError("negative epoch in metrics log");
    if (static_cast<std::size_t>(epoch) >= sums.size()) {
      sums.resize(epoch + 1, 0.0);
      counts.resize(epoch + 1, 0);
    }
    sums[epoch] += loss;
    ++counts[epoch];
  }
  s.epochs = static_cast<int>(sums.size());
  for (std::size_t e = 0; e < sums.size(); ++e) {
    s.epoch_mean_loss.push_back(counts[e] ? sums[e] / static_cast<double>(counts[e]) : std::nan(""));
  }
  return s;
}

std::string metrics_summary_json(const MetricsSummary& s) {
  json means = json::array();
  for (double v : s.epoch_mean_loss) means.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return json{{"schema_version", kSchemaVersion},
              {"steps", s.steps},
              {"epochs", s.epochs},
              {"first_loss", std::isfinite(s.first_loss) ? json(s.first_loss) : json(nullptr)},
              {"last_loss", std::isfinite(s.last_loss) ? json(s.last_loss) : json(nullptr)},
              {"epoch_mean_loss", means},
              {"warnings", s.warnings}}
      .dump(2);
}

std::string metrics_summary_text(const MetricsSummary& s) {
  std::ostringstream os;
  os << "steps " << s.steps << "  epochs " << s.epochs << "  first loss " << std::fixed
     << std::setprecision(4) << s.first_loss << "  last loss " << s.last_loss << "\n";
  for (std::size_t e = 0; e < s.epoch_mean_loss.size(); ++e) {
    os << std::setw(6) << e << std::setw(12) << s.epoch_mean_loss[e] << "\n";
  }
  for (const auto& w : s.warnings) os << "warning: " << w << "\n";
  return os.str();
}

// -- full fine-tuning -------------------------------------------------------------

FineTuneResult fine_tune(const Encoder<float>& pretrained, const ExperimentConfig& cfg,
                         const Dataset& data, const ProgressFn& progress) {
  const int K = data.manifest().config.num_classes;
  EncoderConfig ec = pretrained.config();
  ec.classifier_classes = K;
  FineTuneResult out{Encoder<float>(ec), {}, 0.0};
  Encoder<float>& enc = out.encoder;
  Rng init(derive_seed(cfg.run_seed, "finetune.init"));
  enc.initialize(init);
  // Everything but a differently shaped classifier head carries over.
  for (const ParamInfo& p : pretrained.layout()) {
    const auto& dst = enc.layout();
    const auto it = std::find_if(dst.begin(), dst.end(), [&](const ParamInfo& q) {
      return q.name == p.name && q.shape == p.shape;
    });
    if (it == dst.end()) continue;
    std::copy_n(pretrained.parameters().begin() + static_cast<std::ptrdiff_t>(p.offset), p.size,
                enc.parameters().begin() + static_cast<std::ptrdiff_t>(it->offset));
  }

  std::vector<const VideoRecord*> train = data.manifest().split_records(Split::train);
  if (train.empty()) throw InputError("dataset has no training videos");
  const AugmentationSet aug = cfg.augmentation();
  const std::size_t B = static_cast<std::size_t>(cfg.optim_batch_size);
  std::vector<float> grad(enc.parameter_count()), velocity(enc.parameter_count(), 0.0f);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.eval_finetune_epochs; ++epoch) {
    Rng shuffle(derive_seed(derive_seed(cfg.run_seed, "finetune.order"),
                            static_cast<std::uint64_t>(epoch)));
    std::shuffle(train.begin(), train.end(), shuffle);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t b = 0; b < train.size(); b += B) {
      const std::size_t end = std::min(train.size(), b + B);
      const double inv = 1.0 / static_cast<double>(end - b);
      Rng rng(derive_seed(derive_seed(cfg.run_seed, "finetune.step"), ++step));
      std::fill(grad.begin(), grad.end(), 0.0f);
      for (std::size_t i = b; i < end; ++i) {
        const VideoRecord& rec = *train[i];
        const VideoClip x = sample_clip(data.video(rec), cfg.clip_length, cfg.clip_stride, rng);
        const CropWindow w =
            draw_crop_window(x.shape(), cfg.clip_crop_height, cfg.clip_crop_width, rng);
        const VideoClip view = apply_augmentation(crop(x, w), draw_augmentation(aug, rng));
        EncoderTape<float> tape;
        const FeatureMap<float> f = enc.forward(view, &tape);
        const Classification<float> cl = enc.classify(f);
        const CrossEntropy ce = softmax_cross_entropy(
            std::vector<double>(cl.logits.begin(), cl.logits.end()), rec.class_label);
        loss_sum += ce.loss;
        correct += ce.predicted == rec.class_label;
        std::vector<float> g(K);
        for (int k = 0; k < K; ++k) g[k] = static_cast<float>(ce.grad[k] * inv);
        enc.backward(tape, enc.classify_backward(f.shape, cl, g, grad), grad);
      }
      sgd_update(enc.parameters(), velocity, grad, cfg.eval_finetune_lr, cfg.optim_momentum,
                 cfg.optim_weight_decay);
    }
    const double mean = loss_sum / static_cast<double>(train.size());
    if (!std::isfinite(mean)) throw NumericError("fine-tuning loss became non-finite");
    out.epoch_loss.push_back(mean);
    out.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    if (progress) {
      std::ostringstream os;
      os << "fine-tune epoch " << epoch + 1 << "/" << cfg.eval_finetune_epochs << " loss "
         << std::setprecision(4) << mean << " train acc " << out.train_accuracy;
      progress(os.str());
    }
  }
  return out;
}

ProbeResult fine_tune_predict(const Encoder<float>& tuned, const ExperimentConfig& cfg,
                              const Dataset& data, Split split) {
  const int K = data.manifest().config.num_classes;
  if (tuned.config().classifier_classes != K) {
    throw InputError("encoder has no classifier head over " + std::to_string(K) + " classes");
  }
  const auto records = data.manifest().split_records(split);
  if (records.empty()) throw InputError("split '" + std::string(split_name(split)) + "' has no videos");
  std::vector<std::vector<double>> scores(records.size(), std::vector<double>(K, 0.0));
  std::vector<int> labels(records.size());
  for (std::size_t v = 0; v < records.size(); ++v) {
    const RawVideo& raw = data.video(*records[v]);
    labels[v] = records[v]->class_label;
    for (int s : uniform_clip_starts(raw.shape.frames, cfg.clip_length, cfg.clip_stride,
                                     cfg.eval_clips)) {
      VideoClip clip = sample_clip_at(raw, s, cfg.clip_length, cfg.clip_stride);
      clip = crop(clip, center_crop_window(clip.shape(), cfg.clip_crop_height, cfg.clip_crop_width));
      const Classification<float> cl = tuned.classify(tuned.forward(clip));
      for (int k = 0; k < K; ++k) scores[v][k] += cl.logits[k];
    }
  }
  return score_videos(scores, labels, K, std::string(split_name(split)), cfg.eval_clips);
}

}  // namespace bgerase
