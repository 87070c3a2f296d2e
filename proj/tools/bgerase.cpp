#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bgerase/checkpoint.hpp"
#include "bgerase/config.hpp"
#include "bgerase/errors.hpp"
#include "bgerase/eval.hpp"
#include "bgerase/experiment.hpp"
#include "bgerase/synthdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bgerase;

namespace {

constexpr int kUsageExit = 64;

/// String-valued flags that write straight into a config key after parsing.
class KeyFlags {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    storage_.emplace_back();
    app->add_option(flag, storage_.back(), help + " [" + key + "]");
    bound_.emplace_back(key, &storage_.back());
  }

  void apply(ExperimentConfig& cfg, bool& data_keys_set) const {
    for (const auto& [key, value] : bound_) {
      if (value->empty()) continue;
      cfg.set(key, *value);
      if (key.rfind("data.", 0) == 0 && key != "data.root") data_keys_set = true;
    }
  }

 private:
  std::deque<std::string> storage_;
  std::vector<std::pair<std::string, std::string*>> bound_;
};

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string data;
  std::string format = "json";
  bool quiet = false;
  KeyFlags keys;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "JSON file of config keys")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "Override one config key, key=value (repeatable)");
  app->add_option("--data", c.data, "Dataset root (default: $BGERASE_DATA_DIR, then ./data)");
  app->add_option("--format", c.format, "Output format")
      ->check(CLI::IsMember({"json", "text"}));
  app->add_flag("--quiet", c.quiet, "Suppress progress messages");
}

void add_run_flags(CLI::App* app, Common& c) {
  c.keys.add(app, "--seed", "run.seed", "Master seed");
  c.keys.add(app, "--threads", "run.threads", "Worker threads, 0 = all cores");
}

void add_training_flags(CLI::App* app, Common& c) {
  c.keys.add(app, "--objective", "objective.kind", "contrastive | pretext");
  c.keys.add(app, "--distractor", "distractor.variant",
             "none | intra_frame | inter_frame | gaussian | mixup | cutmix");
  c.keys.add(app, "--be", "objective.be", "Background erasing on | off");
  c.keys.add(app, "--hard-negative", "objective.hard_negative", "on | off");
  c.keys.add(app, "--gamma", "distractor.gamma", "Upper bound of the blend weight");
  c.keys.add(app, "--beta", "objective.beta", "Consistency weight for pretext runs");
  c.keys.add(app, "--pretext", "objective.pretext", "rotation4 | clip_order3");
  c.keys.add(app, "--temperature", "objective.temperature", "InfoNCE temperature");
  c.keys.add(app, "--negatives", "objective.negatives", "queue | batch");
  c.keys.add(app, "--queue-size", "objective.queue_size", "Negative queue capacity");
  c.keys.add(app, "--epochs", "optim.epochs", "Training epochs");
  c.keys.add(app, "--batch-size", "optim.batch_size", "Videos per step");
  c.keys.add(app, "--lr", "optim.lr", "Base learning rate");
}

void add_data_flags(CLI::App* app, Common& c) {
  c.keys.add(app, "--classes", "data.classes", "Number of action classes");
  c.keys.add(app, "--videos-per-class", "data.videos_per_class", "Training videos per class");
  c.keys.add(app, "--test-videos-per-class", "data.test_videos_per_class",
             "Videos per class in each test split");
  c.keys.add(app, "--bias", "data.bias", "Probability a video shows its class background");
  c.keys.add(app, "--frames", "data.frames", "Frames per video");
  c.keys.add(app, "--height", "data.height", "Frame height");
  c.keys.add(app, "--width", "data.width", "Frame width");
}

void add_eval_flags(CLI::App* app, Common& c) {
  c.keys.add(app, "--features", "eval.probe_features", "embedding | backbone");
  c.keys.add(app, "--clips", "eval.clips", "Clips averaged per test video");
}

/// Defaults < config file < flags. Reports whether any data.* key was given.
ExperimentConfig build_config(const Common& c, bool* data_keys_set = nullptr,
                              bool data_only = false) {
  ExperimentConfig cfg;
  bool data_set = false;
  if (!c.config_file.empty()) {
    cfg.merge_file(c.config_file);
    const json j = json::parse(std::ifstream(c.config_file));
    for (const auto& [k, v] : j.items()) {
      if (k.rfind("data.", 0) == 0 && k != "data.root") data_set = true;
    }
  }
  c.keys.apply(cfg, data_set);
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    cfg.set(key, kv.substr(eq + 1));
    if (key.rfind("data.", 0) == 0 && key != "data.root") data_set = true;
  }
  if (!c.data.empty()) cfg.data_root = c.data;
  if (data_only) {
    cfg.dataset_config().validate();
  } else {
    cfg.validate();
  }
  if (data_keys_set) *data_keys_set = data_set;
  return cfg;
}

/// Evaluation commands take the training config from the checkpoint; only
/// eval.*, run.threads and data.root may be overridden.
ExperimentConfig eval_config(const Checkpoint& ckpt, const Common& c) {
  const ExperimentConfig flags = build_config(c);
  const ExperimentConfig defaults;
  ExperimentConfig cfg = ckpt.config;
  const json f = json::parse(flags.to_json()), d = json::parse(defaults.to_json());
  for (const auto& [k, v] : f.items()) {
    if (v == d.at(k)) continue;
    if (k.rfind("eval.", 0) == 0 || k == "run.threads" || k == "data.root") {
      std::string value;
      if (v.is_string()) {
        value = v.get<std::string>();
      } else if (v.is_array()) {
        for (const auto& e : v) value += (value.empty() ? "" : ",") + e.dump();
      } else {
        value = v.dump();
      }
      cfg.set(k, value);
    } else {
      throw ConfigError("key '" + k + "' is fixed by the checkpoint and cannot be overridden");
    }
  }
  if (!c.data.empty()) cfg.data_root = c.data;
  cfg.validate();
  return cfg;
}

Dataset open_dataset(const ExperimentConfig& cfg) {
  const fs::path root = resolve_data_root(cfg);
  if (!fs::exists(root / "manifest.json")) {
    throw IoError("no dataset at " + root.string() + " (run gen-data or set --data)");
  }
  return Dataset::open(root);
}

/// The dataset a checkpoint was trained on must match the one being evaluated.
void check_dataset(const ExperimentConfig& cfg, const Dataset& data) {
  const std::string diff = dataset_mismatch(cfg.dataset_config(), data.manifest().config);
  if (!diff.empty()) {
    std::cerr << "warning: dataset at " << data.root().string()
              << " differs from the checkpoint's training data:" << diff << "\n";
  }
}

ProgressFn progress_fn(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

void emit(const Common& c, const json& j, const std::string& text) {
  if (c.format == "text") {
    std::cout << text;
  } else {
    std::cout << j.dump(2) << "\n";
  }
}

json with_schema(json j) {
  j["schema_version"] = kSchemaVersion;
  return j;
}

// -- commands ---------------------------------------------------------------

struct GenDataArgs {
  Common c;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  ExperimentConfig cfg = build_config(a.c, nullptr, true);
  const fs::path root = a.out.empty() ? resolve_data_root(cfg) : fs::path(a.out);
  const SyntheticDatasetManifest m = generate_dataset(cfg.dataset_config(), root);
  json splits = json::object();
  for (Split s : all_splits()) splits[std::string(split_name(s))] = m.split_records(s).size();
  const json out = with_schema({{"manifest", (root / "manifest.json").string()},
                                {"config_hash", cfg.hash()},
                                {"videos", m.records.size()},
                                {"splits", splits}});
  emit(a.c, out, "wrote " + std::to_string(m.records.size()) + " videos to " + root.string() +
                     "\n");
  return 0;
}

struct PretrainArgs {
  Common c;
  std::string out;
};

Dataset training_dataset(ExperimentConfig& cfg, bool data_keys_set) {
  const fs::path root = resolve_data_root(cfg);
  if (fs::exists(root / "manifest.json") && !data_keys_set) {
    Dataset d = Dataset::open(root);
    adopt_dataset_config(cfg, d.manifest().config);
    return d;
  }
  return ensure_dataset(cfg, root);
}

int cmd_pretrain(const PretrainArgs& a) {
  bool data_keys_set = false;
  ExperimentConfig cfg = build_config(a.c, &data_keys_set);
  const Dataset data = training_dataset(cfg, data_keys_set);
  Checkpoint ckpt = pretrain(cfg, data, a.out, progress_fn(a.c));
  const MetricsSummary s = summarize_metrics(fs::path(a.out) / "metrics.jsonl");
  const json out = with_schema({{"checkpoint", (fs::path(a.out) / "checkpoint.bgck").string()},
                                {"metrics", (fs::path(a.out) / "metrics.jsonl").string()},
                                {"config_hash", cfg.hash()},
                                {"content_hash", ckpt.content_hash},
                                {"steps", ckpt.step},
                                {"final_epoch_loss", s.epoch_mean_loss.empty()
                                                         ? json(nullptr)
                                                         : json(s.epoch_mean_loss.back())}});
  emit(a.c, out, "checkpoint " + out["checkpoint"].get<std::string>() + "  hash " +
                     ckpt.content_hash + "\n");
  return 0;
}

struct ProbeArgs {
  Common c;
  std::string checkpoint;
  std::vector<std::string> splits{"test_inbias", "test_antibias"};
  bool fine_tune = false;
};

int cmd_probe(const ProbeArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ExperimentConfig cfg = eval_config(ckpt, a.c);
  const Dataset data = open_dataset(cfg);
  check_dataset(ckpt.config, data);
  std::optional<Evaluator> ev;
  std::optional<FineTuneResult> tuned;
  if (a.fine_tune) {
    tuned = fine_tune(ckpt.encoder(), cfg, data, progress_fn(a.c));
  } else {
    ev.emplace(ckpt.encoder(), cfg, data);
  }
  json results = json::array();
  std::string text;
  for (const std::string& name : a.splits) {
    if (a.fine_tune && name == "test_static") {
      throw InputError("test_static is only defined for the linear probe");
    }
    const ProbeResult r = a.fine_tune ? fine_tune_predict(tuned->encoder, cfg, data, parse_split(name))
                          : name == "test_static" ? ev->static_probe()
                                                  : ev->probe_split(parse_split(name));
    json j = json::parse(probe_result_json(r));
    j.erase("schema_version");
    results.push_back(j);
    text += probe_result_text(r);
  }
  emit(a.c,
       with_schema({{"checkpoint_hash", ckpt.content_hash},
                    {"config_hash", cfg.hash()},
                    {"protocol", a.fine_tune ? "fine_tune" : "linear_probe"},
                    {"features", probe_features_name(cfg.eval_probe_features)},
                    {"results", results}}),
       text);
  return 0;
}

struct RetrieveArgs {
  Common c;
  std::string checkpoint;
  std::string gallery = "train";
  std::string query = "test_inbias";
  std::string k;
};

int cmd_retrieve(RetrieveArgs& a) {
  if (!a.k.empty()) a.c.sets.push_back("eval.retrieval_k=" + a.k);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ExperimentConfig cfg = eval_config(ckpt, a.c);
  const Dataset data = open_dataset(cfg);
  check_dataset(ckpt.config, data);
  Evaluator ev(ckpt.encoder(), cfg, data);
  const RecallTable t = ev.retrieval(parse_split(a.gallery), parse_split(a.query));
  for (const auto& w : t.warnings) std::cerr << "warning: " << w << "\n";
  json j = json::parse(recall_json(t));
  j["checkpoint_hash"] = ckpt.content_hash;
  j["config_hash"] = cfg.hash();
  j["gallery"] = a.gallery;
  j["query"] = a.query;
  emit(a.c, j, recall_text(t));
  return 0;
}

struct DiagnoseArgs {
  Common c;
  std::string baseline;
  std::string be;
  std::string split = "test_antibias";
  std::string improvement = "absolute";
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const Checkpoint base = load_checkpoint(a.baseline);
  const Checkpoint be = load_checkpoint(a.be);
  const std::string diff =
      dataset_mismatch(base.config.dataset_config(), be.config.dataset_config());
  if (!diff.empty()) {
    throw ConfigError("baseline and BE checkpoints were trained on different datasets:" + diff);
  }
  const ExperimentConfig base_cfg = eval_config(base, a.c);
  const ExperimentConfig be_cfg = eval_config(be, a.c);
  const Dataset data = open_dataset(base_cfg);
  check_dataset(base.config, data);
  Evaluator eb(base.encoder(), base_cfg, data);
  Evaluator ee(be.encoder(), be_cfg, data);
  const Improvement mode =
      a.improvement == "relative" ? Improvement::relative : Improvement::absolute;
  const DiagnoseResult r = diagnose(eb, ee, parse_split(a.split), mode);
  const json j = json::parse(diagnose_json(r, base.content_hash, be.content_hash));
  std::ostringstream os;
  os << "baseline " << r.baseline.top1 << "  be " << r.be.top1 << "  static "
     << r.static_probe.top1 << "\n";
  const PearsonResult& p = r.diagnostic.correlation;
  if (p.defined) {
    os << "pearson rho " << p.rho << "  p " << p.p_value << "  n " << p.n << "\n";
  } else {
    os << "pearson undefined: " << p.error << "\n";
  }
  emit(a.c, j, os.str());
  return 0;
}

struct SaliencyArgs {
  Common c;
  std::string checkpoint;
  std::string video;
  std::string split = "test_antibias";
  std::string attack = "none";
  double lambda = 0.3;
  int frame = -1;
  int start = -1;
  std::string out = "saliency";
  bool predict = false;
};

int cmd_saliency(const SaliencyArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ExperimentConfig cfg = eval_config(ckpt, a.c);
  const Dataset data = open_dataset(cfg);
  const VideoRecord* rec = nullptr;
  if (a.video.empty()) {
    const auto records = data.manifest().split_records(parse_split(a.split));
    if (records.empty()) throw InputError("split '" + a.split + "' has no videos");
    rec = records.front();
  } else {
    rec = &data.manifest().record(a.video);
  }
  const RawVideo& raw = data.video(*rec);
  const int span_starts = valid_start_count(raw.shape.frames, cfg.clip_length, cfg.clip_stride);
  if (span_starts <= 0) throw InputError("video too short for the configured clip");
  const int start = a.start >= 0 ? a.start : (span_starts - 1) / 2;
  if (start >= span_starts) throw InputError("--start beyond the last valid clip start");
  const VideoClip full = sample_clip_at(raw, start, cfg.clip_length, cfg.clip_stride);
  const VideoClip clip =
      crop(full, center_crop_window(full.shape(), cfg.clip_crop_height, cfg.clip_crop_width));
  const Encoder<float> enc = ckpt.encoder();
  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);

  json j{{"video", rec->id},
         {"class_label", rec->class_label},
         {"clip_start", start},
         {"checkpoint_hash", ckpt.content_hash},
         {"config_hash", cfg.hash()}};
  std::ostringstream text;
  const SaliencyMap before = saliency_map(enc, clip);
  std::vector<std::string> pngs;
  for (const auto& p : write_saliency_pngs(out_dir, "clean", clip, before)) pngs.push_back(p);
  if (before.degenerate) j["warning"] = before.warning;

  if (a.attack != "none") {
    AttackSpec spec;
    spec.kind = parse_attack(a.attack);
    spec.lambda = a.lambda;
    spec.frame = a.frame;
    spec.seed = derive_seed(cfg.run_seed, "saliency.attack");
    std::optional<Evaluator> ev;
    const LinearProbe* probe = nullptr;
    if (a.predict) {
      ev.emplace(enc, cfg, data);
      probe = &ev->probe();
    }
    const AdversarialReport r = adversarial_probe(enc, clip, spec, probe, cfg.eval_probe_features);
    const VideoClip attacked = apply_attack(clip, spec);
    for (const auto& p : write_saliency_pngs(out_dir, "attacked", attacked, r.after)) {
      pngs.push_back(p);
    }
    j["attack"] = {{"kind", attack_name(spec.kind)}, {"lambda", spec.lambda}, {"frame", spec.frame}};
    j["iou_top10"] = r.iou_top10;
    j["embedding_cosine"] = r.embedding_cosine;
    if (r.prediction_before) j["prediction_before"] = *r.prediction_before;
    if (r.prediction_after) j["prediction_after"] = *r.prediction_after;
    text << "attack " << a.attack << "  top-10% IoU " << r.iou_top10 << "  embedding cosine "
         << r.embedding_cosine << "\n";
  }
  j["pngs"] = pngs;
  text << "wrote " << pngs.size() << " PNGs to " << out_dir.string() << "\n";
  std::ofstream(out_dir / "report.json") << with_schema(j).dump(2) << "\n";
  emit(a.c, with_schema(j), text.str());
  return 0;
}

struct AblateArgs {
  Common c;
  std::string out;
};

int cmd_ablate(const AblateArgs& a) {
  bool data_keys_set = false;
  ExperimentConfig cfg = build_config(a.c, &data_keys_set);
  const Dataset data = training_dataset(cfg, data_keys_set);
  const auto rows = ablate_distractors(cfg, data, a.out, progress_fn(a.c));
  const std::string j = ablation_json(rows, cfg);
  if (!a.out.empty()) std::ofstream(fs::path(a.out) / "ablation.json") << j << "\n";
  emit(a.c, json::parse(j), ablation_text(rows));
  return 0;
}

struct DescribeArgs {
  Common c;
  std::string path;
};

int cmd_describe(const DescribeArgs& a) {
  const fs::path p = a.path;
  if (fs::is_directory(p) || p.extension() == ".json") {
    const Dataset d = Dataset::open(p);
    const auto& m = d.manifest();
    json splits = json::object();
    for (Split s : all_splits()) splits[std::string(split_name(s))] = m.split_records(s).size();
    const json gen = json::parse(manifest_to_json(m)).at("generator");
    const json j = with_schema({{"dataset", d.root().string()},
                                {"version", m.version},
                                {"generator", gen},
                                {"generator_hash", hex_digest(gen.dump())},
                                {"videos", m.records.size()},
                                {"splits", splits}});
    emit(a.c, j, j.dump(2) + "\n");
    return 0;
  }
  const json j = json::parse(describe_checkpoint(p));
  std::ostringstream os;
  os << "checkpoint " << p.string() << "\n  content hash " << j.at("content_hash").get<std::string>()
     << "\n  config hash  " << j.at("config_hash").get<std::string>() << "\n  seed "
     << j.at("seed") << "  step " << j.at("step") << "  epoch " << j.at("epoch")
     << "\n  parameters " << j.at("parameter_count") << "\n";
  emit(a.c, j, os.str());
  return 0;
}

struct ReportArgs {
  Common c;
  std::string path;
};

int cmd_report(const ReportArgs& a) {
  fs::path p = a.path;
  if (fs::is_directory(p)) p /= "metrics.jsonl";
  const MetricsSummary s = summarize_metrics(p);
  emit(a.c, json::parse(metrics_summary_json(s)), metrics_summary_text(s));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Background erasing for self-supervised video representation learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bgerase 0.1.0");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render the synthetic biased video dataset");
  add_common(gen_cmd, gen.c);
  add_run_flags(gen_cmd, gen.c);
  add_data_flags(gen_cmd, gen.c);
  gen.c.keys.add(gen_cmd, "--camera-pan", "data.camera_pan", "Max background drift, px/frame");
  gen.c.keys.add(gen_cmd, "--tempo", "data.tempo", "Speed modulation within a video");
  gen_cmd->add_option("--out", gen.out, "Dataset directory (default: the data root)");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Self-supervised pretraining");
  add_common(pre_cmd, pre.c);
  add_run_flags(pre_cmd, pre.c);
  add_data_flags(pre_cmd, pre.c);
  add_training_flags(pre_cmd, pre.c);
  pre_cmd->add_option("--out", pre.out, "Run directory")->required();

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Linear probe on frozen features, or full fine-tuning");
  add_common(probe_cmd, probe.c);
  add_eval_flags(probe_cmd, probe.c);
  probe.c.keys.add(probe_cmd, "--threads", "run.threads", "Worker threads, 0 = all cores");
  probe_cmd->add_option("--checkpoint", probe.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  probe_cmd->add_option("--split", probe.splits, "Test split(s); test_static uses a cross-fit");
  probe_cmd->add_flag("--fine-tune", probe.fine_tune,
                      "Fine-tune the whole network with a classifier head instead");
  probe.c.keys.add(probe_cmd, "--fine-tune-epochs", "eval.finetune_epochs", "Fine-tuning epochs");
  probe.c.keys.add(probe_cmd, "--fine-tune-lr", "eval.finetune_lr", "Fine-tuning learning rate");

  RetrieveArgs ret;
  auto* ret_cmd = app.add_subcommand("retrieve", "Nearest-neighbour recall@K");
  add_common(ret_cmd, ret.c);
  ret.c.keys.add(ret_cmd, "--threads", "run.threads", "Worker threads, 0 = all cores");
  ret_cmd->add_option("--checkpoint", ret.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  ret_cmd->add_option("--gallery", ret.gallery, "Gallery split");
  ret_cmd->add_option("--query", ret.query, "Query split");
  ret_cmd->add_option("--k", ret.k, "Comma-separated K values");

  DiagnoseArgs diag;
  auto* diag_cmd =
      app.add_subcommand("diagnose", "Correlate static accuracy with per-class BE improvement");
  add_common(diag_cmd, diag.c);
  add_eval_flags(diag_cmd, diag.c);
  diag.c.keys.add(diag_cmd, "--threads", "run.threads", "Worker threads, 0 = all cores");
  diag_cmd->add_option("--baseline", diag.baseline, "Baseline checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  diag_cmd->add_option("--be", diag.be, "BE checkpoint")->required()->check(CLI::ExistingFile);
  diag_cmd->add_option("--split", diag.split, "Split for the probe comparison");
  diag_cmd->add_option("--improvement", diag.improvement, "absolute | relative")
      ->check(CLI::IsMember({"absolute", "relative"}));

  SaliencyArgs sal;
  auto* sal_cmd = app.add_subcommand("saliency", "Activation maps and static-cue attacks");
  add_common(sal_cmd, sal.c);
  sal_cmd->add_option("--checkpoint", sal.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  sal_cmd->add_option("--video", sal.video, "Video id (default: first of --split)");
  sal_cmd->add_option("--split", sal.split, "Split to pick the default video from");
  sal_cmd->add_option("--start", sal.start, "Clip start frame (default: centre)");
  sal_cmd->add_option("--attack", sal.attack,
                      "none | static_video | paste_static_actor | add_static_frame");
  sal_cmd->add_option("--lambda", sal.lambda, "Blend weight of the static frame")
      ->check(CLI::Range(0.0, 1.0));
  sal_cmd->add_option("--frame", sal.frame, "Frame used by the attack (default: middle)");
  sal_cmd->add_option("--out", sal.out, "Directory for PNGs and report.json");
  sal_cmd->add_flag("--predict", sal.predict, "Also report linear-probe predictions");

  AblateArgs abl;
  auto* abl_cmd =
      app.add_subcommand("ablate-distractors", "Pretrain and probe every distractor variant");
  add_common(abl_cmd, abl.c);
  add_run_flags(abl_cmd, abl.c);
  add_data_flags(abl_cmd, abl.c);
  add_training_flags(abl_cmd, abl.c);
  abl_cmd->add_option("--out", abl.out, "Directory for per-variant runs and ablation.json");

  DescribeArgs desc;
  auto* desc_cmd =
      app.add_subcommand("describe", "Describe a checkpoint or dataset from its files alone");
  add_common(desc_cmd, desc.c);
  desc_cmd->add_option("path", desc.path, "Checkpoint file, dataset directory or manifest")
      ->required()
      ->check(CLI::ExistingPath);

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Summarize a metrics log");
  add_common(rep_cmd, rep.c);
  rep_cmd->add_option("path", rep.path, "metrics.jsonl or a run directory")
      ->required()
      ->check(CLI::ExistingPath);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kUsageExit;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*pre_cmd) return cmd_pretrain(pre);
    if (*probe_cmd) return cmd_probe(probe);
    if (*ret_cmd) return cmd_retrieve(ret);
    if (*diag_cmd) return cmd_diagnose(diag);
    if (*sal_cmd) return cmd_saliency(sal);
    if (*abl_cmd) return cmd_ablate(abl);
    if (*desc_cmd) return cmd_describe(desc);
    if (*rep_cmd) return cmd_report(rep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return static_cast<int>(ErrorFamily::input);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorFamily::io);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorFamily::internal);
  }
  return kUsageExit;
}
