#include "bgerase/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bgerase/errors.hpp"

namespace bgerase {

using nlohmann::json;

std::string_view objective_name(ObjectiveKind k) {
  return k == ObjectiveKind::contrastive ? "contrastive" : "pretext";
}

ObjectiveKind parse_objective(std::string_view name) {
  if (name == "contrastive") return ObjectiveKind::contrastive;
  if (name == "pretext") return ObjectiveKind::pretext;
  throw ConfigError("unknown objective '" + std::string(name) + "'");
}

std::string_view negative_source_name(NegativeSource s) {
  return s == NegativeSource::queue ? "queue" : "batch";
}

NegativeSource parse_negative_source(std::string_view name) {
  if (name == "queue") return NegativeSource::queue;
  if (name == "batch") return NegativeSource::batch;
  throw ConfigError("unknown negative source '" + std::string(name) + "'");
}

std::string_view probe_features_name(ProbeFeatures f) {
  return f == ProbeFeatures::embedding ? "embedding" : "backbone";
}

ProbeFeatures parse_probe_features(std::string_view name) {
  if (name == "embedding") return ProbeFeatures::embedding;
  if (name == "backbone") return ProbeFeatures::backbone;
  throw ConfigError("unknown probe feature source '" + std::string(name) + "'");
}

std::string hex_digest(std::string_view bytes) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                    " (expected " + std::string(want) + ")");
}

template <typename I>
I parse_integer(std::string_view key, std::string_view s) {
  I v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) bad_value(key, s, "an integer");
  return v;
}

double parse_real(std::string_view key, std::string_view s) {
  const std::string str(s);
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (str.empty() || end != str.c_str() + str.size()) bad_value(key, s, "a number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  bad_value(key, s, "on/off");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view s) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string_view item = s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos);
    out.push_back(parse_integer<int>(key, item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

/// One config key: how to read it from / write it to JSON and flag strings.
struct Field {
  std::string key;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set_json;
  std::function<void(ExperimentConfig&, std::string_view)> set_text;
};

template <typename M>
Field number_field(std::string key, M ExperimentConfig::*member) {
  Field f;
  f.key = key;
  f.get = [member](const ExperimentConfig& c) { return json(c.*member); };
  f.set_json = [member, key](ExperimentConfig& c, const json& j) {
    if (!j.is_number()) bad_value(key, j.dump(), "a number");
    if constexpr (std::is_integral_v<M>) {
      if (!j.is_number_integer()) bad_value(key, j.dump(), "an integer");
      c.*member = j.get<M>();
    } else {
      c.*member = j.get<M>();
    }
  };
  f.set_text = [member, key](ExperimentConfig& c, std::string_view s) {
    if constexpr (std::is_integral_v<M>) {
      c.*member = parse_integer<M>(key, s);
    } else {
      c.*member = parse_real(key, s);
    }
  };
  return f;
}

Field bool_field(std::string key, bool ExperimentConfig::*member) {
  Field f;
  f.key = key;
  f.get = [member](const ExperimentConfig& c) { return json(c.*member); };
  f.set_json = [member, key](ExperimentConfig& c, const json& j) {
    if (j.is_boolean()) {
      c.*member = j.get<bool>();
    } else if (j.is_string()) {
      c.*member = parse_bool(key, j.get<std::string>());
    } else {
      bad_value(key, j.dump(), "a boolean");
    }
  };
  f.set_text = [member, key](ExperimentConfig& c, std::string_view s) {
    c.*member = parse_bool(key, s);
  };
  return f;
}

Field list_field(std::string key, std::vector<int> ExperimentConfig::*member) {
  Field f;
  f.key = key;
  f.get = [member](const ExperimentConfig& c) { return json(c.*member); };
  f.set_json = [member, key](ExperimentConfig& c, const json& j) {
    if (j.is_string()) {
      c.*member = parse_int_list(key, j.get<std::string>());
      return;
    }
    if (!j.is_array()) bad_value(key, j.dump(), "a list of integers");
    std::vector<int> v;
    for (const auto& e : j) {
      if (!e.is_number_integer()) bad_value(key, j.dump(), "a list of integers");
      v.push_back(e.get<int>());
    }
    c.*member = std::move(v);
  };
  f.set_text = [member, key](ExperimentConfig& c, std::string_view s) {
    c.*member = s.empty() ? std::vector<int>{} : parse_int_list(key, s);
  };
  return f;
}

/// A string-valued key backed by a parse/print pair.
template <typename M, typename Parse, typename Print>
Field named_field(std::string key, M ExperimentConfig::*member, Parse parse, Print print) {
  Field f;
  f.key = key;
  f.get = [member, print](const ExperimentConfig& c) { return json(std::string(print(c.*member))); };
  f.set_json = [member, parse, key](ExperimentConfig& c, const json& j) {
    if (!j.is_string()) bad_value(key, j.dump(), "a string");
    c.*member = parse(j.get<std::string>());
  };
  f.set_text = [member, parse](ExperimentConfig& c, std::string_view s) { c.*member = parse(s); };
  return f;
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  auto ident = [](std::string_view s) { return std::string(s); };
  auto same = [](const std::string& s) { return s; };
  static const std::vector<Field> table = [&] {
    std::vector<Field> t;
    t.push_back(named_field("data.root", &C::data_root, ident, same));
    t.push_back(number_field("data.classes", &C::data_classes));
    t.push_back(number_field("data.videos_per_class", &C::data_videos_per_class));
    t.push_back(number_field("data.test_videos_per_class", &C::data_test_videos_per_class));
    t.push_back(number_field("data.bias", &C::data_bias));
    t.push_back(number_field("data.frames", &C::data_frames));
    t.push_back(number_field("data.height", &C::data_height));
    t.push_back(number_field("data.width", &C::data_width));
    t.push_back(number_field("data.camera_pan", &C::data_camera_pan));
    t.push_back(number_field("data.noise_sigma", &C::data_noise_sigma));
    t.push_back(number_field("data.sprite_scale_lo", &C::data_sprite_scale_lo));
    t.push_back(number_field("data.sprite_scale_hi", &C::data_sprite_scale_hi));
    t.push_back(number_field("data.speed_lo", &C::data_speed_lo));
    t.push_back(number_field("data.speed_hi", &C::data_speed_hi));
    t.push_back(number_field("data.tempo", &C::data_tempo));
    t.push_back(bool_field("data.actor_variety", &C::data_actor_variety));
    t.push_back(number_field("data.background_saturation", &C::data_background_saturation));
    t.push_back(number_field("data.seed", &C::data_seed));

    t.push_back(number_field("clip.length", &C::clip_length));
    t.push_back(number_field("clip.stride", &C::clip_stride));
    t.push_back(number_field("clip.crop_height", &C::clip_crop_height));
    t.push_back(number_field("clip.crop_width", &C::clip_crop_width));

    t.push_back(bool_field("aug.enabled", &C::aug_enabled));
    t.push_back(number_field("aug.rotation", &C::aug_rotation));
    t.push_back(number_field("aug.brightness", &C::aug_brightness));
    t.push_back(number_field("aug.contrast", &C::aug_contrast));
    t.push_back(number_field("aug.saturation", &C::aug_saturation));

    t.push_back(named_field("distractor.variant", &C::distractor_variant, parse_variant,
                            variant_name));
    t.push_back(number_field("distractor.gamma", &C::distractor_gamma));
    t.push_back(number_field("distractor.sigma", &C::distractor_sigma));
    t.push_back(number_field("distractor.cutmix_lo", &C::distractor_cutmix_lo));
    t.push_back(number_field("distractor.cutmix_hi", &C::distractor_cutmix_hi));

    t.push_back(named_field("objective.kind", &C::objective_kind, parse_objective, objective_name));
    t.push_back(bool_field("objective.be", &C::objective_be));
    t.push_back(bool_field("objective.hard_negative", &C::objective_hard_negative));
    t.push_back(named_field("objective.pretext", &C::objective_pretext, parse_pretext,
                            pretext_name));
    t.push_back(number_field("objective.beta", &C::objective_beta));
    t.push_back(named_field("objective.consistency", &C::objective_consistency,
                            parse_reduction, reduction_name));
    t.push_back(number_field("objective.temperature", &C::objective_temperature));
    t.push_back(named_field("objective.negatives", &C::objective_negatives,
                            parse_negative_source, negative_source_name));
    t.push_back(number_field("objective.queue_size", &C::objective_queue_size));
    t.push_back(number_field("objective.momentum", &C::objective_momentum));
    t.push_back(bool_field("objective.mask_same_video", &C::objective_mask_same_video));

    t.push_back(list_field("encoder.channels", &C::encoder_channels));
    t.push_back(list_field("encoder.strides", &C::encoder_strides));
    t.push_back(number_field("encoder.convs_per_stage", &C::encoder_convs_per_stage));
    t.push_back(number_field("encoder.norm_groups", &C::encoder_norm_groups));
    t.push_back(number_field("encoder.embedding_dim", &C::encoder_embedding_dim));
    t.push_back(bool_field("encoder.normalize", &C::encoder_normalize));

    t.push_back(number_field("optim.epochs", &C::optim_epochs));
    t.push_back(number_field("optim.batch_size", &C::optim_batch_size));
    t.push_back(number_field("optim.lr", &C::optim_lr));
    t.push_back(number_field("optim.momentum", &C::optim_momentum));
    t.push_back(number_field("optim.weight_decay", &C::optim_weight_decay));
    t.push_back(list_field("optim.lr_steps", &C::optim_lr_steps));
    t.push_back(number_field("optim.lr_decay", &C::optim_lr_decay));

    t.push_back(number_field("eval.clips", &C::eval_clips));
    t.push_back(named_field("eval.probe_features", &C::eval_probe_features,
                            parse_probe_features, probe_features_name));
    t.push_back(number_field("eval.probe_iterations", &C::eval_probe_iterations));
    t.push_back(number_field("eval.probe_lr", &C::eval_probe_lr));
    t.push_back(number_field("eval.probe_l2", &C::eval_probe_l2));
    t.push_back(list_field("eval.retrieval_k", &C::eval_retrieval_k));
    t.push_back(number_field("eval.finetune_epochs", &C::eval_finetune_epochs));
    t.push_back(number_field("eval.finetune_lr", &C::eval_finetune_lr));

    t.push_back(number_field("run.seed", &C::run_seed));
    t.push_back(number_field("run.threads", &C::run_threads));
    return t;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  field(key).set_text(*this, value);
}

void ExperimentConfig::merge_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "schema_version") continue;
    field(key).set_json(*this, value);
  }
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_json(ss.str());
}

std::string ExperimentConfig::to_json(int indent) const {
  json j = json::object();
  j["schema_version"] = kSchemaVersion;
  for (const auto& f : fields()) j[f.key] = f.get(*this);
  return j.dump(indent);
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
  ExperimentConfig c;
  c.merge_json(text);
  return c;
}

std::string ExperimentConfig::hash() const { return hex_digest(to_json()); }

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

void ExperimentConfig::validate() const {
  dataset_config().validate();
  if (clip_length < 2) throw ConfigError("clip.length must be >= 2");
  if (clip_stride < 1) throw ConfigError("clip.stride must be >= 1");
  if (clip_length * clip_stride > data_frames) {
    throw ConfigError("clip.length * clip.stride (" + std::to_string(clip_length * clip_stride) +
                      ") exceeds data.frames (" + std::to_string(data_frames) + ")");
  }
  if (clip_crop_height < 1 || clip_crop_height > data_height || clip_crop_width < 1 ||
      clip_crop_width > data_width) {
    throw ConfigError("clip crop must fit inside the frame");
  }
  if (aug_rotation < 0 || aug_brightness < 0 || aug_contrast < 0 || aug_saturation < 0) {
    throw ConfigError("augmentation magnitudes must be >= 0");
  }
  distractor_spec().validate();
  encoder_config().validate();
  if (!(objective_beta >= 0.0)) throw ConfigError("objective.beta must be >= 0");
  if (!(objective_temperature > 0.0)) throw ConfigError("objective.temperature must be > 0");
  if (objective_queue_size < 1) throw ConfigError("objective.queue_size must be >= 1");
  if (!(objective_momentum >= 0.0 && objective_momentum < 1.0)) {
    throw ConfigError("objective.momentum must lie in [0,1)");
  }
  if (objective_negatives == NegativeSource::batch && !objective_mask_same_video) {
    throw ConfigError("in-batch negatives require objective.mask_same_video");
  }
  if (optim_epochs < 0) throw ConfigError("optim.epochs must be >= 0");
  if (optim_batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
  if (!(optim_lr > 0.0)) throw ConfigError("optim.lr must be > 0");
  if (!(optim_momentum >= 0.0 && optim_momentum < 1.0)) {
    throw ConfigError("optim.momentum must lie in [0,1)");
  }
  if (optim_weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(optim_lr_decay > 0.0)) throw ConfigError("optim.lr_decay must be > 0");
  if (eval_clips < 1) throw ConfigError("eval.clips must be >= 1");
  if (eval_probe_iterations < 1) throw ConfigError("eval.probe_iterations must be >= 1");
  if (!(eval_probe_lr > 0.0)) throw ConfigError("eval.probe_lr must be > 0");
  if (eval_probe_l2 < 0.0) throw ConfigError("eval.probe_l2 must be >= 0");
  for (int k : eval_retrieval_k) {
    if (k < 1) throw ConfigError("eval.retrieval_k entries must be >= 1");
  }
  if (eval_finetune_epochs < 1) throw ConfigError("eval.finetune_epochs must be >= 1");
  if (!(eval_finetune_lr > 0.0)) throw ConfigError("eval.finetune_lr must be > 0");
  if (run_threads < 0) throw ConfigError("run.threads must be >= 0");
}

DatasetConfig ExperimentConfig::dataset_config() const {
  DatasetConfig d;
  d.num_classes = data_classes;
  d.videos_per_class = data_videos_per_class;
  d.test_videos_per_class = data_test_videos_per_class;
  d.bias_rho = data_bias;
  d.frames = data_frames;
  d.height = data_height;
  d.width = data_width;
  d.seed = data_seed >= 0 ? static_cast<std::uint64_t>(data_seed) : run_seed;
  d.camera_pan = data_camera_pan;
  d.noise_sigma = data_noise_sigma;
  d.sprite_scale_lo = data_sprite_scale_lo;
  d.sprite_scale_hi = data_sprite_scale_hi;
  d.speed_lo = data_speed_lo;
  d.speed_hi = data_speed_hi;
  d.tempo = data_tempo;
  d.actor_variety = data_actor_variety;
  d.background_saturation = data_background_saturation;
  d.threads = run_threads;
  return d;
}

AugmentationSet ExperimentConfig::augmentation() const {
  AugmentationSet a;
  a.rotation_max_degrees = aug_rotation;
  a.brightness = aug_brightness;
  a.contrast = aug_contrast;
  a.saturation = aug_saturation;
  a.rotation_enabled = aug_enabled;
  a.color_enabled = aug_enabled;
  return a;
}

DistractorSpec ExperimentConfig::distractor_spec() const {
  DistractorSpec s;
  s.variant = effective_variant();
  s.gamma = distractor_gamma;
  s.gaussian_sigma = distractor_sigma;
  s.cutmix_area_lo = distractor_cutmix_lo;
  s.cutmix_area_hi = distractor_cutmix_hi;
  return s;
}

EncoderConfig ExperimentConfig::encoder_config() const {
  EncoderConfig e;
  e.in_channels = 3;
  e.channels = encoder_channels;
  if (encoder_strides.size() != encoder_channels.size() * 3) {
    throw ConfigError("encoder.strides needs 3 entries (t,h,w) per stage: got " +
                      std::to_string(encoder_strides.size()) + " for " +
                      std::to_string(encoder_channels.size()) + " stages");
  }
  e.strides.clear();
  for (std::size_t s = 0; s < encoder_channels.size(); ++s) {
    e.strides.push_back({encoder_strides[3 * s], encoder_strides[3 * s + 1],
                         encoder_strides[3 * s + 2]});
  }
  e.convs_per_stage = encoder_convs_per_stage;
  e.norm_groups = encoder_norm_groups;
  e.embedding_dim = encoder_embedding_dim;
  e.normalize_embeddings = encoder_normalize;
  e.classifier_classes =
      objective_kind == ObjectiveKind::pretext ? pretext_task().num_labels() : 0;
  e.input_frames = clip_length;
  e.input_height = clip_crop_height;
  e.input_width = clip_crop_width;
  return e;
}

void adopt_dataset_config(ExperimentConfig& cfg, const DatasetConfig& d) {
  cfg.data_classes = d.num_classes;
  cfg.data_videos_per_class = d.videos_per_class;
  cfg.data_test_videos_per_class = d.test_videos_per_class;
  cfg.data_bias = d.bias_rho;
  cfg.data_frames = d.frames;
  cfg.data_height = d.height;
  cfg.data_width = d.width;
  cfg.data_camera_pan = d.camera_pan;
  cfg.data_noise_sigma = d.noise_sigma;
  cfg.data_sprite_scale_lo = d.sprite_scale_lo;
  cfg.data_sprite_scale_hi = d.sprite_scale_hi;
  cfg.data_speed_lo = d.speed_lo;
  cfg.data_speed_hi = d.speed_hi;
  cfg.data_tempo = d.tempo;
  cfg.data_actor_variety = d.actor_variety;
  cfg.data_background_saturation = d.background_saturation;
  cfg.data_seed = static_cast<long long>(d.seed);
}

std::filesystem::path resolve_data_root(const ExperimentConfig& cfg) {
  if (!cfg.data_root.empty()) return cfg.data_root;
  if (const char* env = std::getenv("BGERASE_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

}  // namespace bgerase
