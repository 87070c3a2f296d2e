#include "bgerase/synthdata.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "bgerase/errors.hpp"

namespace bgerase {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test_inbias: return "test_inbias";
    case Split::test_antibias: return "test_antibias";
    case Split::test_actor: return "test_actor";
    case Split::test_static: return "test_static";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  for (Split s : all_splits()) {
    if (split_name(s) == name) return s;
  }
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

const std::vector<Split>& all_splits() {
  static const std::vector<Split> v{Split::train, Split::test_inbias, Split::test_antibias,
                                    Split::test_actor, Split::test_static};
  return v;
}

std::string_view motion_name(MotionProgram m) {
  switch (m) {
    case MotionProgram::translate_left: return "translate_left";
    case MotionProgram::translate_right: return "translate_right";
    case MotionProgram::translate_up: return "translate_up";
    case MotionProgram::translate_down: return "translate_down";
    case MotionProgram::orbit_clockwise: return "orbit_clockwise";
    case MotionProgram::orbit_counterclockwise: return "orbit_counterclockwise";
    case MotionProgram::oscillate: return "oscillate";
    case MotionProgram::expand_contract: return "expand_contract";
  }
  return "translate_left";
}

MotionProgram motion_for_class(int class_label) {
  return static_cast<MotionProgram>(((class_label % 8) + 8) % 8);
}

void DatasetConfig::validate() const {
  if (num_classes < 1) throw ConfigError("dataset needs at least one class");
  if (num_classes < 2 && test_videos_per_class > 0) {
    throw ConfigError("the anti-bias split needs at least two classes");
  }
  if (videos_per_class < 1) throw ConfigError("videos_per_class must be positive");
  if (test_videos_per_class < 0) throw ConfigError("test_videos_per_class must be >= 0");
  if (!(bias_rho >= 0.0 && bias_rho <= 1.0)) throw ConfigError("bias_rho must lie in [0,1]");
  if (frames < 2 || height < 4 || width < 4) throw ConfigError("video dimensions too small");
  if (frames > 65535 || height > 65535 || width > 65535) {
    throw ConfigError("video dimensions exceed the u16 header fields");
  }
  if (camera_pan < 0.0 || noise_sigma < 0.0) throw ConfigError("negative generator magnitude");
  if (!(sprite_scale_lo > 0.0 && sprite_scale_lo <= sprite_scale_hi && sprite_scale_hi < 0.5)) {
    throw ConfigError("invalid sprite scale range");
  }
  if (!(speed_lo >= 0.0 && speed_lo <= speed_hi)) throw ConfigError("invalid speed range");
  if (!(tempo >= 0.0 && tempo < 1.0)) throw ConfigError("tempo must lie in [0,1)");
  if (!(background_saturation >= 0.0 && background_saturation <= 1.0)) {
    throw ConfigError("background_saturation must lie in [0,1]");
  }
}

int DatasetConfig::videos_in_split(Split s) const {
  return s == Split::train ? videos_per_class : test_videos_per_class;
}

std::vector<const VideoRecord*> SyntheticDatasetManifest::split_records(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

const VideoRecord& SyntheticDatasetManifest::record(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw InputError("no record with id '" + std::string(id) + "'");
}

ClipShape SyntheticDatasetManifest::video_shape() const {
  return {config.frames, config.height, config.width, 3};
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  double r, g, b;
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

double frac(double x) { return x - std::floor(x); }

// Texture contrast per background id; graded so scene cues differ in strength.
constexpr std::array<double, 8> kTextureContrast{0.32, 0.14, 0.26, 0.10, 0.36, 0.18, 0.22, 0.12};

// Pattern value in [-1, 1] at texture coordinates (u, v).
double pattern(int kind, double u, double v) {
  switch (kind) {
    case 0: return std::sin(kTwoPi * v / 8.0);
    case 1: return std::sin(kTwoPi * u / 8.0);
    case 2: return ((static_cast<long>(std::floor(u / 6.0)) +
                     static_cast<long>(std::floor(v / 6.0))) & 1) ? 1.0 : -1.0;
    case 3: {
      const double du = frac(u / 8.0) - 0.5, dv = frac(v / 8.0) - 0.5;
      const double d = std::sqrt(du * du + dv * dv) * 8.0;
      return 1.0 - 2.0 * std::min(1.0, d / 3.0);
    }
    case 4: return std::sin(kTwoPi * (u + v) / 10.0);
    case 5: return 4.0 * std::abs(frac(u / 48.0) - 0.5) - 1.0;
    case 6: return 4.0 * std::abs(frac(v / 48.0) - 0.5) - 1.0;
    default: {
      const double du = frac(u / 40.0) - 0.5, dv = frac(v / 40.0) - 0.5;
      return std::sin(kTwoPi * std::sqrt(du * du + dv * dv) * 40.0 / 9.0);
    }
  }
}

std::array<float, 3> background_color(int background_id, int num_backgrounds, double saturation,
                                      double u, double v) {
  if (background_id < 0) return {0.5f, 0.5f, 0.5f};
  const int kind = background_id % 8;
  const double hue = static_cast<double>(background_id) / std::max(num_backgrounds, 1);
  const double value = 0.5 + kTextureContrast[kind] * pattern(kind, u, v);
  return hsv_to_rgb(hue, saturation, value);
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int other_background(int class_label, int num_classes, Rng& rng) {
  if (num_classes < 2) return class_label;
  int b = uniform_int(rng, 0, num_classes - 2);
  if (b >= class_label) ++b;
  return b;
}

std::string make_id(Split split, int class_label, int i) {
  std::ostringstream os;
  os << split_name(split) << "_c" << class_label << "_";
  os.width(4);
  os.fill('0');
  os << i;
  return os.str();
}

struct SpriteState {
  double cx, cy, r;
};

// Warped time whose derivative is 1 + tempo cos(w t + phi), one modulation cycle per video.
double warp_time(const SpriteRecipe& s, double tempo, int frames, double t) {
  if (tempo == 0.0) return t;
  const double w = kTwoPi / frames;
  return t + tempo * (std::sin(w * t + s.tempo_phase) - std::sin(s.tempo_phase)) / w;
}

SpriteState sprite_at(MotionProgram m, const SpriteRecipe& s, double t) {
  SpriteState st{s.x0, s.y0, s.radius};
  switch (m) {
    case MotionProgram::translate_left: st.cx = s.x0 - s.speed * t; break;
    case MotionProgram::translate_right: st.cx = s.x0 + s.speed * t; break;
    case MotionProgram::translate_up: st.cy = s.y0 - s.speed * t; break;
    case MotionProgram::translate_down: st.cy = s.y0 + s.speed * t; break;
    case MotionProgram::orbit_clockwise:
    case MotionProgram::orbit_counterclockwise: {
      const double dir = m == MotionProgram::orbit_clockwise ? 1.0 : -1.0;
      const double phi = s.phase + dir * s.speed * t;
      st.cx = s.x0 + s.amplitude * std::cos(phi);
      st.cy = s.y0 + s.amplitude * std::sin(phi);  // image y points down
      break;
    }
    case MotionProgram::oscillate:
      st.cx = s.x0 + s.amplitude * std::sin(s.phase + s.speed * t);
      break;
    case MotionProgram::expand_contract:
      st.r = s.radius * (1.0 + s.amplitude * std::sin(s.phase + s.speed * t));
      break;
  }
  return st;
}

bool inside_sprite(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0: return std::max(std::abs(dx), std::abs(dy)) <= r * 0.9;
    case 1: return dx * dx + dy * dy <= r * r;
    case 2: return std::abs(dx) + std::abs(dy) <= r * 1.25;
    default: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
  }
}

double wrap(double d, double period) {
  d = std::fmod(d, period);
  if (d < -period / 2) d += period;
  if (d >= period / 2) d -= period;
  return d;
}

void put_u16(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  put_u16(out, v & 0xffff);
  put_u16(out, v >> 16);
}

std::uint32_t get_u16(const unsigned char* p) { return p[0] | (p[1] << 8); }
std::uint32_t get_u32(const unsigned char* p) { return get_u16(p) | (get_u16(p + 2) << 16); }

constexpr std::size_t kBevdHeader = 16;

}  // namespace

VideoRecipe make_recipe(const DatasetConfig& cfg, int index, int class_label, Split split) {
  VideoRecipe rc;
  VideoRecord& rec = rc.record;
  rec.index = index;
  rec.class_label = class_label;
  rec.split = split;
  rec.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));

  Rng assign(derive_seed(rec.seed, "assign"));
  switch (split) {
    case Split::train:
    case Split::test_inbias:
    case Split::test_static:
      rec.background_id = uniform01(assign) < cfg.bias_rho
                              ? class_label
                              : other_background(class_label, cfg.num_classes, assign);
      break;
    case Split::test_antibias:
      rec.background_id = other_background(class_label, cfg.num_classes, assign);
      break;
    case Split::test_actor:
      rec.background_id = -1;
      break;
  }
  if (split == Split::test_static) rec.static_frame = uniform_int(assign, 0, cfg.frames - 1);

  Rng srng(derive_seed(rec.seed, "sprite"));
  SpriteRecipe& s = rc.sprite;
  const double H = cfg.height, W = cfg.width, S = std::min(H, W);
  s.shape = uniform_int(srng, 0, 3);
  const auto rgb = hsv_to_rgb(uniform01(srng), uniform(srng, 0.7, 1.0), uniform(srng, 0.85, 1.0));
  std::copy(rgb.begin(), rgb.end(), s.color);
  if (!cfg.actor_variety) {
    s.shape = 1;
    std::fill(std::begin(s.color), std::end(s.color), 1.0f);
  }
  s.radius = uniform(srng, cfg.sprite_scale_lo, cfg.sprite_scale_hi) * S;
  const double per_video = kTwoPi / cfg.frames;
  s.phase = uniform(srng, 0.0, kTwoPi);
  s.tempo_phase = uniform(srng, 0.0, kTwoPi);
  switch (motion_for_class(class_label)) {
    case MotionProgram::translate_left:
    case MotionProgram::translate_right:
      s.x0 = uniform(srng, 0.0, W);
      s.y0 = uniform(srng, s.radius, H - s.radius);
      s.speed = uniform(srng, cfg.speed_lo, cfg.speed_hi) * W;
      break;
    case MotionProgram::translate_up:
    case MotionProgram::translate_down:
      s.x0 = uniform(srng, s.radius, W - s.radius);
      s.y0 = uniform(srng, 0.0, H);
      s.speed = uniform(srng, cfg.speed_lo, cfg.speed_hi) * H;
      break;
    case MotionProgram::orbit_clockwise:
    case MotionProgram::orbit_counterclockwise:
      s.x0 = W * uniform(srng, 0.42, 0.58);
      s.y0 = H * uniform(srng, 0.42, 0.58);
      s.amplitude = S * uniform(srng, 0.22, 0.3);
      s.speed = per_video * uniform(srng, 0.8, 1.2);
      break;
    case MotionProgram::oscillate:
      s.x0 = W * uniform(srng, 0.42, 0.58);
      s.y0 = uniform(srng, s.radius, H - s.radius);
      s.amplitude = W * uniform(srng, 0.2, 0.3);
      s.speed = per_video * uniform(srng, 1.6, 2.4);
      break;
    case MotionProgram::expand_contract:
      s.x0 = W * uniform(srng, 0.3, 0.7);
      s.y0 = H * uniform(srng, 0.3, 0.7);
      s.amplitude = uniform(srng, 0.35, 0.5);
      s.speed = per_video * uniform(srng, 1.6, 2.4);
      break;
  }

  Rng brng(derive_seed(rec.seed, "background"));
  rc.background.phase_x = uniform(brng, 0.0, 240.0);
  rc.background.phase_y = uniform(brng, 0.0, 240.0);
  const double angle = uniform(brng, 0.0, kTwoPi);
  const double pan = uniform(brng, 0.0, cfg.camera_pan);
  rc.background.pan_x = pan * std::cos(angle);
  rc.background.pan_y = pan * std::sin(angle);
  return rc;
}

RenderedVideo render_video(const DatasetConfig& cfg, const VideoRecipe& recipe,
                           std::optional<int> background_override) {
  const VideoRecord& rec = recipe.record;
  const int bg = background_override.value_or(rec.background_id);
  const int T = cfg.frames, H = cfg.height, W = cfg.width;
  const MotionProgram motion = motion_for_class(rec.class_label);

  RenderedVideo out;
  out.video.id = rec.id;
  out.video.shape = {T, H, W, 3};
  out.video.pixels.resize(out.video.shape.size());
  out.sprite_mask.resize(static_cast<std::size_t>(T) * H * W);

  Rng noise_rng(derive_seed(rec.seed, "noise"));
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);
  const bool is_static = rec.split == Split::test_static && rec.static_frame >= 0;

  for (int t = 0; t < T; ++t) {
    const double time = is_static ? rec.static_frame : t;
    const SpriteState sp =
        sprite_at(motion, recipe.sprite, warp_time(recipe.sprite, cfg.tempo, T, time));
    const double ox = recipe.background.phase_x + recipe.background.pan_x * time;
    const double oy = recipe.background.phase_y + recipe.background.pan_y * time;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double dx = wrap(x + 0.5 - sp.cx, W), dy = wrap(y + 0.5 - sp.cy, H);
        const bool in = inside_sprite(recipe.sprite.shape, dx, dy, sp.r);
        const std::size_t pix = (static_cast<std::size_t>(t) * H + y) * W + x;
        out.sprite_mask[pix] = in ? 1 : 0;
        std::array<float, 3> rgb = in ? std::array<float, 3>{recipe.sprite.color[0],
                                                             recipe.sprite.color[1],
                                                             recipe.sprite.color[2]}
                                      : background_color(bg, cfg.num_classes,
                                                         cfg.background_saturation, x + ox, y + oy);
        for (int c = 0; c < 3; ++c) {
          double v = rgb[c];
          if (cfg.noise_sigma > 0) v += noise(noise_rng);
          v = std::clamp(v, 0.0, 1.0);
          out.video.pixels[pix * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
  }
  if (is_static) {
    // Sampling happened at the static frame's time; keep only frame 0's noise draw.
    const std::size_t fs = out.video.shape.frame_size(), ms = static_cast<std::size_t>(H) * W;
    for (int t = 1; t < T; ++t) {
      std::copy_n(out.video.pixels.begin(), fs, out.video.pixels.begin() + t * fs);
      std::copy_n(out.sprite_mask.begin(), ms, out.sprite_mask.begin() + t * ms);
    }
  }
  return out;
}

SyntheticDatasetManifest generate_dataset(const DatasetConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "videos", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  SyntheticDatasetManifest manifest;
  manifest.config = cfg;
  std::vector<VideoRecipe> recipes;
  int index = 0;
  for (Split split : all_splits()) {
    for (int c = 0; c < cfg.num_classes; ++c) {
      for (int i = 0; i < cfg.videos_in_split(split); ++i) {
        VideoRecipe rc = make_recipe(cfg, index++, c, split);
        rc.record.id = make_id(split, c, i);
        rc.record.path = "videos/" + rc.record.id + ".bevd";
        recipes.push_back(std::move(rc));
      }
    }
  }

  // Every video has its own derived seed, so workers can render in any order.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < recipes.size(); i = next++) {
      try {
        const RenderedVideo r = render_video(cfg, recipes[i]);
        write_bevd(out_dir / recipes[i].record.path, r.video);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned n_threads =
      cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                      : std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  for (auto& rc : recipes) manifest.records.push_back(std::move(rc.record));
  write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

void write_bevd(const fs::path& path, const RawVideo& video) {
  const ClipShape& s = video.shape;
  if (video.pixels.size() != s.size()) throw InputError("write_bevd: pixel count mismatch");
  std::string header;
  header.append("BEVD");
  put_u32(header, kBevdVersion);
  put_u16(header, static_cast<std::uint32_t>(s.frames));
  put_u16(header, static_cast<std::uint32_t>(s.height));
  put_u16(header, static_cast<std::uint32_t>(s.width));
  put_u16(header, static_cast<std::uint32_t>(s.channels));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(video.pixels.data()),
           static_cast<std::streamsize>(video.pixels.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

RawVideo read_bevd(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kBevdHeader) {
    throw IoError(path.string() + ": truncated header at offset " + std::to_string(bytes.size()) +
                  " (need " + std::to_string(kBevdHeader) + " bytes)");
  }
  if (bytes.compare(0, 4, "BEVD") != 0) throw IoError(path.string() + ": bad magic at offset 0");
  const std::uint32_t version = get_u32(p + 4);
  if (version != kBevdVersion) {
    throw IoError(path.string() + ": unsupported version " + std::to_string(version) +
                  " at offset 4");
  }
  RawVideo v;
  v.id = path.stem().string();
  v.shape = {static_cast<int>(get_u16(p + 8)), static_cast<int>(get_u16(p + 10)),
             static_cast<int>(get_u16(p + 12)), static_cast<int>(get_u16(p + 14))};
  if (v.shape.frames == 0 || v.shape.height == 0 || v.shape.width == 0 || v.shape.channels == 0) {
    throw IoError(path.string() + ": zero dimension in header at offset 8");
  }
  const std::size_t expected = kBevdHeader + v.shape.size();
  if (bytes.size() != expected) {
    throw IoError(path.string() + ": payload ends at offset " + std::to_string(bytes.size()) +
                  ", expected " + std::to_string(expected) + " bytes for " + to_string(v.shape));
  }
  v.pixels.assign(bytes.begin() + kBevdHeader, bytes.end());
  return v;
}

namespace {

json config_to_json(const DatasetConfig& c) {
  return json{{"num_classes", c.num_classes},
              {"videos_per_class", c.videos_per_class},
              {"test_videos_per_class", c.test_videos_per_class},
              {"bias_rho", c.bias_rho},
              {"frames", c.frames},
              {"height", c.height},
              {"width", c.width},
              {"seed", c.seed},
              {"camera_pan", c.camera_pan},
              {"noise_sigma", c.noise_sigma},
              {"sprite_scale", {c.sprite_scale_lo, c.sprite_scale_hi}},
              {"speed", {c.speed_lo, c.speed_hi}},
              {"tempo", c.tempo},
              {"actor_variety", c.actor_variety},
              {"background_saturation", c.background_saturation}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.videos_per_class = j.at("videos_per_class").get<int>();
  c.test_videos_per_class = j.at("test_videos_per_class").get<int>();
  c.bias_rho = j.at("bias_rho").get<double>();
  c.frames = j.at("frames").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.camera_pan = j.at("camera_pan").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.sprite_scale_lo = j.at("sprite_scale").at(0).get<double>();
  c.sprite_scale_hi = j.at("sprite_scale").at(1).get<double>();
  c.speed_lo = j.at("speed").at(0).get<double>();
  c.speed_hi = j.at("speed").at(1).get<double>();
  c.tempo = j.value("tempo", 0.0);
  c.actor_variety = j.value("actor_variety", true);
  c.background_saturation = j.value("background_saturation", 0.45);
  return c;
}

}  // namespace

std::string manifest_to_json(const SyntheticDatasetManifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back(json{{"id", r.id},
                           {"class_label", r.class_label},
                           {"background_id", r.background_id},
                           {"split", split_name(r.split)},
                           {"path", r.path},
                           {"seed", r.seed},
                           {"index", r.index},
                           {"static_frame", r.static_frame},
                           {"motion", motion_name(motion_for_class(r.class_label))}});
  }
  json j{{"schema_version", 1},
         {"version", m.version},
         {"format", "BEVD"},
         {"num_classes", m.config.num_classes},
         {"bias_rho", m.config.bias_rho},
         {"frames_per_video", m.config.frames},
         {"frame_size", {m.config.height, m.config.width}},
         {"channels", 3},
         {"seed", m.config.seed},
         {"generator", config_to_json(m.config)},
         {"records", std::move(records)}};
  return j.dump(1);
}

SyntheticDatasetManifest manifest_from_json(std::string_view text) {
  SyntheticDatasetManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != kManifestVersion) {
      throw IoError("unsupported manifest version " + std::to_string(m.version));
    }
    m.config = config_from_json(j.at("generator"));
    for (const auto& r : j.at("records")) {
      VideoRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.class_label = r.at("class_label").get<int>();
      rec.background_id = r.at("background_id").get<int>();
      rec.split = parse_split(r.at("split").get<std::string>());
      rec.path = r.at("path").get<std::string>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.index = r.at("index").get<int>();
      rec.static_frame = r.at("static_frame").get<int>();
      if (rec.class_label < 0 || rec.class_label >= m.config.num_classes) {
        throw IoError("record " + rec.id + " has class outside [0, num_classes)");
      }
      if (rec.background_id < -1 || rec.background_id >= m.config.num_classes) {
        throw IoError("record " + rec.id + " has invalid background id");
      }
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const fs::path& path, const SyntheticDatasetManifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << manifest_to_json(m) << "\n";
  if (!os) throw IoError("failed writing " + path.string());
}

SyntheticDatasetManifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return manifest_from_json(ss.str());
}

Dataset::Dataset(SyntheticDatasetManifest manifest, fs::path root)
    : manifest_(std::move(manifest)), root_(std::move(root)) {}

Dataset Dataset::open(const fs::path& manifest_or_dir) {
  const fs::path file = fs::is_directory(manifest_or_dir) ? manifest_or_dir / "manifest.json"
                                                          : manifest_or_dir;
  return Dataset(read_manifest(file), file.parent_path());
}

const RawVideo& Dataset::video(const VideoRecord& record) const {
  {
    std::lock_guard lock(*mutex_);
    if (auto it = cache_.find(record.id); it != cache_.end()) return it->second;
  }
  const fs::path path = root_ / record.path;
  RawVideo v = read_bevd(path);
  if (v.shape != manifest_.video_shape()) {
    throw IoError(path.string() + ": header dims " + to_string(v.shape) +
                  " disagree with manifest " + to_string(manifest_.video_shape()));
  }
  v.id = record.id;
  std::lock_guard lock(*mutex_);
  return cache_.emplace(record.id, std::move(v)).first->second;
}

const RawVideo& Dataset::video(std::string_view id) const { return video(manifest_.record(id)); }

void Dataset::preload() const {
  for (const auto& r : manifest_.records) video(r);
}

VideoClip load_clip(const Dataset& dataset, std::string_view record_id, const ClipParams& params,
                    Rng& rng) {
  return sample_clip(dataset.video(record_id), params.length, params.stride, rng);
}

}  // namespace bgerase
