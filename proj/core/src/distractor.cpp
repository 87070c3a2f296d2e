#include "bgerase/distractor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bgerase/errors.hpp"

namespace bgerase {

std::string_view variant_name(DistractorVariant v) {
  switch (v) {
    case DistractorVariant::none: return "none";
    case DistractorVariant::intra_frame: return "intra_frame";
    case DistractorVariant::inter_frame: return "inter_frame";
    case DistractorVariant::gaussian: return "gaussian";
    case DistractorVariant::mixup: return "mixup";
    case DistractorVariant::cutmix: return "cutmix";
  }
  return "none";
}

DistractorVariant parse_variant(std::string_view name) {
  if (name == "none") return DistractorVariant::none;
  if (name == "intra_frame" || name == "intra") return DistractorVariant::intra_frame;
  if (name == "inter_frame" || name == "inter") return DistractorVariant::inter_frame;
  if (name == "gaussian") return DistractorVariant::gaussian;
  if (name == "mixup") return DistractorVariant::mixup;
  if (name == "cutmix") return DistractorVariant::cutmix;
  throw ConfigError("unknown distractor variant '" + std::string(name) + "'");
}

const std::vector<DistractorVariant>& all_variants() {
  static const std::vector<DistractorVariant> v{
      DistractorVariant::none,        DistractorVariant::gaussian,
      DistractorVariant::mixup,       DistractorVariant::cutmix,
      DistractorVariant::inter_frame, DistractorVariant::intra_frame};
  return v;
}

void DistractorSpec::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("distractor gamma must lie in [0,1]");
  if (!(gaussian_sigma > 0.0)) throw ConfigError("distractor gaussian_sigma must be > 0");
  if (!(cutmix_area_lo > 0.0 && cutmix_area_lo <= cutmix_area_hi && cutmix_area_hi < 1.0)) {
    throw ConfigError("distractor cutmix area range must satisfy 0 < lo <= hi < 1");
  }
  if (forced_lambda && !(*forced_lambda >= 0.0 && *forced_lambda <= 1.0)) {
    throw ConfigError("forced lambda must lie in [0,1]");
  }
}

bool DistractorSpec::needs_donor() const {
  return variant == DistractorVariant::inter_frame || variant == DistractorVariant::mixup;
}

std::string format_trace_line(const DistractorTrace& t) {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << variant_name(t.variant) << " lambda=" << t.lambda
     << " k=" << t.frame_index << " box=";
  if (t.box) {
    os << t.box->top << "," << t.box->left << "," << t.box->height << "," << t.box->width;
  } else {
    os << "-";
  }
  os << " noise_seed=";
  if (t.noise_seed) os << *t.noise_seed; else os << "-";
  os << " donor=" << (t.donor_id.empty() ? "-" : t.donor_id);
  return os.str();
}

DistractorTrace parse_trace_line(std::string_view line) {
  DistractorTrace t;
  std::istringstream is{std::string(line)};
  std::string field;
  while (is >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw InputError("malformed trace field '" + field + "'");
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "variant") {
      t.variant = parse_variant(value);
    } else if (key == "lambda") {
      t.lambda = std::stod(value);
    } else if (key == "k") {
      t.frame_index = std::stoi(value);
    } else if (key == "box") {
      if (value != "-") {
        Box b;
        char sep = 0;
        std::istringstream bs(value);
        bs >> b.top >> sep >> b.left >> sep >> b.height >> sep >> b.width;
        if (!bs) throw InputError("malformed trace box '" + value + "'");
        t.box = b;
      }
    } else if (key == "noise_seed") {
      if (value != "-") t.noise_seed = std::stoull(value);
    } else if (key == "donor") {
      if (value != "-") t.donor_id = value;
    } else {
      throw InputError("unknown trace field '" + key + "'");
    }
  }
  return t;
}

namespace {

double draw_lambda(const DistractorSpec& spec, Rng& rng) {
  if (spec.forced_lambda) return *spec.forced_lambda;
  if (spec.gamma <= 0.0) return 0.0;
  return std::uniform_real_distribution<double>(0.0, spec.gamma)(rng);
}

int draw_frame(const DistractorSpec& spec, int frames, Rng& rng) {
  if (spec.forced_frame) {
    if (*spec.forced_frame < 0 || *spec.forced_frame >= frames) {
      throw InputError("forced static frame index out of range");
    }
    return *spec.forced_frame;
  }
  return uniform_int(rng, 0, frames - 1);
}

// out[j] = (1 - lambda) * clip[j] + lambda * still, for every frame j.
VideoClip blend_static(const VideoClip& clip, std::span<const float> still, double lambda) {
  VideoClip out = clip;
  const double keep = 1.0 - lambda;
  for (int t = 0; t < clip.frames(); ++t) {
    auto dst = out.frame(t);
    const auto src = clip.frame(t);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<float>(keep * src[i] + lambda * still[i]);
    }
  }
  return out;
}

void require_donor(const VideoClip* donor, const VideoClip& clip, bool same_length,
                   DistractorVariant v) {
  if (donor == nullptr) {
    throw InputError(std::string("distractor '") + std::string(variant_name(v)) +
                     "' requires a donor clip");
  }
  const bool ok = same_length ? donor->shape() == clip.shape()
                              : donor->shape().same_frame_dims(clip.shape());
  if (!ok) {
    throw InputError("donor shape " + to_string(donor->shape()) +
                     " incompatible with clip shape " + to_string(clip.shape()));
  }
}

}  // namespace

DistractedClip make_distractor(const VideoClip& clip, const DistractorSpec& spec,
                               const VideoClip* donor, Rng& rng) {
  spec.validate();
  DistractorTrace trace;
  trace.variant = spec.variant;

  switch (spec.variant) {
    case DistractorVariant::none:
      return {clip, trace};

    case DistractorVariant::intra_frame: {
      trace.lambda = draw_lambda(spec, rng);
      trace.frame_index = draw_frame(spec, clip.frames(), rng);
      return {blend_static(clip, clip.frame(trace.frame_index), trace.lambda), trace};
    }

    case DistractorVariant::inter_frame: {
      require_donor(donor, clip, false, spec.variant);
      trace.lambda = draw_lambda(spec, rng);
      trace.frame_index = draw_frame(spec, donor->frames(), rng);
      trace.donor_id = donor->video_id();
      return {blend_static(clip, donor->frame(trace.frame_index), trace.lambda), trace};
    }

    case DistractorVariant::gaussian: {
      const std::uint64_t seed = rng();
      trace.noise_seed = seed;
      Rng noise_rng(seed);
      std::normal_distribution<double> normal(0.0, spec.gaussian_sigma);
      std::vector<float> field(clip.shape().frame_size());
      for (float& v : field) v = static_cast<float>(normal(noise_rng));
      VideoClip out = clip;
      for (int t = 0; t < clip.frames(); ++t) {
        auto dst = out.frame(t);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += field[i];
      }
      out.clamp_unit();
      return {std::move(out), trace};
    }

    case DistractorVariant::mixup: {
      require_donor(donor, clip, true, spec.variant);
      trace.lambda = draw_lambda(spec, rng);
      trace.donor_id = donor->video_id();
      VideoClip out = clip;
      const double keep = 1.0 - trace.lambda;
      const auto src = clip.data();
      const auto other = donor->data();
      auto dst = out.data();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = static_cast<float>(keep * src[i] + trace.lambda * other[i]);
      }
      return {std::move(out), trace};
    }

    case DistractorVariant::cutmix: {
      const VideoClip& source = donor != nullptr ? *donor : clip;
      if (donor != nullptr) {
        require_donor(donor, clip, false, spec.variant);
        trace.donor_id = donor->video_id();
      }
      const double area =
          std::uniform_real_distribution<double>(spec.cutmix_area_lo, spec.cutmix_area_hi)(rng);
      const double side = std::sqrt(area);
      Box box;
      box.height = std::clamp(static_cast<int>(std::lround(side * clip.height())), 1,
                              clip.height());
      box.width = std::clamp(static_cast<int>(std::lround(side * clip.width())), 1, clip.width());
      box.top = uniform_int(rng, 0, clip.height() - box.height);
      box.left = uniform_int(rng, 0, clip.width() - box.width);
      trace.box = box;
      trace.frame_index = draw_frame(spec, source.frames(), rng);
      VideoClip out = clip;
      const int ch = clip.channels();
      for (int t = 0; t < clip.frames(); ++t) {
        for (int y = box.top; y < box.top + box.height; ++y) {
          for (int x = box.left; x < box.left + box.width; ++x) {
            for (int c = 0; c < ch; ++c) out.at(t, y, x, c) = source.at(trace.frame_index, y, x, c);
          }
        }
      }
      return {std::move(out), trace};
    }
  }
  throw InputError("unhandled distractor variant");
}

}  // namespace bgerase
