#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bgerase/random.hpp"
#include "bgerase/video.hpp"

namespace bgerase {

enum class DistractorVariant { none, intra_frame, inter_frame, gaussian, mixup, cutmix };

std::string_view variant_name(DistractorVariant v);
/// Accepts the canonical names plus the short aliases "intra" and "inter".
DistractorVariant parse_variant(std::string_view name);
/// The six variants in ablation-table order.
const std::vector<DistractorVariant>& all_variants();

struct DistractorSpec {
  DistractorVariant variant = DistractorVariant::intra_frame;
  double gamma = 0.3;
  double gaussian_sigma = 0.1;
  double cutmix_area_lo = 0.25;
  double cutmix_area_hi = 0.5;
  /// Test hooks: pin the blend weight or the static frame index instead of drawing them.
  std::optional<double> forced_lambda;
  std::optional<int> forced_frame;

  void validate() const;
  bool needs_donor() const;
};

struct Box {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Everything needed to replay a distractor draw.
struct DistractorTrace {
  DistractorVariant variant = DistractorVariant::none;
  double lambda = 0.0;
  int frame_index = -1;
  std::optional<Box> box;
  std::optional<std::uint64_t> noise_seed;
  std::string donor_id;

  friend bool operator==(const DistractorTrace&, const DistractorTrace&) = default;
};

/// One `key=value` line; `parse_trace_line` inverts it.
std::string format_trace_line(const DistractorTrace& trace);
DistractorTrace parse_trace_line(std::string_view line);

struct DistractedClip {
  VideoClip clip;
  DistractorTrace trace;
};

/// Builds the distracting counterpart of `clip`.
///
/// intra_frame blends one static frame of the clip into every frame with a
/// single weight lambda ~ U[0, gamma]; inter_frame takes the static frame from
/// `donor`. gaussian adds one noise field to every frame, mixup blends the
/// donor frame by frame, and cutmix pastes one box from a donor frame (the
/// clip itself when no donor is given) into every frame.
DistractedClip make_distractor(const VideoClip& clip, const DistractorSpec& spec,
                               const VideoClip* donor, Rng& rng);

}  // namespace bgerase
