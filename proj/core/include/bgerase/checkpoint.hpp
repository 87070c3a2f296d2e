#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bgerase/config.hpp"
#include "bgerase/encoder.hpp"
#include "bgerase/objectives.hpp"

namespace bgerase {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a training run.
struct Checkpoint {
  ExperimentConfig config;
  std::uint64_t step = 0;
  int epoch = 0;
  std::vector<float> online;    ///< theta
  std::vector<float> momentum;  ///< theta-bar (may be empty for pretext runs)
  std::vector<float> velocity;  ///< SGD momentum buffer
  std::size_t queue_capacity = 0;
  std::size_t queue_head = 0;
  std::vector<TaggedEmbedding> queue;
  /// Filled by save/load: digest of the binary payload.
  std::string content_hash;

  Encoder<float> encoder() const;
  Encoder<float> momentum_encoder() const;
};

/// Layout: "BGCK", u32 version, u64 header length, JSON header, then the
/// little-endian arrays listed in the header.
void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// JSON summary (config, hash, dims, parameter layout) read from the file alone.
std::string describe_checkpoint(const std::filesystem::path& path);

}  // namespace bgerase
