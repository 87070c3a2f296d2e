#include "bgerase/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bgerase/errors.hpp"

namespace bgerase {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint arrays are written in host order, which must be little-endian");

namespace {

constexpr char kMagic[4] = {'B', 'G', 'C', 'K'};

template <typename T>
void append(std::string& buf, const std::vector<T>& v) {
  const auto* p = reinterpret_cast<const char*>(v.data());
  buf.append(p, v.size() * sizeof(T));
}

template <typename T>
std::vector<T> take(const std::string& buf, std::size_t& pos, std::size_t count,
                    const std::string& what, const std::filesystem::path& path) {
  const std::size_t bytes = count * sizeof(T);
  if (pos + bytes > buf.size()) {
    throw IoError(path.string() + ": truncated array '" + what + "'");
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), buf.data() + pos, bytes);
  pos += bytes;
  return out;
}

json layout_json(const Encoder<float>& enc) {
  json arr = json::array();
  for (const auto& p : enc.layout()) {
    arr.push_back(json{{"name", p.name}, {"shape", p.shape}, {"offset", p.offset}, {"size", p.size}});
  }
  return arr;
}

struct RawCheckpoint {
  json header;
  std::string payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 16) throw IoError(path.string() + ": truncated checkpoint header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError(path.string() + ": bad checkpoint magic at offset 0");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (16 + header_len > bytes.size()) {
    throw IoError(path.string() + ": checkpoint header length exceeds file size");
  }
  RawCheckpoint raw;
  try {
    raw.header = json::parse(bytes.substr(16, header_len));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": checkpoint header is not valid JSON");
  }
  raw.payload = bytes.substr(16 + header_len);
  const std::string digest = hex_digest(raw.payload);
  if (raw.header.value("content_hash", std::string{}) != digest) {
    throw IoError(path.string() + ": checkpoint content hash mismatch (file corrupt)");
  }
  return raw;
}

}  // namespace

Encoder<float> Checkpoint::encoder() const {
  Encoder<float> enc(config.encoder_config());
  if (online.size() != enc.parameter_count()) {
    throw InputError("checkpoint has " + std::to_string(online.size()) +
                     " parameters, encoder config expects " +
                     std::to_string(enc.parameter_count()));
  }
  std::copy(online.begin(), online.end(), enc.parameters().begin());
  return enc;
}

Encoder<float> Checkpoint::momentum_encoder() const {
  Encoder<float> enc(config.encoder_config());
  if (momentum.size() != enc.parameter_count()) {
    throw InputError("checkpoint holds no momentum encoder");
  }
  std::copy(momentum.begin(), momentum.end(), enc.parameters().begin());
  return enc;
}

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt) {
  std::string payload;
  json arrays = json::array();
  auto add = [&](const std::string& name, const auto& v, const char* dtype) {
    arrays.push_back(json{{"name", name}, {"dtype", dtype}, {"count", v.size()},
                          {"offset", payload.size()}});
    append(payload, v);
  };
  add("online", ckpt.online, "f32");
  add("momentum", ckpt.momentum, "f32");
  add("velocity", ckpt.velocity, "f32");
  std::vector<double> queue_z;
  json tags = json::array();
  for (const auto& e : ckpt.queue) {
    queue_z.insert(queue_z.end(), e.z.begin(), e.z.end());
    tags.push_back(json{{"uid", e.uid}, {"video_id", e.video_id}, {"clip_start", e.clip_start}});
  }
  add("queue", queue_z, "f64");
  ckpt.content_hash = hex_digest(payload);

  const Encoder<float> enc(ckpt.config.encoder_config());
  const EncoderConfig ec = ckpt.config.encoder_config();
  const FeatureShape fs = ec.feature_shape(ec.input_frames, ec.input_height, ec.input_width);
  json header{
      {"schema_version", kSchemaVersion},
      {"format", "bgerase-checkpoint"},
      {"config", json::parse(ckpt.config.to_json())},
      {"config_hash", ckpt.config.hash()},
      {"seed", ckpt.config.run_seed},
      {"step", ckpt.step},
      {"epoch", ckpt.epoch},
      {"parameter_count", enc.parameter_count()},
      {"input", {ec.input_frames, ec.input_height, ec.input_width, ec.in_channels}},
      {"feature", {fs.channels, fs.frames, fs.height, fs.width}},
      {"embedding_dim", ec.embedding_dim},
      {"layout", layout_json(enc)},
      {"arrays", arrays},
      {"queue", {{"capacity", ckpt.queue_capacity}, {"head", ckpt.queue_head},
                 {"size", ckpt.queue.size()}, {"tags", tags}}},
      {"content_hash", ckpt.content_hash},
  };
  const std::string h = header.dump();
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = h.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  const json& h = raw.header;
  Checkpoint c;
  try {
    c.config = ExperimentConfig::from_json(h.at("config").dump());
    if (h.at("config_hash").get<std::string>() != c.config.hash()) {
      throw IoError(path.string() + ": stored config hash does not match its config");
    }
    c.step = h.at("step").get<std::uint64_t>();
    c.epoch = h.at("epoch").get<int>();
    std::size_t pos = 0;
    for (const auto& a : h.at("arrays")) {
      const std::string name = a.at("name");
      const std::size_t count = a.at("count");
      if (a.at("offset").get<std::size_t>() != pos) {
        throw IoError(path.string() + ": array '" + name + "' offset mismatch");
      }
      if (name == "online") c.online = take<float>(raw.payload, pos, count, name, path);
      else if (name == "momentum") c.momentum = take<float>(raw.payload, pos, count, name, path);
      else if (name == "velocity") c.velocity = take<float>(raw.payload, pos, count, name, path);
      else if (name == "queue") {
        const std::vector<double> z = take<double>(raw.payload, pos, count, name, path);
        const auto& q = h.at("queue");
        c.queue_capacity = q.at("capacity");
        c.queue_head = q.at("head");
        const auto& tags = q.at("tags");
        const std::size_t n = tags.size();
        if (n == 0 && !z.empty()) throw IoError(path.string() + ": queue tags missing");
        const std::size_t dim = n == 0 ? 0 : z.size() / n;
        if (dim * n != z.size()) throw IoError(path.string() + ": queue payload size mismatch");
        for (std::size_t i = 0; i < n; ++i) {
          TaggedEmbedding e;
          e.z.assign(z.begin() + static_cast<std::ptrdiff_t>(i * dim),
                     z.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
          e.uid = tags[i].at("uid");
          e.video_id = tags[i].at("video_id");
          e.clip_start = tags[i].at("clip_start");
          c.queue.push_back(std::move(e));
        }
      } else {
        throw IoError(path.string() + ": unknown array '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header (" + e.what() + ")");
  }
  c.content_hash = h.at("content_hash");
  return c;
}

std::string describe_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  json h = raw.header;
  h["queue"].erase("tags");
  json out{{"schema_version", kSchemaVersion},
           {"path", path.string()},
           {"file_bytes", std::filesystem::file_size(path)}};
  for (const char* k : {"config", "config_hash", "seed", "step", "epoch", "parameter_count",
                        "input", "feature", "embedding_dim", "layout", "queue", "content_hash"}) {
    out[k] = h.at(k);
  }
  return out.dump(2);
}

}  // namespace bgerase
