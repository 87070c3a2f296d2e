#include <bgerase/checkpoint.hpp>
#include <bgerase/config.hpp>
#include <bgerase/errors.hpp>
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "test_support.hpp"

using namespace bgerase;
using bgerase::testing::scratch_dir;
namespace fs = std::filesystem;

TEST(Config, Defaults) {
  ExperimentConfig c;
  EXPECT_DOUBLE_EQ(c.distractor_gamma, 0.3);
  EXPECT_DOUBLE_EQ(c.objective_beta, 1.0);
  EXPECT_EQ(c.encoder_embedding_dim, 128);
  EXPECT_TRUE(c.objective_be);
  EXPECT_TRUE(c.objective_hard_negative);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeyIsRejected) {
  ExperimentConfig c;
  try {
    c.set("objective.gama", "0.3");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("objective.gama"), std::string::npos);
    EXPECT_EQ(e.exit_code(), 2);
  }
  EXPECT_THROW(c.merge_json(R"({"not.a.key": 1})"), ConfigError);
}

TEST(Config, BadValuesAreRejected) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("distractor.gamma", "abc"), ConfigError);
  EXPECT_THROW(c.set("optim.epochs", "1.5"), ConfigError);
  EXPECT_THROW(c.merge_json("[1, 2]"), ConfigError);
  EXPECT_THROW(c.merge_json("{broken"), ConfigError);
  c.set("objective.temperature", "0");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.set("distractor.gamma", "0.45");
  c.set("encoder.channels", "4,8,16");
  c.set("objective.be", "false");
  c.set("run.seed", "17");
  ExperimentConfig back = ExperimentConfig::from_json(c.to_json(2));
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(nlohmann::json::parse(c.to_json()).at("schema_version"), kSchemaVersion);
}

TEST(Config, HashIgnoresKeyOrder) {
  ExperimentConfig a, b;
  a.merge_json(R"({"distractor.gamma": 0.2, "run.seed": 5, "optim.lr": 0.05})");
  b.merge_json(R"({"optim.lr": 0.05, "run.seed": 5, "distractor.gamma": 0.2})");
  EXPECT_EQ(a.hash(), b.hash());
  b.set("run.seed", "6");
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, EveryKeyAppearsInJson) {
  const auto j = nlohmann::json::parse(ExperimentConfig{}.to_json());
  for (const auto& key : ExperimentConfig::keys()) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Config, LaterSourcesOverrideEarlierOnes) {
  const fs::path dir = scratch_dir("config");
  const fs::path file = dir / "c.json";
  std::ofstream(file) << R"({"distractor.gamma": 0.5, "optim.lr": 0.2})";
  ExperimentConfig c;
  c.merge_file(file);
  c.set("distractor.gamma", "0.1");
  EXPECT_DOUBLE_EQ(c.distractor_gamma, 0.1);
  EXPECT_DOUBLE_EQ(c.optim_lr, 0.2);
  EXPECT_DOUBLE_EQ(c.objective_beta, 1.0);
  EXPECT_THROW(c.merge_file(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}

TEST(Config, DataRootResolution) {
  ExperimentConfig c;
  ::unsetenv("BGERASE_DATA_DIR");
  EXPECT_EQ(resolve_data_root(c), fs::path("data"));
  ::setenv("BGERASE_DATA_DIR", "/tmp/somewhere", 1);
  EXPECT_EQ(resolve_data_root(c), fs::path("/tmp/somewhere"));
  c.data_root = "explicit";
  EXPECT_EQ(resolve_data_root(c), fs::path("explicit"));
  ::unsetenv("BGERASE_DATA_DIR");
}

TEST(Config, BeOffMeansNoDistractor) {
  ExperimentConfig c;
  c.set("distractor.variant", "intra_frame");
  EXPECT_EQ(c.effective_variant(), DistractorVariant::intra_frame);
  c.set("objective.be", "false");
  EXPECT_EQ(c.effective_variant(), DistractorVariant::none);
}

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.config.set("encoder.channels", "4,8");
  ck.config.set("encoder.strides", "1,2,2,2,2,2");
  ck.config.set("encoder.convs_per_stage", "1");
  ck.config.set("encoder.norm_groups", "2");
  ck.config.set("encoder.embedding_dim", "8");
  Encoder<float> enc(ck.config.encoder_config());
  Rng rng(3);
  enc.initialize(rng);
  ck.online.assign(enc.parameters().begin(), enc.parameters().end());
  ck.momentum = ck.online;
  for (float& v : ck.momentum) v *= 0.5f;
  ck.velocity.assign(ck.online.size(), 0.25f);
  ck.step = 42;
  ck.epoch = 3;
  ck.queue_capacity = 4;
  ck.queue_head = 1;
  for (int i = 0; i < 2; ++i) {
    ck.queue.push_back({std::vector<double>(8, 0.1 * i), 100u + i, "vid" + std::to_string(i), 4 * i});
  }
  return ck;
}

}  // namespace

TEST(Checkpoint, RoundTrip) {
  const fs::path dir = scratch_dir("ckpt");
  Checkpoint ck = sample_checkpoint();
  save_checkpoint(dir / "a.bgck", ck);
  EXPECT_FALSE(ck.content_hash.empty());
  Checkpoint back = load_checkpoint(dir / "a.bgck");
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.online, ck.online);
  EXPECT_EQ(back.momentum, ck.momentum);
  EXPECT_EQ(back.velocity, ck.velocity);
  EXPECT_EQ(back.queue_capacity, 4u);
  EXPECT_EQ(back.queue_head, 1u);
  ASSERT_EQ(back.queue.size(), 2u);
  EXPECT_EQ(back.queue[1].z, ck.queue[1].z);
  EXPECT_EQ(back.queue[1].uid, 101u);
  EXPECT_EQ(back.queue[1].video_id, "vid1");
  EXPECT_EQ(back.queue[1].clip_start, 4);
  EXPECT_EQ(back.content_hash, ck.content_hash);

  Encoder<float> enc = back.encoder();
  EXPECT_TRUE(std::equal(enc.parameters().begin(), enc.parameters().end(), ck.online.begin()));
  Encoder<float> mom = back.momentum_encoder();
  EXPECT_EQ(mom.parameters()[0], ck.momentum[0]);

  save_checkpoint(dir / "b.bgck", back);
  std::ifstream fa(dir / "a.bgck", std::ios::binary), fb(dir / "b.bgck", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(fa), {}),
            std::string(std::istreambuf_iterator<char>(fb), {}));
  fs::remove_all(dir);
}

TEST(Checkpoint, DescribeReadsFileOnly) {
  const fs::path dir = scratch_dir("ckpt_describe");
  Checkpoint ck = sample_checkpoint();
  save_checkpoint(dir / "a.bgck", ck);
  const auto j = nlohmann::json::parse(describe_checkpoint(dir / "a.bgck"));
  EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(j.at("content_hash"), ck.content_hash);
  EXPECT_EQ(j.at("embedding_dim"), 8);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const fs::path dir = scratch_dir("ckpt_corrupt");
  Checkpoint ck = sample_checkpoint();
  const fs::path p = dir / "a.bgck";
  save_checkpoint(p, ck);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(p), IoError);
  std::ofstream(dir / "junk.bgck") << "NOPE0000000000000000";
  try {
    load_checkpoint(dir / "junk.bgck");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(dir / "absent.bgck"), IoError);
  fs::remove_all(dir);
}

TEST(Checkpoint, MismatchedConfigIsInputError) {
  Checkpoint ck = sample_checkpoint();
  ck.online.pop_back();
  EXPECT_THROW(ck.encoder(), InputError);
  ck.momentum.clear();
  EXPECT_THROW(ck.momentum_encoder(), InputError);
}
