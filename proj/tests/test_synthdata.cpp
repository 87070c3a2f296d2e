#include <bgerase/errors.hpp>
#include <bgerase/synthdata.hpp>
#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "test_support.hpp"

using namespace bgerase;
using bgerase::testing::scratch_dir;
using bgerase::testing::tiny_dataset_config;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> directory_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

class TinyDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch_dir("synth"));
    manifest_ = new SyntheticDatasetManifest(generate_dataset(tiny_dataset_config(), *dir_));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete manifest_;
    delete dir_;
  }
  static fs::path* dir_;
  static SyntheticDatasetManifest* manifest_;
};

fs::path* TinyDataset::dir_ = nullptr;
SyntheticDatasetManifest* TinyDataset::manifest_ = nullptr;

}  // namespace

TEST(SynthBias, FullBiasAlwaysUsesClassBackground) {
  DatasetConfig c;
  c.bias_rho = 1.0;
  for (int i = 0; i < 400; ++i) {
    const int label = i % c.num_classes;
    EXPECT_EQ(make_recipe(c, i, label, Split::train).record.background_id, label);
  }
}

TEST(SynthBias, EmpiricalBiasWithinBinomialInterval) {
  DatasetConfig c;
  c.bias_rho = 0.9;
  c.videos_per_class = 100;
  int hits = 0, n = 0;
  for (int label = 0; label < c.num_classes; ++label) {
    for (int j = 0; j < c.videos_per_class; ++j, ++n) {
      hits += make_recipe(c, n, label, Split::train).record.background_id == label;
    }
  }
  const double rate = double(hits) / n;
  EXPECT_GE(rate, 0.85);
  EXPECT_LE(rate, 0.95);
}

TEST(SynthBias, AntiBiasNeverMatchesClass) {
  DatasetConfig c;
  for (int i = 0; i < 2000; ++i) {
    const int label = i % c.num_classes;
    const int bg = make_recipe(c, i, label, Split::test_antibias).record.background_id;
    EXPECT_NE(bg, label);
    EXPECT_GE(bg, 0);
    EXPECT_LT(bg, c.num_classes);
  }
}

TEST(SynthSprite, TrajectoryIndependentOfBackground) {
  DatasetConfig c = tiny_dataset_config();
  for (int label = 0; label < 8; ++label) {
    c.num_classes = 8;
    VideoRecipe r = make_recipe(c, 10 + label, label, Split::train);
    auto a = render_video(c, r, 1);
    auto b = render_video(c, r, 6);
    EXPECT_EQ(a.sprite_mask, b.sprite_mask) << motion_name(motion_for_class(label));
    EXPECT_NE(a.video.pixels, b.video.pixels);
  }
}

TEST(SynthSprite, EveryProgramMoves) {
  DatasetConfig c = tiny_dataset_config();
  c.num_classes = 8;
  for (int label = 0; label < 8; ++label) {
    auto v = render_video(c, make_recipe(c, label, label, Split::train));
    const std::size_t ms = std::size_t(c.height) * c.width;
    bool moved = false;
    for (int t = 1; t < c.frames && !moved; ++t) {
      moved = !std::equal(v.sprite_mask.begin(), v.sprite_mask.begin() + ms,
                          v.sprite_mask.begin() + t * ms);
    }
    EXPECT_TRUE(moved) << motion_name(motion_for_class(label));
  }
}

TEST_F(TinyDataset, ClassBalanceAndDisjointSplits) {
  const auto& cfg = manifest_->config;
  std::set<std::string> ids;
  for (Split s : all_splits()) {
    std::map<int, int> per_class;
    for (const auto* r : manifest_->split_records(s)) {
      EXPECT_TRUE(ids.insert(r->id).second) << r->id;
      ++per_class[r->class_label];
      EXPECT_TRUE(fs::exists(*dir_ / r->path));
    }
    for (int c = 0; c < cfg.num_classes; ++c) {
      EXPECT_EQ(per_class[c], s == Split::train ? cfg.videos_per_class : cfg.test_videos_per_class);
    }
  }
}

TEST_F(TinyDataset, SplitBackgroundRules) {
  for (const auto& r : manifest_->records) {
    if (r.split == Split::test_actor) {
      EXPECT_EQ(r.background_id, -1);
    } else {
      EXPECT_GE(r.background_id, 0);
    }
    if (r.split == Split::test_antibias) {
      EXPECT_NE(r.background_id, r.class_label);
    }
  }
}

TEST_F(TinyDataset, StaticVideosHaveNoMotion) {
  Dataset d(*manifest_, *dir_);
  for (const auto* r : manifest_->split_records(Split::test_static)) {
    FrameTensor td = temporal_difference(d.video(*r).to_clip());
    for (float v : td.data) ASSERT_EQ(v, 0.0f) << r->id;
  }
}

TEST_F(TinyDataset, LosslessRoundTrip) {
  Dataset d(*manifest_, *dir_);
  DatasetConfig cfg = manifest_->config;
  for (const auto* r : manifest_->split_records(Split::test_inbias)) {
    VideoRecipe rc = make_recipe(cfg, r->index, r->class_label, r->split);
    EXPECT_EQ(d.video(*r).pixels, render_video(cfg, rc).video.pixels);
    VideoClip c = d.video(*r).to_clip();
    for (std::size_t i = 0; i < c.data().size(); i += 97) {
      EXPECT_EQ(c.data()[i], d.video(*r).pixels[i] / 255.0f);
    }
  }
}

TEST_F(TinyDataset, LoadClipDeterministic) {
  Dataset d(*manifest_, *dir_);
  const std::string id = manifest_->records.front().id;
  Rng a(5), b(5);
  VideoClip x = load_clip(d, id, {4, 2}, a);
  VideoClip y = load_clip(d, id, {4, 2}, b);
  EXPECT_EQ(x.start_index(), y.start_index());
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST_F(TinyDataset, ByteIdenticalRegeneration) {
  fs::path again = scratch_dir("synth_again");
  generate_dataset(tiny_dataset_config(), again);
  EXPECT_EQ(directory_bytes(*dir_), directory_bytes(again));
  fs::remove_all(again);
}

TEST_F(TinyDataset, ManifestJsonRoundTrip) {
  SyntheticDatasetManifest m = read_manifest(*dir_ / "manifest.json");
  EXPECT_EQ(manifest_to_json(m), manifest_to_json(*manifest_));
  auto j = nlohmann::json::parse(slurp(*dir_ / "manifest.json"));
  EXPECT_EQ(j.at("version").get<int>(), 1);
  EXPECT_EQ(j.at("records").size(), manifest_->records.size());
}

TEST(Bevd, HeaderLayout) {
  RawVideo v;
  v.shape = {2, 3, 4, 3};
  for (std::size_t i = 0; i < v.shape.size(); ++i) v.pixels.push_back(std::uint8_t(i));
  fs::path dir = scratch_dir("bevd");
  write_bevd(dir / "v.bevd", v);
  const std::string bytes = slurp(dir / "v.bevd");
  ASSERT_EQ(bytes.size(), 4 + 4 + 8 + v.pixels.size());
  EXPECT_EQ(bytes.substr(0, 4), "BEVD");
  auto u16 = [&](std::size_t off) {
    return int(std::uint8_t(bytes[off])) | (int(std::uint8_t(bytes[off + 1])) << 8);
  };
  EXPECT_EQ(u16(4), 1);
  EXPECT_EQ(u16(6), 0);
  EXPECT_EQ(u16(8), 2);
  EXPECT_EQ(u16(10), 3);
  EXPECT_EQ(u16(12), 4);
  EXPECT_EQ(u16(14), 3);
  EXPECT_EQ(std::uint8_t(bytes[16 + 5]), 5);
  EXPECT_EQ(read_bevd(dir / "v.bevd").pixels, v.pixels);
  fs::remove_all(dir);
}

TEST(Bevd, CorruptionIsDetected) {
  RawVideo v;
  v.shape = {2, 4, 4, 3};
  v.pixels.assign(v.shape.size(), 7);
  fs::path dir = scratch_dir("bevd_bad");
  write_bevd(dir / "ok.bevd", v);
  std::string bytes = slurp(dir / "ok.bevd");

  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  auto expect_error = [&](const fs::path& p, const std::string& needle) {
    try {
      read_bevd(p);
      ADD_FAILURE() << "no error for " << p;
    } catch (const IoError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find(p.filename().string()), std::string::npos) << msg;
      EXPECT_NE(msg.find(needle), std::string::npos) << msg;
    }
  };
  expect_error(write("trunc.bevd", bytes.substr(0, bytes.size() - 10)), "offset");
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_error(write("magic.bevd", bad_magic), "magic");
  expect_error(write("short.bevd", bytes.substr(0, 6)), "offset");
  fs::remove_all(dir);
}

TEST(SynthConfig, ZeroClassesRejected) {
  DatasetConfig c = tiny_dataset_config();
  c.num_classes = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  fs::path dir = scratch_dir("zero");
  EXPECT_THROW(generate_dataset(c, dir), ConfigError);
  fs::remove_all(dir);
}

TEST(SynthConfig, UnwritablePathIsIoError) {
  fs::path dir = scratch_dir("unwritable");
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(generate_dataset(tiny_dataset_config(), dir / "file" / "sub"), IoError);
  fs::remove_all(dir);
}
