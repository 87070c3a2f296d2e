#include <bgerase/errors.hpp>
#include <bgerase/video.hpp>
#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"

using namespace bgerase;
using bgerase::testing::constant_clip;
using bgerase::testing::random_clip;

namespace {

RawVideo counting_video(int frames) {
  RawVideo v;
  v.id = "count";
  v.shape = {frames, 1, 1, 1};
  for (int t = 0; t < frames; ++t) v.pixels.push_back(static_cast<std::uint8_t>(t));
  return v;
}

}  // namespace

TEST(SampleClip, SingleLegalWindow) {
  RawVideo v = counting_video(64);
  EXPECT_EQ(valid_start_count(64, 16, 4), 1);
  Rng rng(1);
  VideoClip c = sample_clip(v, 16, 4, rng);
  ASSERT_EQ(c.frames(), 16);
  EXPECT_EQ(c.start_index(), 0);
  EXPECT_EQ(c.stride(), 4);
  for (int t = 0; t < 16; ++t) EXPECT_FLOAT_EQ(c.at(t, 0, 0, 0), (4.0f * t) / 255.0f);
}

TEST(SampleClip, TooShortNamesBothCounts) {
  RawVideo v = counting_video(16);
  Rng rng(1);
  try {
    sample_clip(v, 16, 4, rng);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("64"), std::string::npos) << msg;
    EXPECT_NE(msg.find("16"), std::string::npos) << msg;
  }
}

TEST(SampleClip, StartsAreUniform) {
  RawVideo v = counting_video(70);
  ASSERT_EQ(valid_start_count(70, 16, 4), 7);
  Rng rng(2024);
  std::vector<int> counts(7, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    VideoClip c = sample_clip(v, 16, 4, rng);
    ASSERT_GE(c.start_index(), 0);
    ASSERT_LT(c.start_index(), 7);
    ++counts[c.start_index()];
  }
  const double expected = draws / 7.0;
  double chi2 = 0.0;
  for (int n : counts) chi2 += (n - expected) * (n - expected) / expected;
  boost::math::chi_squared dist(6);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << chi2;
}

TEST(SampleClip, PureFunctionOfSeed) {
  Rng data_rng(4);
  VideoClip video = random_clip({40, 3, 3, 3}, data_rng);
  Rng a(77), b(77);
  VideoClip x = sample_clip(video, 8, 2, a);
  VideoClip y = sample_clip(video, 8, 2, b);
  EXPECT_EQ(x.start_index(), y.start_index());
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(UniformClipStarts, SpansValidRange) {
  auto s = uniform_clip_starts(32, 8, 2, 10);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(s.front(), 0);
  EXPECT_EQ(s.back(), 16);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
}

TEST(SpatialCrop, FullSizeIsIdentity) {
  Rng rng(5);
  VideoClip c = random_clip({4, 6, 7, 3}, rng);
  auto out = random_spatial_crop(c, 6, 7, rng);
  EXPECT_EQ(out.clip.shape(), c.shape());
  EXPECT_TRUE(std::equal(c.data().begin(), c.data().end(), out.clip.data().begin()));
}

TEST(SpatialCrop, SameWindowEveryFrame) {
  // Encode (t, y, x) into each pixel so the crop offset is recoverable per frame.
  ClipShape shape{6, 64, 64, 1};
  VideoClip c(shape);
  for (int t = 0; t < 6; ++t)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) c.at(t, y, x, 0) = static_cast<float>(y * 64 + x) / 4096.0f;
  Rng rng(9);
  auto out = random_spatial_crop(c, 32, 32, rng);
  ASSERT_EQ(out.clip.height(), 32);
  for (int t = 0; t < 6; ++t) {
    const int code = static_cast<int>(std::lround(out.clip.at(t, 0, 0, 0) * 4096.0f));
    EXPECT_EQ(code / 64, out.window.top);
    EXPECT_EQ(code % 64, out.window.left);
  }
}

TEST(SpatialCrop, MeanWithinSourceBounds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    VideoClip c = random_clip({3, 12, 12, 3}, rng);
    auto [lo, hi] = std::minmax_element(c.data().begin(), c.data().end());
    auto out = random_spatial_crop(c, 5, 7, rng);
    double mean = 0.0;
    for (float v : out.clip.data()) mean += v;
    mean /= static_cast<double>(out.clip.data().size());
    EXPECT_GE(mean, *lo);
    EXPECT_LE(mean, *hi);
  }
}

TEST(SpatialCrop, OversizeThrows) {
  Rng rng(1);
  VideoClip c = random_clip({2, 8, 8, 3}, rng);
  EXPECT_THROW(random_spatial_crop(c, 9, 8, rng), InputError);
}

TEST(Augmentation, ZeroMagnitudeIsIdentity) {
  Rng rng(3);
  VideoClip c = random_clip({4, 9, 9, 3}, rng);
  AugmentationSet aug;
  aug.rotation_max_degrees = 0;
  aug.brightness = aug.contrast = aug.saturation = 0;
  auto out = apply_basic_augmentation(c, aug, rng);
  EXPECT_TRUE(out.params.is_identity());
  EXPECT_TRUE(std::equal(c.data().begin(), c.data().end(), out.clip.data().begin()));
}

TEST(Augmentation, RotationBound) {
  AugmentationSet aug;
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(std::abs(draw_augmentation(aug, rng).rotation_degrees), 10.0);
  }
}

TEST(Augmentation, BrightnessOnConstantClip) {
  for (double delta : {0.3, -0.2, 0.7}) {
    VideoClip c = constant_clip({3, 5, 5, 3}, 0.5f);
    AugmentationParams p;
    p.brightness_shift = delta;
    VideoClip out = apply_augmentation(c, p);
    const float want = static_cast<float>(std::clamp(0.5 + delta, 0.0, 1.0));
    for (float v : out.data()) EXPECT_FLOAT_EQ(v, want);
  }
}

TEST(Augmentation, TemporallyConsistent) {
  Rng rng(21);
  VideoClip c = random_clip({5, 10, 10, 3}, rng);
  AugmentationSet aug;
  auto out = apply_basic_augmentation(c, aug, rng);
  EXPECT_FALSE(out.params.is_identity());
  std::vector<float> frame(c.shape().frame_size());
  for (int t = 0; t < c.frames(); ++t) {
    augment_frame(c.frame(t), frame, c.height(), c.width(), c.channels(), out.params);
    auto got = out.clip.frame(t);
    EXPECT_TRUE(std::equal(frame.begin(), frame.end(), got.begin())) << "frame " << t;
  }
}

TEST(Augmentation, OutputsStayInUnitRange) {
  AugmentationSet aug;
  aug.brightness = 0.9;
  aug.contrast = 0.9;
  aug.saturation = 0.9;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    VideoClip c = random_clip({2, 8, 8, 3}, rng);
    EXPECT_TRUE(apply_basic_augmentation(c, aug, rng).clip.in_unit_range());
  }
}

TEST(TemporalDifference, StaticClipIsZero) {
  Rng rng(2);
  VideoClip c = make_static(random_clip({6, 4, 4, 3}, rng), 2);
  FrameTensor d = temporal_difference(c);
  EXPECT_EQ(d.shape.frames, 5);
  for (float v : d.data) EXPECT_EQ(v, 0.0f);
}

TEST(TemporalDifference, ScalarClip) {
  VideoClip c({3, 1, 1, 1}, std::vector<float>{0.0f, 0.25f, 1.0f});
  FrameTensor d = temporal_difference(c);
  ASSERT_EQ(d.data.size(), 2u);
  EXPECT_FLOAT_EQ(d.data[0], 0.25f);
  EXPECT_FLOAT_EQ(d.data[1], 0.75f);
}

TEST(TemporalDifference, Linear) {
  Rng rng(8);
  VideoClip c = random_clip({5, 3, 3, 3}, rng);
  VideoClip half = c;
  for (float& v : half.data()) v *= 0.5f;
  FrameTensor a = temporal_difference(c), b = temporal_difference(half);
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_FLOAT_EQ(b.data[i], 0.5f * a.data[i]);
}

TEST(TemporalDifference, SingleFrameThrows) {
  VideoClip c = constant_clip({1, 2, 2, 3}, 0.1f);
  EXPECT_THROW(temporal_difference(c), InputError);
}

TEST(VideoClipType, RejectsMismatchedData) {
  EXPECT_THROW(VideoClip({2, 2, 2, 3}, std::vector<float>(5)), InputError);
}
