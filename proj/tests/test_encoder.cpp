#include <bgerase/encoder.hpp>
#include <bgerase/errors.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace bgerase;
using bgerase::testing::activation_signature;
using bgerase::testing::central_difference;
using bgerase::testing::random_clip;
using bgerase::testing::two_layer_config;

namespace {

template <typename T>
FeatureMap<T> random_map(FeatureShape s, Rng& rng) {
  FeatureMap<T> f(s);
  std::normal_distribution<double> n(0.0, 1.0);
  for (T& v : f.data) v = static_cast<T>(n(rng));
  return f;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST(EncoderShape, DefaultConfigTrace) {
  EncoderConfig cfg;
  EXPECT_EQ(cfg.feature_shape(8, 64, 64), (FeatureShape{128, 2, 4, 4}));
  Encoder<float> enc(cfg);
  Rng rng(1);
  enc.initialize(rng);
  VideoClip clip = random_clip({8, 64, 64, 3}, rng);
  FeatureMap<float> f = enc.forward(clip);
  EXPECT_EQ(f.shape, (FeatureShape{128, 2, 4, 4}));
  auto p = enc.project(f);
  EXPECT_EQ(p.embedding.size(), 128u);
}

TEST(EncoderShape, MismatchNamesBothShapes) {
  EncoderConfig cfg = two_layer_config();
  cfg.input_frames = 4;
  cfg.input_height = 8;
  cfg.input_width = 8;
  Encoder<float> enc(cfg);
  Rng rng(2);
  try {
    enc.forward(random_clip({4, 10, 8, 3}, rng));
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("4x10x8x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x8x8x3"), std::string::npos) << msg;
  }
}

TEST(EncoderShape, ConfigValidation) {
  EncoderConfig cfg = two_layer_config();
  cfg.strides.pop_back();
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = two_layer_config();
  cfg.channels[0] = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Encoder, BatchSamplesIndependent) {
  Encoder<float> enc(two_layer_config());
  Rng rng(3);
  enc.initialize(rng);
  VideoClip c = random_clip({4, 8, 8, 3}, rng);
  VideoClip other = random_clip({4, 8, 8, 3}, rng);
  std::vector<VideoClip> batch{c, other, c};
  auto out = encode(enc, std::span<const VideoClip>(batch));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].data, out[2].data);
  EXPECT_EQ(out[0].data, enc.forward(c).data);
}

TEST(EncoderGradient, ParametersMatchFiniteDifferences) {
  Encoder<double> enc(two_layer_config());
  Rng rng(4);
  enc.initialize(rng);
  VideoClip clip = random_clip({4, 6, 6, 3}, rng);
  const FeatureShape fs = enc.feature_shape({3, 4, 6, 6});
  FeatureMap<double> r = random_map<double>(fs, rng);

  auto loss = [&] {
    FeatureMap<double> f = enc.forward(clip);
    return dot(f.data, r.data);
  };
  EncoderTape<double> tape;
  enc.forward(clip, &tape);
  std::vector<double> grad(enc.parameter_count(), 0.0);
  enc.backward(tape, r, grad);
  auto res = central_difference(enc.parameters(), loss, grad, 1e-3,
                                [&] { return activation_signature(enc, {clip}); });
  EXPECT_LT(res.relative_error, 1e-4) << res.fd_norm << " vs " << res.analytic_norm;
}

TEST(EncoderGradient, InputMatchesFiniteDifferences) {
  Encoder<double> enc(two_layer_config());
  Rng rng(5);
  enc.initialize(rng);
  FeatureMap<double> x = clip_to_input<double>(random_clip({4, 6, 6, 3}, rng));
  FeatureMap<double> r = random_map<double>(enc.feature_shape(x.shape), rng);
  auto loss = [&] { return dot(enc.forward(x).data, r.data); };

  EncoderTape<double> tape;
  enc.forward(x, &tape);
  std::vector<double> grad(enc.parameter_count(), 0.0);
  FeatureMap<double> gx;
  enc.backward(tape, r, grad, &gx);
  ASSERT_EQ(gx.shape, x.shape);
  auto res = central_difference(x.data, loss, gx.data);
  EXPECT_LT(res.relative_error, 1e-4);
}

TEST(EncoderGradient, ProjectionHeadMatchesFiniteDifferences) {
  Encoder<double> enc(two_layer_config(5));
  Rng rng(6);
  enc.initialize(rng);
  VideoClip clip = random_clip({4, 6, 6, 3}, rng);
  std::vector<double> r(5);
  for (double& v : r) v = uniform01(rng) - 0.5;
  auto loss = [&] { return dot(enc.project(enc.forward(clip)).embedding, r); };

  EncoderTape<double> tape;
  FeatureMap<double> f = enc.forward(clip, &tape);
  auto p = enc.project(f);
  std::vector<double> grad(enc.parameter_count(), 0.0);
  FeatureMap<double> gf = enc.project_backward(f.shape, p, r, grad);
  enc.backward(tape, gf, grad);
  auto res = central_difference(enc.parameters(), loss, grad, 1e-3,
                                [&] { return activation_signature(enc, {clip}); });
  EXPECT_LT(res.relative_error, 1e-4);
}

TEST(EncoderGradient, ClassifierHeadMatchesFiniteDifferences) {
  Encoder<double> enc(two_layer_config(4, 3));
  Rng rng(7);
  enc.initialize(rng);
  VideoClip clip = random_clip({4, 6, 6, 3}, rng);
  const std::vector<double> r{0.3, -1.2, 0.8};
  auto loss = [&] { return dot(enc.classify(enc.forward(clip)).logits, r); };

  EncoderTape<double> tape;
  FeatureMap<double> f = enc.forward(clip, &tape);
  auto c = enc.classify(f);
  std::vector<double> grad(enc.parameter_count(), 0.0);
  enc.backward(tape, enc.classify_backward(f.shape, c, r, grad), grad);
  auto res = central_difference(enc.parameters(), loss, grad, 1e-3,
                                [&] { return activation_signature(enc, {clip}); });
  EXPECT_LT(res.relative_error, 1e-4);
}

TEST(EncoderGradient, PsiHeadMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Encoder<double> enc(two_layer_config());
    Rng rng(20 + seed);
    enc.initialize(rng);
    VideoClip clip = random_clip({4, 6, 6, 3}, rng);
    EncoderTape<double> tape;
    FeatureMap<double> f = enc.forward(clip, &tape);
    PooledTemporal<double> psi = pool_psi(f);
    std::vector<double> r(psi.values.size());
    for (double& v : r) v = uniform01(rng) - 0.5;
    auto loss = [&] { return dot(pool_psi(enc.forward(clip)).values, r); };
    std::vector<double> grad(enc.parameter_count(), 0.0);
    enc.backward(tape, pool_psi_backward(f.shape, psi, std::span<const double>(r)), grad);
    auto res = central_difference(enc.parameters(), loss, grad, 1e-3,
                                  [&] { return activation_signature(enc, {clip}); });
    EXPECT_LT(res.relative_error, 1e-4) << "seed " << seed;
    EXPECT_EQ(res.unstable, 0u);
  }
}

TEST(PoolPsi, ConstantMap) {
  FeatureMap<float> f({3, 2, 4, 5});
  std::fill(f.data.begin(), f.data.end(), 0.75f);
  auto p = pool_psi(f);
  EXPECT_EQ(p.channels, 3);
  EXPECT_EQ(p.frames, 2);
  for (float v : p.values) EXPECT_EQ(v, 0.75f);
}

TEST(PoolPsi, DirectEvaluation) {
  FeatureMap<float> f({1, 1, 1, 3});
  f.data = {-1.0f, 3.0f, 2.0f};
  auto p = pool_psi(f);
  ASSERT_EQ(p.values.size(), 1u);
  EXPECT_EQ(p.at(0, 0), 3.0f);
}

TEST(PoolPsi, SpatialPermutationInvariant) {
  Rng rng(8);
  FeatureMap<float> f = random_map<float>({4, 3, 5, 5}, rng);
  FeatureMap<float> g = f;
  const std::size_t sp = f.shape.spatial();
  for (std::size_t ct = 0; ct < 12; ++ct) {
    std::shuffle(g.data.begin() + ct * sp, g.data.begin() + (ct + 1) * sp, rng);
  }
  EXPECT_EQ(pool_psi(f).values, pool_psi(g).values);
}

TEST(PoolPsi, ShapeIsChannelsByFrames) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    FeatureShape s{1 + trial % 4, 1 + trial % 3, 1 + trial, 2 + trial % 5};
    auto p = pool_psi(random_map<double>(s, rng));
    EXPECT_EQ(p.values.size(), std::size_t(s.channels) * s.frames);
  }
}

TEST(PoolPhi, UnitNormEmbeddings) {
  Encoder<float> enc(two_layer_config(16));
  Rng rng(10);
  enc.initialize(rng);
  for (int i = 0; i < 20; ++i) {
    auto p = enc.project(enc.forward(random_clip({4, 8, 8, 3}, rng)));
    double n = 0;
    for (float v : p.embedding) n += double(v) * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
}

TEST(PoolPhi, ZeroFeatureMapGivesNormalizedBias) {
  Encoder<double> enc(two_layer_config(3));
  Rng rng(11);
  enc.initialize(rng);
  const ParamInfo& b = enc.param("proj.bias");
  const std::vector<double> bias{0.3, -0.4, 1.2};
  std::copy(bias.begin(), bias.end(), enc.parameters().begin() + b.offset);
  FeatureMap<double> zero({4, 2, 3, 3});
  auto p = enc.project(zero);
  const double n = std::sqrt(0.09 + 0.16 + 1.44);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.raw[i], bias[i], 1e-15);
    EXPECT_NEAR(p.embedding[i], bias[i] / n, 1e-12);
  }
}

TEST(MomentumUpdate, ScalarExamples) {
  Encoder<double> online(two_layer_config()), mom(two_layer_config());
  std::fill(online.parameters().begin(), online.parameters().end(), 1.0);
  std::fill(mom.parameters().begin(), mom.parameters().end(), 0.0);
  momentum_update(online, mom, 0.999);
  for (double v : mom.parameters()) EXPECT_NEAR(v, 0.001, 1e-15);

  momentum_update(online, mom, 0.0);
  for (double v : mom.parameters()) EXPECT_EQ(v, 1.0);
}

TEST(MomentumUpdate, GeometricConvergence) {
  Encoder<double> online(two_layer_config()), mom(two_layer_config());
  std::fill(online.parameters().begin(), online.parameters().end(), 2.0);
  std::fill(mom.parameters().begin(), mom.parameters().end(), -1.0);
  const double m = 0.9;
  for (int n = 1; n <= 30; ++n) {
    momentum_update(online, mom, m);
    EXPECT_NEAR(std::abs(mom.parameters()[0] - 2.0), std::pow(m, n) * 3.0, 1e-12);
  }
}

TEST(MomentumUpdate, OnlineUntouchedAndIncongruentRejected) {
  Encoder<float> online(two_layer_config()), mom(two_layer_config());
  Rng rng(12);
  online.initialize(rng);
  std::vector<float> before(online.parameters().begin(), online.parameters().end());
  momentum_update(online, mom, 0.5);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), online.parameters().begin()));

  Encoder<float> other(two_layer_config(9));
  EXPECT_THROW(momentum_update(online, other, 0.5), InputError);
  EXPECT_THROW(momentum_update(online, mom, 1.0), ConfigError);
}
