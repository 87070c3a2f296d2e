#include <benchmark/benchmark.h>
#include <bgerase/encoder.hpp>
#include <bgerase/objectives.hpp>

using namespace bgerase;

namespace {

VideoClip noise_clip(ClipShape s, Rng& rng) {
  std::vector<float> d(s.size());
  for (float& v : d) v = static_cast<float>(uniform01(rng));
  return VideoClip(s, std::move(d));
}

EncoderConfig desk_config(int side) {
  EncoderConfig c;
  c.input_height = side;
  c.input_width = side;
  return c;
}

void BM_EncoderForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Encoder<float> enc(desk_config(side));
  Rng rng(1);
  enc.initialize(rng);
  VideoClip clip = noise_clip({8, side, side, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(clip));
}
BENCHMARK(BM_EncoderForward)->Arg(32)->Arg(56)->Unit(benchmark::kMillisecond);

void BM_EncoderForwardBackward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Encoder<float> enc(desk_config(side));
  Rng rng(2);
  enc.initialize(rng);
  VideoClip clip = noise_clip({8, side, side, 3}, rng);
  std::vector<float> grad(enc.parameter_count());
  for (auto _ : state) {
    EncoderTape<float> tape;
    FeatureMap<float> f = enc.forward(clip, &tape);
    auto p = enc.project(f);
    std::vector<float> g(p.embedding.size(), 0.01f);
    enc.backward(tape, enc.project_backward(f.shape, p, g, grad), grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_EncoderForwardBackward)->Arg(32)->Arg(56)->Unit(benchmark::kMillisecond);

void BM_InfoNceBatch(benchmark::State& state) {
  const std::size_t queue = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  EmbeddingQueue q(queue, 128);
  q.fill_random(rng);
  std::vector<TaggedEmbedding> anchors, positives;
  for (int i = 0; i < 16; ++i) {
    TaggedEmbedding a = q.at(i), p = q.at(i + 16);
    a.uid = 100 + i;
    a.video_id = "a" + std::to_string(i);
    p.uid = 200 + i;
    p.video_id = a.video_id;
    anchors.push_back(a);
    positives.push_back(p);
  }
  NegativeSets neg;
  neg.shared = q.snapshot();
  neg.hard.assign(anchors.size(), std::nullopt);
  for (auto _ : state) benchmark::DoNotOptimize(infonce_be(anchors, positives, neg, 0.1, false));
}
BENCHMARK(BM_InfoNceBatch)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

}  // namespace
