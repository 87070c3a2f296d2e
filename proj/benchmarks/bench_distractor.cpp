#include <benchmark/benchmark.h>
#include <bgerase/distractor.hpp>

using namespace bgerase;

namespace {

void BM_MakeDistractor(benchmark::State& state) {
  const auto variant = all_variants()[static_cast<std::size_t>(state.range(0))];
  Rng rng(7);
  ClipShape shape{8, 56, 56, 3};
  std::vector<float> a(shape.size()), b(shape.size());
  for (float& v : a) v = static_cast<float>(uniform01(rng));
  for (float& v : b) v = static_cast<float>(uniform01(rng));
  VideoClip clip(shape, a, "x"), donor(shape, b, "y");
  DistractorSpec spec;
  spec.variant = variant;
  for (auto _ : state) benchmark::DoNotOptimize(make_distractor(clip, spec, &donor, rng));
  state.SetLabel(std::string(variant_name(variant)));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(shape.size() * sizeof(float)));
}
BENCHMARK(BM_MakeDistractor)->DenseRange(0, 5);

void BM_Augmentation(benchmark::State& state) {
  Rng rng(8);
  ClipShape shape{8, 56, 56, 3};
  std::vector<float> a(shape.size());
  for (float& v : a) v = static_cast<float>(uniform01(rng));
  VideoClip clip(shape, a);
  AugmentationSet aug;
  for (auto _ : state) benchmark::DoNotOptimize(apply_basic_augmentation(clip, aug, rng));
}
BENCHMARK(BM_Augmentation);

}  // namespace
