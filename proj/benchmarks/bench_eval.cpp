#include <benchmark/benchmark.h>
#include <bgerase/eval.hpp>

using namespace bgerase;

namespace {

std::vector<std::vector<double>> gaussian_rows(int n, int dim, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
  for (auto& r : rows)
    for (double& v : r) v = g(rng);
  return rows;
}

void BM_RetrievalRecall(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(11);
  auto gallery = gaussian_rows(n, 128, rng);
  auto queries = gaussian_rows(n / 4, 128, rng);
  std::vector<int> gl(n), ql(n / 4);
  for (int i = 0; i < n; ++i) gl[i] = i % 8;
  for (int i = 0; i < n / 4; ++i) ql[i] = i % 8;
  for (auto _ : state) {
    benchmark::DoNotOptimize(retrieval_recall(gallery, gl, queries, ql, {1, 5, 10, 20, 50}));
  }
}
BENCHMARK(BM_RetrievalRecall)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_LinearProbeFit(benchmark::State& state) {
  Rng rng(12);
  auto x = gaussian_rows(static_cast<int>(state.range(0)), 128, rng);
  std::vector<int> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 8);
  ProbeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(LinearProbe::fit(x, y, 8, cfg));
}
BENCHMARK(BM_LinearProbeFit)->Arg(800)->Unit(benchmark::kMillisecond);

}  // namespace
