#include <benchmark/benchmark.h>

#include <cmath>

#include "schro/operators.hpp"

using namespace schro;

namespace {

struct Setup {
  SpectralModel model;
  GridFunction f;
  explicit Setup(int m)
      : model(SpectralModel::build(build_preset(Grid(3, m, 4.0), {"harmonic", 1.0, {}, kInfiniteQ}))),
        f(sample(model.grid(), [](const Point& p) { return std::exp(-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])); })) {}
};

void BM_HeatApply(benchmark::State& st) {
  const Setup s(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(s.model.heat(0.1, s.f));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(s.f.size()));
}

void BM_NegativePowerApply(benchmark::State& st) {
  const Setup s(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(negative_power(s.model, 0.5, s.f));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(s.f.size()));
}

void BM_RieszApply(benchmark::State& st) {
  const Setup s(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(riesz_apply(s.model, 0, s.f));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(s.f.size()));
}

void BM_HeatMaximal(benchmark::State& st) {
  const Setup s(static_cast<int>(st.range(0)));
  const auto grid = TGrid::default_maximal(s.model.grid());
  for (auto _ : st) benchmark::DoNotOptimize(heat_maximal(s.model, s.f, grid));
}

}  // namespace

BENCHMARK(BM_HeatApply)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NegativePowerApply)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RieszApply)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HeatMaximal)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
