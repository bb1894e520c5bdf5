#include <benchmark/benchmark.h>

#include "schro/rho.hpp"

using namespace schro;

namespace {

void BM_CriticalRadius(benchmark::State& st) {
  const Grid g(3, 96, 4.0);
  const Potential V = build_preset(g, {st.range(0) ? "harmonic" : "constant", 1.0, {}, kInfiniteQ});
  Point x;
  x[0] = 0.7;
  x[1] = -0.3;
  for (auto _ : st) benchmark::DoNotOptimize(critical_radius(V, x));
}

void BM_RhoField(benchmark::State& st) {
  const Grid g(2, static_cast<int>(st.range(0)), 4.0);
  const Potential V = build_preset(g, {"harmonic", 1.0, {}, kInfiniteQ});
  for (auto _ : st) {
    RhoField rho(V);
    rho.compute_all();
    benchmark::DoNotOptimize(rho.at(0));
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(g.size()));
}

void BM_Covering(benchmark::State& st) {
  const Grid g(2, 64, 4.0);
  const RhoField rho(build_preset(g, {"harmonic", 1.0, {}, kInfiniteQ}));
  rho.compute_all();
  for (auto _ : st) benchmark::DoNotOptimize(critical_covering(rho));
}

}  // namespace

BENCHMARK(BM_CriticalRadius)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RhoField)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Covering)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
