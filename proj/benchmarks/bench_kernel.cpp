#include <benchmark/benchmark.h>

#include "schro/operators.hpp"

using namespace schro;

namespace {

const SpectralModel& model() {
  static const SpectralModel M =
      SpectralModel::build(build_preset(Grid(3, 64, 4.0), {"harmonic", 1.0, {}, kInfiniteQ}));
  return M;
}

std::pair<std::size_t, std::size_t> pair_of(const Grid& g) {
  Point x, y;
  x[0] = 0.3;
  x[1] = -0.2;
  y[0] = -0.4;
  y[2] = 0.5;
  return {g.nearest(x), g.nearest(y)};
}

void BM_HeatKernel(benchmark::State& st) {
  const auto& M = model();
  const auto [x, y] = pair_of(M.grid());
  for (auto _ : st) benchmark::DoNotOptimize(M.heat_kernel(0.05, x, y));
}

void BM_OperatorKernel(benchmark::State& st) {
  const auto& M = model();
  const auto [x, y] = pair_of(M.grid());
  const OperatorDescriptor ds[] = {OperatorDescriptor::riesz(0), OperatorDescriptor::negative_power(0.5),
                                   OperatorDescriptor::poisson(0.5, 0.2), OperatorDescriptor::g_heat()};
  const Operator op(ds[st.range(0)], M);
  op.kernel(x, y);
  for (auto _ : st) benchmark::DoNotOptimize(op.kernel(x, y));
  st.SetLabel(op.descriptor().label());
}

}  // namespace

BENCHMARK(BM_HeatKernel);
BENCHMARK(BM_OperatorKernel)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
