#include <benchmark/benchmark.h>

#include "phmm/estimate.hpp"
#include "phmm/simulate.hpp"
#include "phmm/weighting.hpp"

namespace {

using namespace phmm;

// One long cs2-shaped sequence of length state.range(0).
struct LongSequence {
  Preset preset;
  Eigen::MatrixXd log_f;
  explicit LongSequence(int T) : preset(make_preset("cs2", 1)) {
    preset.scenario.lengths = {T};
    preset.scenario.label_indices = {{}};
    const auto sim = simulate_phmm(preset.scenario);
    log_f = preset.spec.model.emissions.log_density_matrix(sim.data.series[0].features);
  }
};

void BM_ForwardBackward(benchmark::State& state) {
  const LongSequence s(static_cast<int>(state.range(0)));
  const auto& m = s.preset.spec.model;
  for (auto _ : state) benchmark::DoNotOptimize(forward_backward(m.initial, m.transition, s.log_f));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(1000)->Arg(15821)->Unit(benchmark::kMillisecond);

void BM_Viterbi(benchmark::State& state) {
  const LongSequence s(static_cast<int>(state.range(0)));
  const auto& m = s.preset.spec.model;
  for (auto _ : state) benchmark::DoNotOptimize(viterbi(m.initial, m.transition, s.log_f));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Viterbi)->Arg(15821)->Unit(benchmark::kMillisecond);

void BM_EmissionMatrix(benchmark::State& state) {
  auto p = make_preset("cs2", 1);
  const auto sim = simulate_phmm(p.scenario);
  for (auto _ : state) {
    for (const auto& s : sim.data.series) benchmark::DoNotOptimize(p.spec.model.emissions.log_density_matrix(s.features));
  }
}
BENCHMARK(BM_EmissionMatrix)->Unit(benchmark::kMillisecond);

// Weighted objective and analytic gradient over the whole preset dataset.
void BM_Objective(benchmark::State& state, const char* preset, bool gradient) {
  const auto p = make_preset(preset, 1);
  const auto data = simulate_phmm(p.scenario).data;
  const Parameterization param(p.spec);
  const WeightedObjective f(param, data, 0.049);
  const Eigen::VectorXd x = param.to_working(p.spec.model);
  Eigen::VectorXd g(x.size());
  for (auto _ : state) benchmark::DoNotOptimize(f(x, gradient ? &g : nullptr));
}
BENCHMARK_CAPTURE(BM_Objective, cs1_value, "cs1", false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Objective, cs1_gradient, "cs1", true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Objective, cs2_value, "cs2", false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Objective, cs2_gradient, "cs2", true)->Unit(benchmark::kMillisecond);

void BM_FitCs1(benchmark::State& state) {
  const auto p = make_preset("cs1", 1);
  const auto data = simulate_phmm(p.scenario).data;
  FitOptions opt;
  opt.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fit(p.spec, data, 0.049, opt));
}
BENCHMARK(BM_FitCs1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
