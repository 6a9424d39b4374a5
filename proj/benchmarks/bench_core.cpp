#include <benchmark/benchmark.h>

#include "wsens/wsens.hpp"

namespace {

wsens::SimDraw draw(Eigen::Index n) {
  wsens::DgpSpec spec;
  spec.n = n;
  spec.seed = 1;
  return wsens::generate(spec);
}

void BM_FitWls(benchmark::State& state) {
  const auto sim = draw(state.range(0));
  const wsens::WeightSet w = wsens::WeightSet::uniform(sim.data.size());
  for (auto _ : state) benchmark::DoNotOptimize(wsens::fit_wls(sim.data, w).tau_hat);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitWls)->RangeMultiplier(4)->Range(256, 65536)->Complexity();

void BM_EntropyBalance(benchmark::State& state) {
  const auto sim = draw(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(wsens::entropy_balance(sim.data.x, sim.data.d, wsens::Estimand::kAtt).weights.sum());
  }
}
BENCHMARK(BM_EntropyBalance)->RangeMultiplier(4)->Range(256, 65536);

void BM_PsMatch(benchmark::State& state) {
  const auto sim = draw(state.range(0));
  const auto spec = wsens::default_builder(wsens::WeightMethod::kPsMatch, wsens::Estimand::kAtt);
  for (auto _ : state) benchmark::DoNotOptimize(wsens::build_weights(spec, sim.data).weights.sum());
}
BENCHMARK(BM_PsMatch)->RangeMultiplier(4)->Range(256, 16384);

void BM_BootstrapReestimate(benchmark::State& state) {
  const auto sim = draw(500);
  wsens::BootstrapConfig config;
  config.replicates = static_cast<int>(state.range(0));
  config.seed = 7;
  config.threads = 1;
  const auto spec = wsens::default_builder(wsens::WeightMethod::kIpw, wsens::Estimand::kAte);
  for (auto _ : state) {
    benchmark::DoNotOptimize(wsens::draw_replicates(sim.data, spec, wsens::Centering::kNone, config).size());
  }
}
BENCHMARK(BM_BootstrapReestimate)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_RvAlpha(benchmark::State& state) {
  const auto sim = draw(500);
  wsens::BootstrapConfig config;
  config.replicates = 1000;
  config.seed = 7;
  config.mode = wsens::BootstrapMode::kFixedWeights;
  const auto reps = wsens::draw_replicates(sim.data, wsens::WeightSet::uniform(500), wsens::Centering::kNone, config);
  for (auto _ : state) benchmark::DoNotOptimize(wsens::rv_alpha(reps, 0.05).value);
}
BENCHMARK(BM_RvAlpha)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
