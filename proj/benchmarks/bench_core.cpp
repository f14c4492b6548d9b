#include <benchmark/benchmark.h>

#include <numeric>
#include <random>
#include <vector>

#include "brdro/dro.hpp"
#include "brdro/game.hpp"
#include "brdro/synthdata.hpp"

namespace {

void BM_BrdroRound(benchmark::State& state) {
  brdro::SynthConfig sc;
  sc.n = 3000;
  sc.d_noise = static_cast<int>(state.range(0));
  const brdro::Dataset train = brdro::generate(sc);
  brdro::TrainConfig cfg;
  cfg.method = brdro::Method::brdro;
  brdro::BrdroState s = brdro::init_brdro_state(train, cfg);
  std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  for (auto _ : state) {
    brdro::brdro_round(s, train, batch, cfg);
    benchmark::DoNotOptimize(s.last_objective);
  }
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(BM_BrdroRound)->Arg(10)->Arg(100);

void BM_FtrlUpdate(benchmark::State& state) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::vector<double> cum(static_cast<std::size_t>(state.range(0)));
  for (double& c : cum) c = u(gen);
  for (auto _ : state) {
    auto delta = brdro::ftrl_update(cum, 3.0);
    benchmark::DoNotOptimize(delta.data());
  }
}
BENCHMARK(BM_FtrlUpdate)->Arg(8)->Arg(256);

void BM_CvarValue(benchmark::State& state) {
  std::mt19937_64 gen(11);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> losses(static_cast<std::size_t>(state.range(0)));
  for (double& l : losses) l = e(gen);
  for (auto _ : state) {
    auto v = brdro::cvar_value(losses, 0.1);
    benchmark::DoNotOptimize(v.value);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CvarValue)->RangeMultiplier(8)->Range(64, 32768)->Complexity(benchmark::oNLogN);

}  // namespace

BENCHMARK_MAIN();
