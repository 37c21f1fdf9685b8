#include <benchmark/benchmark.h>

#include "metanav/evalharness.hpp"

namespace {

using namespace metanav;

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

ExperimentConfig bench_config() {
  ExperimentConfig c;
  c.train_scenes = 4;
  c.test_scenes = 3;
  c.tfg_epochs = 40;
  c.uoi_train_frames = 64;
  c.uoi_heldout_frames = 32;
  c.uoi_pretrain.epochs = 1;
  return c;
}

const Assets& bench_assets() {
  static const Assets assets(bench_config());
  return assets;
}

void BM_UoiForward(benchmark::State& state) {
  const Assets& a = bench_assets();
  const Scene& scene = a.test_scenes.front();
  const ObservationFrame frame = observe(scene, generate_episode(1, scene, TargetPool::known).start);
  const Matrix f_o = observation_features(frame, a.oracle);
  for (auto _ : state) benchmark::DoNotOptimize(a.uoi.forward(f_o, a.bank));
}
BENCHMARK(BM_UoiForward);

void episode_bench(benchmark::State& state, RunMode mode, bool warm) {
  const Assets& a = bench_assets();
  const ExperimentConfig cfg = bench_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  const Scene& scene = a.test_scenes.front();
  const EpisodeSpec spec = generate_episode(7, scene, TargetPool::unknown, cfg.world, 3);
  FrameCache cache;
  std::int64_t steps = 0;
  for (auto _ : state) {
    if (!warm) {
      state.PauseTiming();
      cache = FrameCache{};
      state.ResumeTiming();
    }
    steps += run_episode(cfg, a, cache, globals, scene, spec, mode).steps_taken;
  }
  state.counters["steps"] = benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate);
}

void BM_TrainEpisodeWarmCache(benchmark::State& s) { episode_bench(s, RunMode::train, true); }
void BM_TrainEpisodeColdCache(benchmark::State& s) { episode_bench(s, RunMode::train, false); }
void BM_InferenceEpisode(benchmark::State& s) { episode_bench(s, RunMode::inference, true); }
BENCHMARK(BM_TrainEpisodeWarmCache)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainEpisodeColdCache)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InferenceEpisode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
