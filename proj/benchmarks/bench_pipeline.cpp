#include <benchmark/benchmark.h>

#include "echoplane/experiment.hpp"
#include "echoplane/pipeline.hpp"
#include "echoplane/random.hpp"

using namespace echoplane;

namespace {

struct Fixture {
  RirSet set;
  Preprocessed pre;
};

const Fixture& medium_room() {
  static const Fixture f = [] {
    Fixture x;
    x.set = generate_setup(catalog_index("M-0.5a"), setup_seeds(1, 4, 0), NoiseSpec::regime1());
    PipelineConfig cfg;
    x.pre = preprocess(x.set, cfg, true);
    return x;
  }();
  return f;
}

void BM_Simulate(benchmark::State& state) {
  const auto& cr = catalog_room("M-0.5a");
  const Setup s = random_setup(cr.room, kNumSources, source_radius(cr.size), wall_clearance(cr.size), 7);
  for (auto _ : state) benchmark::DoNotOptimize(simulate(cr.room, s.array, s.sources, kDefaultFs));
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMillisecond);

void BM_Cdypsa(benchmark::State& state) {
  const auto& f = medium_room();
  const OnsetConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(cdypsa(f.set, cfg));
}
BENCHMARK(BM_Cdypsa)->Unit(benchmark::kMillisecond);

void BM_DsbDoa(benchmark::State& state) {
  const auto& f = medium_room();
  const Segment seg = segment(f.set, f.pre.clusters[0], 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(dsb_doa(seg, f.set.array, f.set.c0, f.set.fs));
}
BENCHMARK(BM_DsbDoa)->Unit(benchmark::kMillisecond);

void BM_IsdarLib(benchmark::State& state) {
  const auto& f = medium_room();
  PipelineConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(run_method(Method::IsdarLib, f.set, f.pre, cfg));
}
BENCHMARK(BM_IsdarLib)->Unit(benchmark::kMicrosecond);

void BM_Etsac(benchmark::State& state) {
  const auto& f = medium_room();
  EtsacConfig cfg;
  cfg.num_planes = static_cast<int>(state.range(0));
  std::vector<std::size_t> used;
  for (std::size_t j = 1; j < f.set.num_sources(); ++j) used.push_back(j);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        etsac(f.pre.clusters, f.set.array, f.set.sources, used, f.set.c0, f.set.fs, cfg));
  }
}
BENCHMARK(BM_Etsac)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
