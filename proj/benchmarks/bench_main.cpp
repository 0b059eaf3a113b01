#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dsmcsg/dsmc.hpp"
#include "dsmcsg/fokker_planck.hpp"
#include "dsmcsg/gpc.hpp"
#include "dsmcsg/models.hpp"

using namespace dsmcsg;

// Nodal <-> modal transforms for one particle row.
static void BM_ToNodes(benchmark::State& state) {
  const int dims = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const auto b = build_basis(RandomParamSpec::unit_cube(dims), std::vector<int>(dims, m));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> c(b.size()), v(b.num_nodes());
  for (auto& x : c) x = u(rng);
  TransformScratch s;
  for (auto _ : state) {
    b.to_nodes(c, v, s);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ToNodes)->Args({1, 5})->Args({1, 20})->Args({1, 50})->Args({2, 5})->Args({2, 20});

static void BM_FromNodes(benchmark::State& state) {
  const int dims = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const auto b = build_basis(RandomParamSpec::unit_cube(dims), std::vector<int>(dims, m));
  std::vector<double> v(b.num_nodes(), 0.5), c(b.size());
  TransformScratch s;
  for (auto _ : state) {
    b.from_nodes(v, c, s);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FromNodes)->Args({1, 5})->Args({1, 50})->Args({2, 5})->Args({2, 20});

// One outer collision step of the gambling model; items are particles.
static void BM_CollisionStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const auto b = build_basis(RandomParamSpec::unit_cube(1), {m});
  const auto model = gambling_model(GamblingParams{}, b);
  CollisionConfig cfg;
  cfg.dt = 0.1;
  cfg.t_final = 1.0;
  DsmcSolver solver(model, b, cfg);
  auto e = init_ensemble(InitialDensity::uniform(0.0, 2.0), n, b, 3);
  std::uint64_t step = 0;
  for (auto _ : state) {
    solver.advance(e, cfg.dt, step++, nullptr);
    benchmark::DoNotOptimize(e.coeffs.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_CollisionStep)->Args({10000, 5})->Args({100000, 5})->Args({10000, 20})->Unit(benchmark::kMillisecond);

// One Chang-Cooper step at every node of a wealth model.
static void BM_FpStep(benchmark::State& state) {
  const double dv = 1.0 / static_cast<double>(state.range(0));
  const auto b = build_basis(RandomParamSpec::unit_cube(1), {5});
  const auto model = wealth_model(WealthParams{}, b);
  const auto grid = VGrid::with_spacing(0.0, 10.0, dv);
  FpState st{std::vector<std::vector<double>>(b.num_nodes(), uniform_cells(grid, 0.0, 2.0)), 0.0};
  for (auto _ : state) {
    fp_step(st, model, grid, dv / 2.0);
    benchmark::DoNotOptimize(st.f.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.size() * b.num_nodes()));
}
BENCHMARK(BM_FpStep)->Arg(20)->Arg(100)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
