#include <benchmark/benchmark.h>

#include "heatball/continuum.hpp"
#include "heatball/idla.hpp"
#include "heatball/sandpile.hpp"
#include "heatball/walks.hpp"

using namespace heatball;

namespace {

ModelParams params_d2(double p = 0.2) {
    ModelParams params;
    params.d = 2;
    params.p = p;
    params.variant = Variant::Monotone;
    params.seed = 1;
    return params;
}

void BM_HeatOpSparse(benchmark::State& state) {
    const auto params = params_d2();
    MassField f;
    for (Coord x = -20; x <= 20; ++x)
        for (Coord t = 0; t <= 40; ++t) {
            Site z = Site::origin(2);
            z[0] = x;
            z[1] = t;
            f.set(z, 0.5 + 0.01 * static_cast<double>(x + t));
        }
    Site probe = Site::origin(2);
    probe[1] = 20;
    for (auto _ : state) benchmark::DoNotOptimize(heat_op(f, probe, params));
}
BENCHMARK(BM_HeatOpSparse);

void BM_WalkSteps(benchmark::State& state) {
    const auto params = params_d2();
    const StepLaw law = StepLaw::make(params);
    WalkState w;
    w.position = Site::origin(2);
    for (auto _ : state) {
        step_inplace(w, law, params.seed);
        benchmark::DoNotOptimize(w.position);
    }
}
BENCHMARK(BM_WalkSteps);

void BM_Stabilize(benchmark::State& state) {
    const auto params = params_d2();
    const double n = static_cast<double>(state.range(0));
    ToppleConfig cfg;
    cfg.sweep_order = SweepOrder::LayerSweep;
    for (auto _ : state) {
        auto res = stabilize_point_mass(n, params, cfg);
        benchmark::DoNotOptimize(res.sweeps);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Stabilize)->Arg(1000)->Arg(10000)->Complexity();

void BM_IdlaCluster(benchmark::State& state) {
    const auto params = params_d2();
    const std::int64_t n = state.range(0);
    for (auto _ : state) {
        auto run = build_cluster(n, params);
        benchmark::DoNotOptimize(run.settle_order.size());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_IdlaCluster)->Arg(1000)->Arg(10000)->Complexity();

void BM_GreenDpLayerPropagation(benchmark::State& state) {
    const auto params = params_d2();
    const Coord layers = state.range(0);
    Site z = Site::origin(2);
    z[1] = layers;
    const Coord radius = suggested_green_radius(params, layers);
    for (auto _ : state) benchmark::DoNotOptimize(green_dp(z, params, radius));
}
BENCHMARK(BM_GreenDpLayerPropagation)->Arg(50)->Arg(500);

void BM_ObstacleSolve(benchmark::State& state) {
    const auto params = params_d2();
    const double dx = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) {
        const auto grid = SpaceTimeGrid::make(2, 3.0, 1.0, dx);
        const auto gamma = obstacle_field(grid, params);
        const auto s = least_supercaloric_majorant(grid, gamma, params);
        benchmark::DoNotOptimize(s.values.back());
    }
}
BENCHMARK(BM_ObstacleSolve)->Arg(20)->Arg(40);

void BM_MeanValueOperator(benchmark::State& state) {
    const auto params = params_d2();
    HeatBallSpec spec;
    spec.center_x = {0.0};
    spec.center_t = 1.0;
    spec.radius = 1.0;
    const auto one = [](std::span<const double>, double) { return 1.0; };
    for (auto _ : state) benchmark::DoNotOptimize(mean_value_operator(one, spec, params));
}
BENCHMARK(BM_MeanValueOperator);

} // namespace

BENCHMARK_MAIN();
