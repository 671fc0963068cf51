#include <benchmark/benchmark.h>

#include <vector>

#include "hjblab/bsde.hpp"
#include "hjblab/expr.hpp"
#include "hjblab/hjb_grid.hpp"
#include "hjblab/rng.hpp"
#include "hjblab/scenario.hpp"

namespace {

hjblab::ControlProblem heat_problem() {
    return hjblab::parse_scenario("[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nf = -y/2\nPhi = cos(x1)\n").problem;
}

void BM_Philox(benchmark::State& state) {
    std::uint64_t path = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(hjblab::standard_normal(7, path++, 3, 0));
    }
}
BENCHMARK(BM_Philox);

void BM_ExprEval(benchmark::State& state) {
    hjblab::ExprContext ctx;
    const auto e = hjblab::Expr::parse("exp(-(1-t))*cos(x1) + min(abs(x1), 2) - y/2", ctx);
    std::vector<double> x{0.3}, z{0.0};
    double t = 0.0;
    for (auto _ : state) {
        t += 1e-9;
        benchmark::DoNotOptimize(e.eval({t, x, 0.1, z, {}}));
    }
}
BENCHMARK(BM_ExprEval);

void BM_ExplicitSolve(benchmark::State& state) {
    const auto p = heat_problem();
    const auto nodes = static_cast<std::size_t>(state.range(0));
    const auto grid = hjblab::build_grid(hjblab::Box{{-4.0}, {4.0}}, {nodes}, 0, p);
    for (auto _ : state) {
        benchmark::DoNotOptimize(hjblab::solve_hjb(p, grid, {hjblab::ObstacleSide::None, {}, grid.nt}));
    }
    state.counters["steps"] = static_cast<double>(grid.nt);
}
BENCHMARK(BM_ExplicitSolve)->Arg(81)->Arg(161)->Arg(321)->Unit(benchmark::kMillisecond);

void BM_ImplicitSolve(benchmark::State& state) {
    const auto p = heat_problem();
    const auto nodes = static_cast<std::size_t>(state.range(0));
    const auto grid =
        hjblab::build_grid(hjblab::Box{{-4.0}, {4.0}}, {nodes}, 100, p, hjblab::Scheme::ImplicitSweep);
    for (auto _ : state) {
        benchmark::DoNotOptimize(hjblab::solve_hjb(p, grid, {hjblab::ObstacleSide::None, {}, grid.nt}));
    }
}
BENCHMARK(BM_ImplicitSolve)->Arg(161)->Arg(641)->Unit(benchmark::kMillisecond);

void BM_BsdeSolve(benchmark::State& state) {
    const auto p = heat_problem();
    const std::vector<double> x0{0.0};
    const auto paths = static_cast<std::size_t>(state.range(0));
    const auto bundle = hjblab::simulate_paths(p, hjblab::ControlPolicy::constant(0), 0.0, x0,
                                               hjblab::TimeGrid(0.0, 1.0, 50), paths, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(hjblab::solve_bsde(bundle, p, {}));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(paths) * 50);
}
BENCHMARK(BM_BsdeSolve)->Arg(10000)->Arg(50000)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
    const auto p = heat_problem();
    const std::vector<double> x0{0.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(hjblab::simulate_paths(p, hjblab::ControlPolicy::constant(0), 0.0, x0,
                                                        hjblab::TimeGrid(0.0, 1.0, 100), 10000, 1));
    }
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
