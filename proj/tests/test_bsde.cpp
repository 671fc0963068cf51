#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hjblab/bsde.hpp"
#include "hjblab/error.hpp"
#include "hjblab/forward_sim.hpp"
#include "hjblab/regression.hpp"
#include "support.hpp"

using namespace hjblab;

namespace {

const char* kEx21 = "d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = 0\nPhi = abs(x1)\n";
const char* kEx31 = "d = 1\nm = 1\nT = 2\nb = [0]\nsigma = [[0]]\nf = -1\nPhi = 1\nphi = 0\nside = lower\n";

PathBundle bundle(const ControlProblem& p, double t0, double x, std::size_t steps, std::size_t paths,
                  std::uint64_t seed = 1) {
    const std::vector<double> x0{x};
    return simulate_paths(p, ControlPolicy::constant(0), t0, x0, TimeGrid(t0, p.horizon(), steps), paths, seed);
}

}  // namespace

TEST(Regression, CellMeansPreserveSampleMean) {
    std::vector<double> states(1000), target(1000), fitted(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        states[i] = std::sin(0.37 * i);
        target[i] = states[i] * states[i] + 0.1 * std::cos(1.3 * i);
    }
    for (const auto& basis : {RegressionBasis::cells(8), RegressionBasis::polynomial(3)}) {
        const Regressor r(basis, states, 1000, 1);
        r.fit(target, fitted);
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < 1000; ++i) {
            a += target[i];
            b += fitted[i];
        }
        EXPECT_NEAR(a, b, 1e-9) << basis.describe();
    }
}

TEST(Regression, PolynomialReproducesPolynomials) {
    std::vector<double> states(400), target(400), fitted(400);
    for (std::size_t i = 0; i < 400; ++i) {
        states[i] = -2.0 + 4.0 * i / 399.0;
        target[i] = 1.0 - 2.0 * states[i] + 0.5 * states[i] * states[i];
    }
    const Regressor r(RegressionBasis::polynomial(2), states, 400, 1);
    r.fit(target, fitted);
    for (std::size_t i = 0; i < 400; ++i) EXPECT_NEAR(fitted[i], target[i], 1e-10);
}

TEST(Regression, SparseCellsAreMerged) {
    std::vector<double> states{0.0, 0.01, 0.02, 10.0};
    std::vector<double> target{1.0, 2.0, 3.0, 10.0}, fitted(4);
    const Regressor r(RegressionBasis::cells(4), states, 4, 1);
    EXPECT_EQ(r.merged_cells(), 1u);
    r.fit(target, fitted);
    EXPECT_DOUBLE_EQ(fitted[3], 4.0);
}

TEST(Bsde, ZeroDataGivesZero) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = 0\nPhi = 0\n");
    const auto sol = solve_bsde(bundle(p, 0.0, 0.0, 20, 2000), p, {});
    EXPECT_EQ(sol.y0, 0.0);
    for (double v : sol.y) EXPECT_EQ(v, 0.0);
    for (double v : sol.z) EXPECT_EQ(v, 0.0);
}

TEST(Bsde, TerminalExactness) {
    const auto p = test::problem_from(kEx21);
    const auto b = bundle(p, 0.0, 0.0, 20, 3000);
    const auto sol = solve_bsde(b, p, {});
    for (std::size_t i = 0; i < b.n_paths; ++i) EXPECT_EQ(sol.Y(i, 20), std::fabs(b.state(i, 20)[0]));
}

TEST(Bsde, ZeroDriverIsPlainMonteCarlo) {
    const auto p = test::problem_from(kEx21);
    const auto b = bundle(p, 0.0, 0.0, 25, 5000, 3);
    const auto sol = solve_bsde(b, p, {});
    double mean = 0.0;
    for (std::size_t i = 0; i < b.n_paths; ++i) mean += std::fabs(b.state(i, 25)[0]);
    mean /= static_cast<double>(b.n_paths);
    EXPECT_NEAR(sol.y0, mean, 1e-12);
}

TEST(Bsde, BrownianAbsoluteValue) {
    const auto p = test::problem_from(kEx21);
    const auto sol = solve_bsde(bundle(p, 0.0, 0.0, 50, 40000, 5), p, {});
    EXPECT_NEAR(sol.y0, test::ex2_1_value(0.0, 0.0), sol.y0_half_width + 5e-3);
}

TEST(Bsde, DiscountedCosine) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = -y/2\nPhi = cos(x1)\n");
    const auto sol = solve_bsde(bundle(p, 0.0, 0.0, 100, 40000, 6), p, {});
    EXPECT_NEAR(sol.y0, std::exp(-1.0), sol.y0_half_width + 5e-3);
}

TEST(Bsde, RejectsObstacleProblems) {
    const auto p = test::problem_from(kEx31);
    EXPECT_THROW(solve_bsde(bundle(p, 0.5, 0.0, 10, 10), p, {}), InputError);
    EXPECT_THROW(solve_penalized(bundle(p, 0.5, 0.0, 10, 10), p, 0.5, ObstacleSide::Lower, {}), InputError);
}

TEST(Penalized, InactiveObstacleMatchesPlainSolve) {
    const auto plain = test::problem_from(kEx21);
    const auto obst = test::problem_from(std::string(kEx21) + "phi = -1000000\nside = lower\n");
    const auto b = bundle(plain, 0.0, 0.0, 20, 4000, 9);
    const auto a = solve_bsde(b, plain, {});
    const auto c = solve_penalized(b, obst, 64, ObstacleSide::Lower, {});
    EXPECT_EQ(a.y, c.y);
    EXPECT_EQ(a.y0, c.y0);
    const auto k = recover_K(c, 64, ObstacleSide::Lower);
    for (double v : k.k) EXPECT_EQ(v, 0.0);
}

TEST(Penalized, ExampleContactRegion) {
    const auto p = test::problem_from(kEx31);
    const auto b = bundle(p, 0.5, 0.0, 1500, 8);
    double prev = -1e9;
    for (double n : {16.0, 64.0, 256.0}) {
        const auto sol = solve_penalized(b, p, n, ObstacleSide::Lower, {});
        EXPECT_LE(std::fabs(sol.y0 - 0.0), 2.0 / n);
        EXPECT_GE(sol.y0, prev);
        prev = sol.y0;
    }
}

TEST(Penalized, ExampleLinearRegion) {
    const auto p = test::problem_from(kEx31);
    const auto b = bundle(p, 1.5, 0.0, 500, 4);
    double prev = -1e9;
    for (double n : {16.0, 64.0, 256.0}) {
        const auto sol = solve_penalized(b, p, n, ObstacleSide::Lower, {});
        EXPECT_LE(sol.y0, 0.5 + 1e-12);
        EXPECT_GE(sol.y0, prev);
        EXPECT_NEAR(sol.y0, 0.5, 2.0 / n + 1e-3);
        prev = sol.y0;
    }
}

TEST(Penalized, RecoveredK) {
    const auto p = test::problem_from(kEx31);
    const double n = 256.0;
    const auto b = bundle(p, 0.5, 0.0, 1500, 4);
    auto sol = recover_K(solve_penalized(b, p, n, ObstacleSide::Lower, {}), n, ObstacleSide::Lower);
    const double dt = b.grid.dt();
    const auto node_at = [&](double s) { return static_cast<std::size_t>(std::llround((s - 0.5) / dt)); };
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        EXPECT_EQ(sol.K(i, 0), 0.0);
        EXPECT_NEAR(sol.K(i, node_at(0.8)), 0.3, 2.0 / n + dt);
        EXPECT_NEAR(sol.K(i, node_at(1.2)), 0.5, 2.0 / n + dt);
        for (std::size_t k = 0; k < 1500; ++k) ASSERT_LE(sol.K(i, k), sol.K(i, k + 1));
    }
    EXPECT_THROW(recover_K(sol, 128, ObstacleSide::Lower), InputError);
}

TEST(Penalized, UpperSideDecreasesWithN) {
    const auto p = test::problem_from(
        "d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = -y/2\nPhi = cos(x1)\nphi = cos(x1) + 0.5*(1 - t)\n"
        "side = upper\n");
    const auto b = bundle(p, 0.0, 3.0, 50, 20000, 12);
    double prev = 1e9;
    for (double n : {8.0, 32.0, 128.0}) {
        const auto sol = solve_penalized(b, p, n, ObstacleSide::Upper, {});
        EXPECT_LE(sol.y0, prev + sol.y0_half_width);
        prev = sol.y0;
    }
}

TEST(Penalized, SlackDecaysLikeOneOverN) {
    const auto p = test::problem_from(kEx31);
    const auto b = bundle(p, 0.5, 0.0, 1500, 4);
    std::vector<double> slack;
    for (double n : {64.0, 128.0, 256.0}) {
        const auto sol = solve_penalized(b, p, n, ObstacleSide::Lower, {});
        double mean = 0.0;
        for (std::size_t i = 0; i < b.n_paths; ++i) {
            double worst = 0.0;
            for (std::size_t k = 0; k <= 1500; ++k) worst = std::max(worst, -sol.Y(i, k));
            mean += worst;
        }
        slack.push_back(mean / b.n_paths);
    }
    EXPECT_GE(slack[1] / slack[0], 0.3);
    EXPECT_LE(slack[1] / slack[0], 0.7);
    EXPECT_GE(slack[2] / slack[1], 0.3);
    EXPECT_LE(slack[2] / slack[1], 0.7);
}

TEST(ValueFixedControl, Reachability) {
    const auto p = test::problem_from(
        "d = 1\nm = 1\nT = 1\nb = [u1]\nsigma = [[0]]\nf = 0\nPhi = min(abs(x1), 2)\ncontrols = [-1, 0, 1]\n");
    McSpec mc;
    mc.n_paths = 16;
    mc.steps = 100;
    const std::vector<double> x{1.5};
    const auto left = value_fixed_control(p, 0.0, x, ControlPolicy::constant(0), PenaltyLadder({1}), mc);
    const auto right = value_fixed_control(p, 0.0, x, ControlPolicy::constant(2), PenaltyLadder({1}), mc);
    EXPECT_NEAR(left.limit, 0.5, 1e-12);
    EXPECT_NEAR(right.limit, 2.0, 1e-12);
    ASSERT_EQ(left.rows.size(), 1u);
    EXPECT_EQ(left.rows[0].n, 0.0);
}

TEST(ValueFixedControl, LadderRows) {
    const auto p = test::problem_from(kEx31);
    McSpec mc;
    mc.n_paths = 4;
    mc.steps = 1500;
    const std::vector<double> x{0.0};
    const auto t = value_fixed_control(p, 0.5, x, ControlPolicy::constant(0), PenaltyLadder::geometric(64, 3), mc);
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[2].n, 256.0);
    EXPECT_EQ(t.limit, t.rows[2].y0);
    EXPECT_THROW(PenaltyLadder({4, 2}), InputError);
    EXPECT_THROW(PenaltyLadder({0.5}), InputError);
}

TEST(Comparison, OrderedConstants) {
    const auto base = test::problem_from(kEx21);
    const auto b = bundle(base, 0.0, 0.0, 20, 2000, 4);
    const auto r = comparison_harness(base, {"0", "0"}, {"1", "0"}, b, {});
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.violations, 0u);
    EXPECT_EQ(r.y0_a, 0.0);
    EXPECT_EQ(r.y0_b, 1.0);
}

TEST(Comparison, DriverGapIsElapsedTime) {
    const auto base = test::problem_from(kEx21);
    const auto b = bundle(base, 0.0, 0.0, 20, 4000, 4);
    const auto r = comparison_harness(base, {"abs(x1)", "-1"}, {"abs(x1)", "0"}, b, {});
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.y0_b - r.y0_a, 1.0, 1e-9);
}

TEST(Comparison, IdenticalDataHasNoViolations) {
    const auto base = test::problem_from(kEx21);
    const auto b = bundle(base, 0.0, 0.0, 20, 2000, 4);
    const auto r = comparison_harness(base, {"cos(x1)", "-y/2"}, {"cos(x1)", "-y/2"}, b, {});
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.violations, 0u);
}

TEST(Comparison, RejectsUnorderedData) {
    const auto base = test::problem_from(kEx21);
    const auto b = bundle(base, 0.0, 0.0, 10, 500, 4);
    EXPECT_THROW(comparison_harness(base, {"1", "0"}, {"0", "0"}, b, {}), InputError);
    EXPECT_THROW(comparison_harness(base, {"0", "1"}, {"0", "0"}, b, {}), InputError);
}
