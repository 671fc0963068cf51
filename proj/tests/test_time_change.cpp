#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>
#include <random>
#include <vector>

#include "hjblab/error.hpp"
#include "hjblab/time_change.hpp"
#include "support.hpp"

using namespace hjblab;

namespace {

const char* kEx31 = "d = 1\nm = 1\nT = 2\nb = [0]\nsigma = [[0]]\nf = -1\nPhi = 1\nphi = 0\nside = lower\n";

}  // namespace

TEST(TimeChange, IdentityAndEndpoints) {
    const auto id = make_time_change(0.3, 0.3, 1.0, 0.5);
    EXPECT_EQ(id.rate(), 1.0);
    EXPECT_EQ(id.tau(0.7), 0.7);
    const auto tc = make_time_change(0.2, 0.5, 1.0, 0.5);
    EXPECT_DOUBLE_EQ(tc.rate(), 1.6);
    EXPECT_NEAR(tc.tau(0.75), 0.6, 1e-15);
    EXPECT_EQ(tc.tau(0.5), 0.2);
    EXPECT_EQ(tc.tau(1.0), 1.0);
    EXPECT_EQ(tc.tau_inv(0.2), 0.5);
    EXPECT_EQ(tc.tau_inv(1.0), 1.0);
}

TEST(TimeChange, RoundTrip) {
    const auto tc = make_time_change(0.05, 0.8, 2.0, 0.5);
    for (int i = 0; i <= 1000; ++i) {
        const double s = 0.05 + (2.0 - 0.05) * i / 1000.0;
        EXPECT_NEAR(tc.tau(tc.tau_inv(s)), s, 1e-12);
    }
}

TEST(TimeChange, RejectsOutOfRange) {
    EXPECT_THROW(make_time_change(0.6, 0.2, 1.0, 0.5), InputError);
    EXPECT_THROW(make_time_change(-0.1, 0.2, 1.0, 0.5), InputError);
    EXPECT_THROW(make_time_change(0.1, 0.2, 1.0, 0.0), InputError);
}

TEST(TimeChangeBounds, ExamplesAndSymmetry) {
    const auto r0 = lemma_bounds_check(make_time_change(0.3, 0.3, 1.0, 0.5), 0.5);
    EXPECT_EQ(r0.max_lhs, 0.0);
    EXPECT_EQ(r0.ratio, 0.0);
    EXPECT_TRUE(r0.pass);
    const auto tc = make_time_change(0.2, 0.5, 1.0, 0.5);
    EXPECT_NEAR(std::fabs(1.0 / tc.rate() - 1.0), 1.25 * 0.3, 1e-12);
    const auto r = lemma_bounds_check(tc, 0.5);
    EXPECT_TRUE(r.pass);
    EXPECT_DOUBLE_EQ(r.bound, 1.0 / 0.5 + 2.0 / 0.5);
    EXPECT_TRUE(lemma_bounds_check(make_time_change(0.5, 0.2, 1.0, 0.5), 0.5).pass);
}

TEST(TimeChangeBounds, PassesOnPairGrid) {
    for (double delta : {0.1, 0.5}) {
        const double T = 1.0;
        for (int i = 0; i < 20; ++i) {
            for (int j = 0; j < 20; ++j) {
                const double t0 = (T - delta) * i / 19.0;
                const double t1 = (T - delta) * j / 19.0;
                ASSERT_TRUE(lemma_bounds_check(make_time_change(t0, t1, T, delta), delta).pass)
                    << t0 << " " << t1 << " " << delta;
            }
        }
    }
}

TEST(Transform, IdentityKeepsCoefficients) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [sin(t*x1)]\nsigma = [[1 + t]]\nf = z1*t - y\nPhi = 0\n");
    const auto tp = transform_problem(p, TimeChange(0.4, 0.4, 1.0), 8.0);
    EXPECT_EQ(tp.penalty, 8.0);
    EXPECT_EQ(tp.problem.canonical_text(), p.canonical_text());
}

TEST(Transform, ScalesCoefficients) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = -1\nPhi = 0\n");
    const TimeChange tc(0.2, 0.5, 1.0);
    const auto tp = transform_problem(p, tc, 16.0);
    const std::vector<double> x{0.3}, z{0.0}, sig(1);
    std::vector<double> out(1);
    tp.problem.eval_diffusion(0.5, x, tp.problem.control(0), out);
    EXPECT_NEAR(out[0], 0.7905694150, 1e-10);
    EXPECT_NEAR(tp.problem.eval_driver(0.5, x, 0.0, z, tp.problem.control(0)), -0.625, 1e-15);
    EXPECT_NEAR(tp.penalty, 10.0, 1e-12);
}

TEST(Transform, InverseChangeRestoresCoefficients) {
    const auto p = test::problem_from(
        "d = 1\nm = 1\nT = 1\nb = [sin(t*x1)]\nsigma = [[1 + t*cos(x1)]]\nf = z1*t - y + exp(-t)\nPhi = 0\n");
    const TimeChange fwd(0.2, 0.5, 1.0);
    const TimeChange back(0.5, 0.2, 1.0);
    const auto q = transform_problem(transform_problem(p, fwd, 4.0).problem, back, 2.5).problem;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> a(1), b(1);
    for (int i = 0; i < 200; ++i) {
        const double t = 0.5 + 0.5 * U(rng);
        const std::vector<double> x{4.0 * U(rng) - 2.0}, z{U(rng)};
        const double y = U(rng);
        p.eval_drift(t, x, p.control(0), a);
        q.eval_drift(t, x, q.control(0), b);
        EXPECT_NEAR(a[0], b[0], 1e-12);
        p.eval_diffusion(t, x, p.control(0), a);
        q.eval_diffusion(t, x, q.control(0), b);
        EXPECT_NEAR(a[0], b[0], 1e-12);
        EXPECT_NEAR(p.eval_driver(t, x, y, z, p.control(0)), q.eval_driver(t, x, y, z, q.control(0)), 1e-12);
    }
}

TEST(Coupled, IdentityIsBitwiseZero) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = 0\nPhi = abs(x1)\n");
    const std::vector<double> x{0.0};
    const auto r = coupled_invariance_check(p, 0.3, 0.3, x, ControlPolicy::constant(0), 1.0, 50, 2000, 5);
    EXPECT_EQ(r.max_abs, 0.0);
    EXPECT_EQ(r.y_original, r.y_transformed);
}

TEST(Coupled, DeterministicObstacleExample) {
    const auto p = test::problem_from(kEx31);
    const std::vector<double> x{0.0};
    const auto r = coupled_invariance_check(p, 0.2, 0.5, x, ControlPolicy::constant(0), 64.0, 1500, 4, 1);
    EXPECT_DOUBLE_EQ(r.dt, 1e-3);
    EXPECT_LE(r.max_abs, 5.0 * r.dt);
    EXPECT_EQ(r.quantiles.size(), 6u);
}

TEST(Coupled, BrownianWithoutPenalty) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = 0\nPhi = abs(x1)\n");
    const std::vector<double> x{0.0};
    const auto r = coupled_invariance_check(p, 0.2, 0.5, x, ControlPolicy::constant(0), 1.0, 500, 4000, 21);
    EXPECT_LE(std::fabs(r.y_original - r.y_transformed), 3.0 * 0.02 + 5.0 * r.dt);
    EXPECT_LE(r.max_abs, 1e-9);
    const auto j = nlohmann::json::parse(discrepancy_to_json(r));
    for (const char* key : {"t0", "t1", "n", "dt", "max_abs", "mean_abs", "per_path_quantiles"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
}
