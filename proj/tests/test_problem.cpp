#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "hjblab/error.hpp"
#include "hjblab/expr.hpp"
#include "hjblab/problem.hpp"
#include "support.hpp"

using namespace hjblab;

namespace {

double eval_at(const Expr& e, double t, std::vector<double> x, double y = 0.0, std::vector<double> z = {0.0},
               std::vector<double> u = {}) {
    return e.eval({t, x, y, z, u});
}

ExprContext ctx(std::size_t d = 1, std::size_t m = 1, std::size_t k = 1) {
    ExprContext c;
    c.state_dim = d;
    c.noise_dim = m;
    c.control_dim = k;
    return c;
}

}  // namespace

TEST(Expr, AbsOfState) {
    const Expr e = Expr::parse("abs(x1)", ctx());
    EXPECT_EQ(eval_at(e, 0.0, {-2.5}), 2.5);
    EXPECT_EQ(eval_at(e, 0.0, {3.0}), 3.0);
}

TEST(Expr, ZeroIsConstant) {
    const Expr e = Expr::parse("0", ctx());
    EXPECT_TRUE(e.is_constant());
    EXPECT_EQ(eval_at(e, 0.3, {7.0}), 0.0);
}

TEST(Expr, DiscountedCosine) {
    const Expr e = Expr::parse("exp(-(1-t))*cos(x1)", ctx());
    EXPECT_NEAR(eval_at(e, 0.5, {0.0}), 0.6065306597, 1e-10);
}

TEST(Expr, OperatorPrecedenceAndPowers) {
    const Expr e = Expr::parse("2 + 3*x1^2 - -1", ctx());
    EXPECT_DOUBLE_EQ(eval_at(e, 0.0, {2.0}), 15.0);
    EXPECT_DOUBLE_EQ(eval_at(Expr::parse("-x1^2", ctx()), 0.0, {3.0}), -9.0);
    EXPECT_DOUBLE_EQ(eval_at(Expr::parse("x1^0", ctx()), 0.0, {3.0}), 1.0);
}

TEST(Expr, HelperFunctions) {
    const auto c = ctx();
    EXPECT_EQ(eval_at(Expr::parse("pos(x1)", c), 0, {-2.0}), 0.0);
    EXPECT_EQ(eval_at(Expr::parse("neg(x1)", c), 0, {-2.0}), 2.0);
    EXPECT_EQ(eval_at(Expr::parse("clamp(x1, -1, 1)", c), 0, {5.0}), 1.0);
    EXPECT_EQ(eval_at(Expr::parse("min(x1, 2)", c), 0, {5.0}), 2.0);
    EXPECT_EQ(eval_at(Expr::parse("max(x1, 2)", c), 0, {5.0}), 5.0);
    EXPECT_NEAR(eval_at(Expr::parse("tanh(x1)", c), 0, {0.5}), std::tanh(0.5), 1e-15);
    EXPECT_NEAR(eval_at(Expr::parse("sqrt(x1)", c), 0, {2.0}), std::sqrt(2.0), 1e-15);
}

TEST(Expr, VariablesOfEveryKind) {
    const Expr e = Expr::parse("t + x2 + y + z1 + u1", ctx(2, 1, 1));
    const std::vector<double> x{1.0, 2.0}, z{4.0}, u{5.0};
    EXPECT_EQ(e.eval({0.5, x, 3.0, z, u}), 0.5 + 2.0 + 3.0 + 4.0 + 5.0);
    EXPECT_TRUE(e.depends_on(VarKind::Gradient));
    EXPECT_EQ(e.index_extent(VarKind::State), 2u);
}

TEST(Expr, NamedConstants) {
    auto c = ctx();
    c.constants["kappa"] = 0.25;
    EXPECT_EQ(eval_at(Expr::parse("kappa*4", c), 0.0, {0.0}), 1.0);
}

TEST(Expr, SyntaxErrorReportsOffset) {
    try {
        Expr::parse("1 + * 2", ctx());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    EXPECT_THROW(Expr::parse("", ctx()), ParseError);
    EXPECT_THROW(Expr::parse("(x1", ctx()), ParseError);
    EXPECT_THROW(Expr::parse("x1^1.5", ctx()), ParseError);
}

TEST(Expr, UnknownIdentifierAndArity) {
    EXPECT_THROW(Expr::parse("foo + 1", ctx()), ParseError);
    EXPECT_THROW(Expr::parse("x3", ctx(2)), ParseError);
    EXPECT_THROW(Expr::parse("bogus(1)", ctx()), ParseError);
    EXPECT_THROW(Expr::parse("min(1)", ctx()), ParseError);
    EXPECT_THROW(Expr::parse("abs(1, 2)", ctx()), ParseError);
}

TEST(Expr, EvaluationErrors) {
    EXPECT_THROW(eval_at(Expr::parse("1/x1", ctx()), 0.0, {0.0}), EvalError);
    EXPECT_THROW(eval_at(Expr::parse("sqrt(x1)", ctx()), 0.0, {-1.0}), EvalError);
}

TEST(Expr, PrintParseRoundTrip) {
    const char* texts[] = {"abs(x1)", "-x1^3 + 2*t", "exp(-(1-t))*cos(x1)", "min(abs(x1), 2)", "-y/2",
                           "clamp(x1*u1, -1, 1) - neg(z1)", "1/(1 + x1^2)", "sqrt(1 + tanh(x1)^2)",
                           "x1 - (t - (y - 2))", "pos(x1) - 3*-u1"};
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (const char* text : texts) {
        const Expr e = Expr::parse(text, ctx());
        const Expr back = Expr::parse(e.to_string(), ctx());
        for (int i = 0; i < 200; ++i) {
            const double t = dist(rng), y = dist(rng);
            const std::vector<double> x{dist(rng)}, z{dist(rng)}, u{dist(rng)};
            EXPECT_EQ(e.eval({t, x, y, z, u}), back.eval({t, x, y, z, u})) << text;
        }
    }
}

TEST(Expr, SubstituteReplacesVariable) {
    const Expr e = Expr::parse("t*x1", ctx());
    const Expr s = e.substitute({VarKind::Time, 0}, Expr::constant(3.0));
    EXPECT_EQ(eval_at(s, 100.0, {2.0}), 6.0);
}

TEST(Hamiltonian, DiffusionOnly) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nf = 0\nPhi = 0\n");
    const std::vector<double> x{0.3}, grad{7.0}, A{2.0};
    EXPECT_DOUBLE_EQ(hamiltonian(p, {0.0, x, 0.0, grad, A, p.control(0)}), 1.0 + 0.0);
}

TEST(Hamiltonian, ConstantDriver) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 2\nb = [0]\nsigma = [[0]]\nf = -1\nPhi = 1\n");
    const std::vector<double> x{0.3}, grad{7.0}, A{-4.0};
    EXPECT_EQ(hamiltonian(p, {0.1, x, 5.0, grad, A, p.control(0)}), -1.0);
}

TEST(Hamiltonian, ControlledDrift) {
    const auto p = test::problem_from(
        "d = 1\nm = 1\nT = 1\nb = [u1]\nsigma = [[0]]\nf = 0\nPhi = 0\ncontrols = [-1, 0, 1]\n");
    const std::vector<double> x{0.0}, grad{3.0}, A{0.0};
    EXPECT_EQ(hamiltonian(p, {0.0, x, 0.0, grad, A, p.control(0)}), -3.0);
}

TEST(Hamiltonian, DriverSeesGradientTimesSigma) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[2]]\nf = z1\nPhi = 0\n");
    const std::vector<double> x{0.0}, grad{3.0}, A{0.0};
    EXPECT_EQ(hamiltonian(p, {0.0, x, 0.0, grad, A, p.control(0)}), 6.0);
}

TEST(Hamiltonian, RejectsAsymmetricMatrix) {
    const auto p = test::problem_from("d = 2\nm = 1\nT = 1\nb = [0, 0]\nsigma = [[1], [0]]\nf = 0\nPhi = 0\n");
    const std::vector<double> x{0.0, 0.0}, grad{0.0, 0.0}, A{1.0, 0.5, 0.2, 1.0};
    EXPECT_THROW(hamiltonian(p, {0.0, x, 0.0, grad, A, p.control(0)}), InputError);
}

TEST(DriverInf, PicksMinimumAndBreaksTiesLow) {
    const auto p = test::problem_from(
        "d = 1\nm = 1\nT = 1\nb = [u1]\nsigma = [[0]]\nf = 0\nPhi = 0\ncontrols = [-1, 0, 1]\n");
    const std::vector<double> x{0.0}, A{0.0};
    const std::vector<double> up{3.0}, down{-3.0}, flat{0.0};
    auto r = hjb_driver_inf(p, 0.0, x, 0.0, up, A);
    EXPECT_EQ(r.value, -3.0);
    EXPECT_EQ(r.control, 0u);
    r = hjb_driver_inf(p, 0.0, x, 0.0, down, A);
    EXPECT_EQ(r.value, -3.0);
    EXPECT_EQ(r.control, 2u);
    r = hjb_driver_inf(p, 0.0, x, 0.0, flat, A);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_EQ(r.control, 0u);
}

TEST(ControlProblem, ValidatesFields) {
    EXPECT_THROW(test::problem_from("d = 1\nm = 1\nT = 0\nb = [0]\nsigma = [[1]]\nPhi = 0\n"), InputError);
    try {
        test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = 0\nphi = 1\nside = lower\n");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("Phi"), std::string::npos);
    }
    EXPECT_THROW(test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = y\n"), InputError);
    EXPECT_THROW(test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = 0\nside = upper\n"),
                 InputError);
}

TEST(ControlProblem, UpperSideOrdering) {
    EXPECT_NO_THROW(
        test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = cos(x1)\nphi = 10\nside = upper\n"));
    EXPECT_THROW(
        test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = cos(x1)\nphi = -2\nside = upper\n"),
        InputError);
}

TEST(ControlProblem, HashTracksContent) {
    const auto a = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = abs(x1)\n");
    const auto b = test::problem_from("T = 1\nPhi = abs(x1)\nsigma = [[1]]\nb = [0]\nd = 1\nm = 1\n");
    const auto c = test::problem_from("d = 1\nm = 1\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = abs(x1) + 1\n");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_TRUE(a.coefficients_time_independent());
}

TEST(Assumptions, DiagnosesGrowthAndLipschitz) {
    const auto p = test::problem_from("d = 1\nm = 1\nT = 1\nb = [x1^3]\nsigma = [[1]]\nPhi = abs(x1)\n");
    const Box box{{-1.0}, {1.0}};
    const auto r = check_assumptions(p, 500, box, 5);
    bool saw_b = false, saw_phi = false;
    for (const auto& c : r.coefficients) {
        if (c.name == "b1") {
            saw_b = true;
            EXPECT_TRUE(c.growth_suspected);
        }
        if (c.name == "Phi") {
            saw_phi = true;
            EXPECT_LE(c.lipschitz, 1.0 + 1e-9);
            EXPECT_GE(c.lipschitz, 0.9);
            EXPECT_FALSE(c.growth_suspected && c.sup_wide > 3.0 * c.sup);
        }
    }
    EXPECT_TRUE(saw_b && saw_phi);
    EXPECT_FALSE(r.warnings.empty());
}
