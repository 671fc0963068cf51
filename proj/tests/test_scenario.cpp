#include <gtest/gtest.h>

#include <json.hpp>
#include <string>

#include "hjblab/error.hpp"
#include "hjblab/scenario.hpp"
#include "support.hpp"

using namespace hjblab;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_scenario(text, "s.scn");
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Scenario, BundledBrownianExample) {
    const auto s = load_scenario(test::scenario_path("ex2_1.scn"));
    EXPECT_EQ(s.spec.terminal, "abs(x1)");
    ASSERT_EQ(s.spec.diffusion.size(), 1u);
    EXPECT_EQ(s.spec.diffusion[0], "1");
    EXPECT_EQ(s.spec.drift[0], "0");
    EXPECT_EQ(s.spec.driver, "0");
    EXPECT_EQ(s.problem.horizon(), 1.0);
    ASSERT_TRUE(s.grid.has_value());
    EXPECT_EQ(s.grid->nodes[0], 801u);
    EXPECT_EQ(s.mc.n_paths, 100000u);
}

TEST(Scenario, BundledObstacleExample) {
    const auto s = load_scenario(test::scenario_path("ex3_1.scn"));
    EXPECT_EQ(s.spec.driver, "-1");
    EXPECT_EQ(s.spec.obstacle, "0");
    EXPECT_EQ(s.spec.terminal, "1");
    EXPECT_EQ(s.problem.side(), ObstacleSide::Lower);
    EXPECT_EQ(s.problem.horizon(), 2.0);
    EXPECT_EQ(s.ladder, (std::vector<double>{64, 128, 256}));
}

TEST(Scenario, AllBundledFilesLoad) {
    for (const char* name : {"ex2_1.scn", "ex3_1.scn", "smooth_upper.scn", "smooth_upper_active.scn",
                             "reach_control.scn"}) {
        EXPECT_NO_THROW(load_scenario(test::scenario_path(name))) << name;
    }
}

TEST(Scenario, SigmaShapeErrorNamesField) {
    const auto msg = error_of("[problem]\nd = 2\nm = 1\nT = 1\nb = [0, 0]\nsigma = [[1, 0], [0, 1]]\nPhi = 0\n");
    EXPECT_NE(msg.find("sigma"), std::string::npos) << msg;
}

TEST(Scenario, ExpressionErrorsCarryLineAndColumn) {
    const auto msg = error_of("[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = abs(x1) + * 2\n");
    EXPECT_NE(msg.find("s.scn:5:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("Phi"), std::string::npos) << msg;
}

TEST(Scenario, UnknownKeysAndSections) {
    EXPECT_NE(error_of("[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = 0\nbogus = 1\n").find("bogus"),
              std::string::npos);
    EXPECT_NE(error_of("[nope]\n").find("nope"), std::string::npos);
    EXPECT_NE(error_of("[grid]\nlo = [0]\n").find("problem"), std::string::npos);
    EXPECT_NE(error_of("[problem]\nT = one\nb = [0]\nsigma = [[1]]\nPhi = 0\n").find("'T'"), std::string::npos);
}

TEST(Scenario, ConstantsFeedExpressions) {
    const auto s = parse_scenario(
        "[constants]\nkappa = 0.5\n[problem]\nT = 1\nb = [-kappa*x1]\nsigma = [[1]]\nPhi = 0\n");
    const std::vector<double> x{2.0};
    std::vector<double> out(1);
    s.problem.eval_drift(0.0, x, s.problem.control(0), out);
    EXPECT_EQ(out[0], -1.0);
}

TEST(Scenario, HashStableUnderReordering) {
    const auto a = parse_scenario(
        "[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = abs(x1)\n[mc]\npaths = 100\nseed = 4\n[output]\ndir = a\n");
    const auto b = parse_scenario(
        "[mc]\nseed = 4\npaths = 100\n[output]\ndir = b\n[problem]\nPhi = abs(x1)\nsigma = [[1]]\nb = [0]\nT = 1\n");
    const auto c = parse_scenario(
        "[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = abs(x1)\n[mc]\npaths = 100\nseed = 5\n");
    const auto d = parse_scenario("[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = abs(x1)\n[mc]\npaths = 100\nseed = 4\n"
                                  "[regularity]\ndeltas = [0.25]\n");
    EXPECT_EQ(a.hash, b.hash);
    EXPECT_NE(a.hash, c.hash);
    EXPECT_NE(a.hash, d.hash);
    EXPECT_EQ(a.hash, scenario_hash(a));
}

TEST(Scenario, BasisAndGridSettings) {
    const auto s = parse_scenario(
        "[problem]\nT = 1\nb = [0]\nsigma = [[1]]\nPhi = 0\n[grid]\nlo = [-1]\nhi = [1]\nnodes = [11]\nnt = auto\n"
        "scheme = implicit-sweep\n[mc]\nbasis = poly:3\n");
    EXPECT_EQ(s.grid->nt, 0u);
    EXPECT_EQ(s.grid->scheme, Scheme::ImplicitSweep);
    EXPECT_EQ(s.mc.basis.kind, RegressionBasis::Kind::Polynomial);
    EXPECT_EQ(s.mc.basis.degree, 3);
}

TEST(Scenario, MissingFile) { EXPECT_THROW(load_scenario("/nonexistent/x.scn"), InputError); }

TEST(Manifest, JsonFields) {
    RunManifest m;
    m.scenario_hash = 0xabcdef;
    m.tool_version = "1.2.3";
    m.seed = 9;
    m.started = "2026-01-01T00:00:00Z";
    m.wall_seconds = 1.5;
    m.stages = {{"load", 0.5}, {"solve", 1.0}};
    const auto j = nlohmann::json::parse(m.to_json());
    EXPECT_EQ(j["tool_version"], "1.2.3");
    EXPECT_EQ(j["seed"], 9);
    EXPECT_EQ(j["stages"].size(), 2u);
    EXPECT_TRUE(j["scenario_hash"].is_string());
}
