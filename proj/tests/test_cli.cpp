#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "support.hpp"

using namespace hjblab;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "hjblab");
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Cli, OracleValue) {
    const auto r = run({"oracle", "--id", "ex2_1", "--t", "0.5", "--x", "0"});
    EXPECT_EQ(r.code, cli::kOk);
    EXPECT_EQ(r.out, "0.5641895835\n");
}

TEST(Cli, OracleCsv) {
    const auto r = run({"oracle", "--id", "ex3_1", "--t", "0.5,1.5", "--x", "0", "--out", "-"});
    EXPECT_EQ(r.code, cli::kOk);
    EXPECT_EQ(r.out, "t,x1,v\n0.5,0,0\n1.5,0,0.5\n");
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, cli::kUsage);
    EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
    EXPECT_EQ(run({"oracle", "--id", "ex2_1"}).code, cli::kUsage);
    EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST(Cli, InputErrors) {
    EXPECT_EQ(run({"regularity", "--field", "missing.csv"}).code, cli::kInput);
    EXPECT_EQ(run({"solve", "--scenario", "missing.scn", "--out", "x.csv"}).code, cli::kInput);
    EXPECT_EQ(run({"oracle", "--id", "nope", "--t", "0", "--x", "0"}).code, cli::kInput);
    EXPECT_EQ(run({"oracle", "--id", "ex2_1", "--t", "abc", "--x", "0"}).code, cli::kInput);
}

TEST(Cli, NumericalErrorExitCode) {
    const auto dir = test::temp_dir("cli_num");
    const auto scn = (dir / "blow.scn").string();
    std::ofstream(scn) << "[problem]\nT = 1\nb = [x1^2]\nsigma = [[0]]\nPhi = 0\n[mc]\npaths = 4\nsteps = 10\n"
                          "x0 = [1e200]\n";
    EXPECT_EQ(run({"mc-value", "--scenario", scn}).code, cli::kNumerical);
}

TEST(Cli, SolveThenCompareToOracle) {
    const auto dir = test::temp_dir("cli_solve");
    const auto v = (dir / "v.csv").string();
    const auto s = run({"solve", "--scenario", test::scenario_path("ex3_1.scn"), "--variant", "projected", "--out", v});
    ASSERT_EQ(s.code, cli::kOk) << s.err;
    const auto c = run({"compare", "--a", v, "--oracle", "ex3_1", "--assert-tol", "1e-3"});
    ASSERT_EQ(c.code, cli::kOk) << c.err;
    const auto j = nlohmann::json::parse(c.out);
    EXPECT_LE(j["sup"].get<double>(), 1e-3);
    const auto bad = run({"compare", "--a", v, "--oracle", "ex2_1", "--T", "2", "--assert-tol", "1e-3"});
    EXPECT_EQ(bad.code, cli::kAssert);
}

TEST(Cli, RegularityAssertions) {
    const auto dir = test::temp_dir("cli_reg");
    const auto v = (dir / "v.csv").string();
    ASSERT_EQ(run({"solve", "--scenario", test::scenario_path("ex3_1.scn"), "--out", v}).code, cli::kOk);
    const auto ok = run({"regularity", "--field", v, "--deltas", "0.5", "--assert", "semiconcave_diverging"});
    EXPECT_EQ(ok.code, cli::kOk) << ok.err;
    const auto fail = run({"regularity", "--field", v, "--deltas", "0.5", "--assert", "semiconcave_stable"});
    EXPECT_EQ(fail.code, cli::kAssert);
    const auto report = (dir / "r.json").string();
    ASSERT_EQ(run({"regularity", "--field", v, "--scenario", test::scenario_path("ex3_1.scn"), "--out", report}).code,
              cli::kOk);
    EXPECT_TRUE(nlohmann::json::parse(slurp(report)).is_array());
}

TEST(Cli, PenalizedSolveAndCompare) {
    const auto dir = test::temp_dir("cli_pen");
    const auto a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
    const auto scn = test::scenario_path("ex3_1.scn");
    ASSERT_EQ(run({"solve", "--scenario", scn, "--out", a}).code, cli::kOk);
    ASSERT_EQ(run({"solve", "--scenario", scn, "--variant", "penalized", "--n", "64", "--out", b}).code, cli::kOk);
    const auto c = run({"compare", "--a", a, "--b", b});
    ASSERT_EQ(c.code, cli::kOk);
    EXPECT_NEAR(nlohmann::json::parse(c.out)["sup"].get<double>(), 1.0 / 64.0, 1e-3);
    EXPECT_EQ(run({"solve", "--scenario", scn, "--variant", "penalized", "--out", b}).code, cli::kInput);
}

TEST(Cli, McValueTable) {
    const auto r = run({"mc-value", "--scenario", test::scenario_path("reach_control.scn"), "--policy", "const:2"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(r.out.substr(0, 15), "n,y0,half_width");
    EXPECT_NE(r.out.find("limit,2,"), std::string::npos) << r.out;
    EXPECT_EQ(run({"mc-value", "--scenario", test::scenario_path("reach_control.scn"), "--policy", "const:9"}).code,
              cli::kInput);
}

TEST(Cli, McValueWithFieldPolicy) {
    const auto dir = test::temp_dir("cli_fb");
    const auto v = (dir / "v.csv").string();
    const auto scn = test::scenario_path("reach_control.scn");
    ASSERT_EQ(run({"solve", "--scenario", scn, "--out", v}).code, cli::kOk);
    const auto r = run({"mc-value", "--scenario", scn, "--policy", "field:" + v});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto pos = r.out.find("limit,");
    ASSERT_NE(pos, std::string::npos) << r.out;
    EXPECT_NEAR(std::stod(r.out.substr(pos + 6)), 0.5, 1e-12);
}

TEST(Cli, TimeChangeCheck) {
    const auto r = run({"timechange-check", "--scenario", test::scenario_path("ex3_1.scn"), "--t0", "0.2", "--t1",
                        "0.5", "--n", "64", "--dt", "1e-3", "--paths", "4", "--assert-max", "5e-3"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["t0"], 0.2);
    EXPECT_TRUE(j.contains("per_path_quantiles"));
}

TEST(Cli, CheckAssumptions) {
    const auto r = run({"check-assumptions", "--scenario", test::scenario_path("ex2_1.scn"), "--samples", "200"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j["terminal_obstacle_ordered"].get<bool>());
    EXPECT_FALSE(j["coefficients"].empty());
}

TEST(Cli, ManifestAndDeterminism) {
    const auto dir = test::temp_dir("cli_det");
    const auto scn = test::scenario_path("smooth_upper.scn");
    std::string first;
    for (const char* threads : {"1", "4", "8"}) {
        const auto v = (dir / (std::string("v") + threads + ".csv")).string();
        const auto m = (dir / "manifest.json").string();
        ASSERT_EQ(run({"--threads", threads, "--manifest", m, "solve", "--scenario", scn, "--out", v}).code, cli::kOk);
        const auto text = slurp(v);
        if (first.empty()) first = text;
        EXPECT_EQ(text, first);
        const auto j = nlohmann::json::parse(slurp(m));
        EXPECT_TRUE(j.contains("scenario_hash"));
        EXPECT_FALSE(j["stages"].empty());
    }
}
