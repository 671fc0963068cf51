#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "hjblab/bsde.hpp"
#include "hjblab/error.hpp"
#include "hjblab/field_io.hpp"
#include "hjblab/hjb_grid.hpp"
#include "hjblab/parallel.hpp"
#include "hjblab/problem.hpp"
#include "hjblab/regularity.hpp"
#include "hjblab/scenario.hpp"
#include "hjblab/time_change.hpp"

#ifndef HJBLAB_VERSION
#define HJBLAB_VERSION "dev"
#endif

namespace hjblab::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string num17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw InputError("option '" + what + "': malformed number '" + item + "'");
        }
        while (used < item.size() && item[used] == ' ') ++used;
        if (used != item.size()) throw InputError("option '" + what + "': malformed number '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw InputError("option '" + what + "' needs at least one value");
    return out;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw InputError("failed writing '" + path + "'");
}

struct Stages {
    std::vector<std::pair<std::string, double>> list;
    Clock::time_point mark = Clock::now();
    void lap(const std::string& name) {
        const auto now = Clock::now();
        list.emplace_back(name, std::chrono::duration<double>(now - mark).count());
        mark = now;
    }
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    Stages stages;
    std::uint64_t hash = 0;
    std::uint64_t seed = 0;
};

ControlPolicy parse_policy(const std::string& text, const ControlProblem& prob, const TimeGrid& grid) {
    if (text.rfind("const:", 0) == 0) {
        std::size_t idx = 0;
        try {
            idx = std::stoul(text.substr(6));
        } catch (const std::exception&) {
            throw InputError("policy '" + text + "': expected const:INDEX");
        }
        if (idx >= prob.num_controls()) throw InputError("policy '" + text + "': control index out of range");
        return ControlPolicy::constant(idx);
    }
    if (text.rfind("field:", 0) == 0) return policy_from_field(read_field_csv(text.substr(6)), grid);
    throw InputError("policy '" + text + "': expected const:INDEX or field:PATH");
}

std::optional<Box> window_from(const std::string& lo, const std::string& hi) {
    if (lo.empty() && hi.empty()) return std::nullopt;
    if (lo.empty() || hi.empty()) throw InputError("--window-lo and --window-hi must be given together");
    return Box{parse_list(lo, "window-lo"), parse_list(hi, "window-hi")};
}

// solve --------------------------------------------------------------------

struct SolveArgs {
    std::string scenario, out, variant = "projected", side, scheme;
    double n = 0.0;
    std::size_t nt = 0, store_every = 0;
};

int do_solve(const SolveArgs& a, Context& ctx) {
    const Scenario s = load_scenario(a.scenario);
    ctx.hash = s.hash;
    if (!s.grid) throw InputError("scenario '" + a.scenario + "' has no [grid] section");
    GridSpec gs = *s.grid;
    if (!a.scheme.empty()) gs.scheme = parse_scheme(a.scheme);
    if (a.nt) gs.nt = a.nt;
    if (a.store_every) gs.store_every = a.store_every;
    HjbOptions opts;
    opts.side = a.side.empty() ? s.problem.side() : parse_obstacle_side(a.side);
    if (a.variant == "projected") {
        opts.variant = ObstacleVariant::projected();
    } else if (a.variant == "penalized") {
        if (!(a.n >= 1.0)) throw InputError("--variant penalized needs --n >= 1");
        opts.variant = ObstacleVariant::penalized(a.n);
    } else {
        throw InputError("unknown variant '" + a.variant + "' (expected projected or penalized)");
    }
    opts.store_every = gs.store_every;
    ctx.stages.lap("load");
    const SpaceTimeGrid g = build_grid(gs.box, gs.nodes, gs.nt, s.problem, gs.scheme);
    for (const auto& w : g.warnings) ctx.err << "warning: " << w << '\n';
    const ValueField f = solve_hjb(s.problem, g, opts);
    ctx.stages.lap("solve");
    write_field_csv(f, a.out);
    ctx.stages.lap("write");
    ctx.out << "wrote " << a.out << ": " << f.slices() << " slices x " << f.space.size() << " nodes, nt=" << g.nt
            << ", dt=" << num17(g.dt()) << '\n';
    return kOk;
}

// mc-value -----------------------------------------------------------------

struct McArgs {
    std::string scenario, out, policy = "const:0", ladder, x;
    std::optional<double> t;
    std::size_t paths = 0, steps = 0;
    std::optional<std::uint64_t> seed;
};

int do_mc(const McArgs& a, Context& ctx) {
    const Scenario s = load_scenario(a.scenario);
    ctx.hash = s.hash;
    McSpec mc = s.mc;
    if (a.paths) mc.n_paths = a.paths;
    if (a.steps) mc.steps = a.steps;
    if (a.seed) mc.seed = *a.seed;
    ctx.seed = mc.seed;
    const double t = a.t.value_or(s.mc_t0);
    const std::vector<double> x = a.x.empty() ? s.mc_x0 : parse_list(a.x, "x");
    if (x.size() != s.problem.state_dim()) throw InputError("--x must have one entry per state dimension");
    const PenaltyLadder ladder(a.ladder.empty() ? s.ladder : parse_list(a.ladder, "ladder"));
    const ControlPolicy policy = parse_policy(a.policy, s.problem, TimeGrid(t, s.problem.horizon(), mc.steps));
    ctx.stages.lap("load");
    const ValueTable table = value_fixed_control(s.problem, t, x, policy, ladder, mc);
    ctx.stages.lap("solve");
    std::string csv = "n,y0,half_width\n";
    for (const auto& r : table.rows) csv += num17(r.n) + "," + num17(r.y0) + "," + num17(r.half_width) + "\n";
    csv += "limit," + num17(table.limit) + "," + num17(table.limit_half_width) + "\n";
    write_text(a.out, csv, ctx.out);
    return kOk;
}

// regularity ---------------------------------------------------------------

struct RegArgs {
    std::string field, scenario, deltas, window_lo, window_hi, out;
    std::vector<std::string> asserts;
};

int do_regularity(const RegArgs& a, Context& ctx) {
    const ValueField f = read_field_csv(a.field);
    std::vector<double> deltas;
    RegularityOptions opts;
    if (!a.scenario.empty()) {
        const Scenario s = load_scenario(a.scenario);
        ctx.hash = s.hash;
        deltas = s.deltas;
        opts.window = s.window;
    }
    if (!a.deltas.empty()) deltas = parse_list(a.deltas, "deltas");
    if (auto w = window_from(a.window_lo, a.window_hi)) opts.window = w;
    if (deltas.empty()) throw InputError("no deltas given (use --deltas or a scenario with [regularity] deltas)");
    ctx.stages.lap("load");
    const RegularityReport r = regularity_report(f, deltas, opts);
    ctx.stages.lap("estimate");
    write_text(a.out, report_to_json(r), ctx.out);
    int code = kOk;
    for (const auto& name : a.asserts) {
        for (const auto& d : r.per_delta) {
            bool v = false;
            if (name == "lipschitz_stable") {
                v = d.lipschitz_stable;
            } else if (name == "semiconcave_stable") {
                v = d.semiconcave_stable;
            } else if (name == "semiconcave_diverging") {
                v = d.semiconcave_diverging;
            } else {
                throw InputError("unknown verdict '" + name + "'");
            }
            if (!v) {
                ctx.err << "assertion failed: " << name << " is false at delta " << num17(d.delta) << '\n';
                code = kAssert;
            }
        }
    }
    return code;
}

// timechange-check ---------------------------------------------------------

struct TcArgs {
    std::string scenario, out, policy = "const:0", x;
    double t0 = 0.0, t1 = 0.0;
    std::optional<double> n, dt, assert_max;
    std::size_t steps = 0, paths = 0;
    std::optional<std::uint64_t> seed;
};

int do_timechange(const TcArgs& a, Context& ctx) {
    const Scenario s = load_scenario(a.scenario);
    ctx.hash = s.hash;
    const double T = s.problem.horizon();
    std::size_t steps = a.steps ? a.steps : s.mc.steps;
    if (a.dt) {
        if (!(*a.dt > 0.0)) throw InputError("--dt must be positive");
        steps = static_cast<std::size_t>(std::llround((T - a.t1) / *a.dt));
        if (steps < 1) throw InputError("--dt is larger than the interval [t1, T]");
    }
    const std::size_t paths = a.paths ? a.paths : s.mc.n_paths;
    const std::uint64_t seed = a.seed.value_or(s.mc.seed);
    ctx.seed = seed;
    const double n = a.n.value_or(s.ladder.back());
    const std::vector<double> x = a.x.empty() ? s.mc_x0 : parse_list(a.x, "x");
    if (x.size() != s.problem.state_dim()) throw InputError("--x must have one entry per state dimension");
    if (!(a.t0 >= 0.0 && a.t0 < T) || !(a.t1 >= 0.0 && a.t1 < T)) throw InputError("--t0 and --t1 must lie in [0, T)");
    const ControlPolicy policy = parse_policy(a.policy, s.problem, TimeGrid(a.t1, T, steps));
    ctx.stages.lap("load");
    const DiscrepancyReport r = coupled_invariance_check(s.problem, a.t0, a.t1, x, policy, n, steps, paths, seed,
                                                         s.mc.basis);
    ctx.stages.lap("check");
    write_text(a.out, discrepancy_to_json(r), ctx.out);
    if (a.assert_max && r.max_abs > *a.assert_max) {
        ctx.err << "assertion failed: max discrepancy " << num17(r.max_abs) << " exceeds " << num17(*a.assert_max)
                << '\n';
        return kAssert;
    }
    return kOk;
}

// oracle -------------------------------------------------------------------

struct OracleArgs {
    std::string id, t, x, out;
    std::optional<double> horizon;
};

int do_oracle(const OracleArgs& a, Context& ctx) {
    const OracleId id = OracleId::parse(a.id, a.horizon);
    const auto ts = parse_list(a.t, "t");
    const auto xs = parse_list(a.x, "x");
    if (ts.size() == 1 && xs.size() == 1 && a.out.empty()) {
        const double x[] = {xs[0]};
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10f\n", oracle_value(id, ts[0], x));
        ctx.out << buf;
        return kOk;
    }
    std::string csv = "t,x1,v\n";
    for (double t : ts) {
        for (double xv : xs) {
            const double x[] = {xv};
            csv += num17(t) + "," + num17(xv) + "," + num17(oracle_value(id, t, x)) + "\n";
        }
    }
    write_text(a.out, csv, ctx.out);
    return kOk;
}

// compare ------------------------------------------------------------------

struct CompareArgs {
    std::string a, b, oracle, window_lo, window_hi, out;
    std::optional<double> horizon, assert_tol;
};

int do_compare(const CompareArgs& a, Context& ctx) {
    if (a.b.empty() == a.oracle.empty()) throw InputError("compare needs exactly one of --b or --oracle");
    const ValueField fa = read_field_csv(a.a);
    std::optional<ValueField> fb;
    std::optional<OracleId> id;
    if (!a.b.empty()) {
        fb = read_field_csv(a.b);
        if (!(fb->space == fa.space) || fb->time_index != fa.time_index || fb->nt != fa.nt) {
            throw InputError("fields '" + a.a + "' and '" + a.b + "' live on different grids");
        }
    } else {
        id = OracleId::parse(a.oracle, a.horizon.value_or(fa.horizon));
    }
    const auto window = window_from(a.window_lo, a.window_hi);
    const SpaceGrid& g = fa.space;
    std::vector<double> x(g.dims());
    double sup = 0.0, sq = 0.0, at_t = 0.0;
    std::vector<double> at_x(g.dims(), 0.0);
    std::size_t count = 0;
    for (std::size_t s = 0; s < fa.slices(); ++s) {
        const double t = fa.time(s);
        for (std::size_t node = 0; node < g.size(); ++node) {
            g.coords(node, x);
            if (window && !window->contains(x, 1e-9)) continue;
            const double other = fb ? fb->at(s, node) : oracle_value(*id, t, x);
            const double diff = std::fabs(fa.at(s, node) - other);
            if (diff > sup) {
                sup = diff;
                at_t = t;
                at_x = x;
            }
            sq += diff * diff;
            ++count;
        }
    }
    if (count == 0) throw InputError("comparison window holds no grid nodes");
    json j;
    j["a"] = a.a;
    j["b"] = fb ? a.b : "oracle:" + a.oracle;
    j["points"] = count;
    j["sup"] = sup;
    j["l2"] = std::sqrt(sq / static_cast<double>(count));
    j["argsup"] = {{"t", at_t}, {"x", at_x}};
    write_text(a.out, j.dump(2) + "\n", ctx.out);
    if (a.assert_tol && !(sup <= *a.assert_tol)) {
        ctx.err << "assertion failed: sup difference " << num17(sup) << " exceeds " << num17(*a.assert_tol) << '\n';
        return kAssert;
    }
    return kOk;
}

// check-assumptions --------------------------------------------------------

struct AssumeArgs {
    std::string scenario, lo, hi, out;
    std::size_t samples = 1000;
    std::uint64_t seed = 1;
};

int do_assumptions(const AssumeArgs& a, Context& ctx) {
    const Scenario s = load_scenario(a.scenario);
    ctx.hash = s.hash;
    ctx.seed = a.seed;
    const std::size_t d = s.problem.state_dim();
    Box box{std::vector<double>(d, -1.0), std::vector<double>(d, 1.0)};
    if (s.grid) box = s.grid->box;
    if (!a.lo.empty()) box.lo = parse_list(a.lo, "lo");
    if (!a.hi.empty()) box.hi = parse_list(a.hi, "hi");
    if (box.lo.size() != d || box.hi.size() != d) throw InputError("--lo/--hi must have one entry per state dimension");
    if (a.samples < 1) throw InputError("--samples must be at least 1");
    const AssumptionReport r = check_assumptions(s.problem, a.samples, box, a.seed);
    json coeffs = json::array();
    for (const auto& c : r.coefficients) {
        coeffs.push_back({{"name", c.name},
                          {"sup", c.sup},
                          {"sup_wide", c.sup_wide},
                          {"lipschitz", c.lipschitz},
                          {"growth_suspected", c.growth_suspected}});
    }
    json j;
    j["coefficients"] = coeffs;
    j["terminal_obstacle_ordered"] = r.terminal_obstacle_ordered;
    j["obstacle_constant"] = r.obstacle_constant;
    j["warnings"] = r.warnings;
    write_text(a.out, j.dump(2) + "\n", ctx.out);
    return kOk;
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Degenerate HJB obstacle problems: finite differences, penalized BSDEs, regularity checks", "hjblab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", HJBLAB_VERSION);
    int threads = -1;
    std::string manifest;
    app.add_option("--threads", threads, "Worker threads (0 = all; default: HJBLAB_THREADS or all)");
    app.add_option("--manifest", manifest, "Write a run manifest (JSON) to this path");

    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "Finite-difference solve of a scenario; writes a field CSV");
    solve->add_option("--scenario", sa.scenario, "Scenario file")->required();
    solve->add_option("--out", sa.out, "Output field CSV")->required();
    solve->add_option("--variant", sa.variant, "projected or penalized");
    solve->add_option("--n", sa.n, "Penalty level for --variant penalized");
    solve->add_option("--side", sa.side, "Obstacle side override: none, lower, upper");
    solve->add_option("--scheme", sa.scheme, "explicit or implicit-sweep");
    solve->add_option("--nt", sa.nt, "Time steps override");
    solve->add_option("--store-every", sa.store_every, "Keep every k-th time slice");

    McArgs ma;
    std::uint64_t mc_seed = 0;
    double mc_t = 0.0;
    auto* mc = app.add_subcommand("mc-value", "Penalized-BSDE value of a fixed policy along the penalty ladder");
    mc->add_option("--scenario", ma.scenario, "Scenario file")->required();
    mc->add_option("--out", ma.out, "Output CSV (default stdout)");
    mc->add_option("--policy", ma.policy, "const:INDEX or field:FIELD.csv");
    mc->add_option("--ladder", ma.ladder, "Comma-separated penalty levels");
    auto* mc_t_opt = mc->add_option("--t", mc_t, "Initial time");
    mc->add_option("--x", ma.x, "Initial state, comma-separated");
    mc->add_option("--paths", ma.paths, "Number of paths");
    mc->add_option("--steps", ma.steps, "Time steps");
    auto* mc_seed_opt = mc->add_option("--seed", mc_seed, "Random seed");

    RegArgs ra;
    auto* reg = app.add_subcommand("regularity", "Regularity report (JSON) of a field CSV");
    reg->add_option("--field", ra.field, "Field CSV")->required();
    reg->add_option("--scenario", ra.scenario, "Scenario supplying deltas and window");
    reg->add_option("--deltas", ra.deltas, "Comma-separated deltas");
    reg->add_option("--window-lo", ra.window_lo, "Lower corner of the estimation window");
    reg->add_option("--window-hi", ra.window_hi, "Upper corner of the estimation window");
    reg->add_option("--out", ra.out, "Output JSON (default stdout)");
    reg->add_option("--assert", ra.asserts, "Verdict that must hold at every delta");

    TcArgs ta;
    double tc_n = 0.0, tc_dt = 0.0, tc_max = 0.0;
    std::uint64_t tc_seed = 0;
    auto* tc = app.add_subcommand("timechange-check", "Coupled time-change invariance check (JSON)");
    tc->add_option("--scenario", ta.scenario, "Scenario file")->required();
    tc->add_option("--t0", ta.t0, "Target initial time")->required();
    tc->add_option("--t1", ta.t1, "Original initial time")->required();
    auto* tc_n_opt = tc->add_option("--n", tc_n, "Penalty level (default: last ladder level)");
    auto* tc_dt_opt = tc->add_option("--dt", tc_dt, "Step of the original run");
    tc->add_option("--steps", ta.steps, "Steps of both runs");
    tc->add_option("--paths", ta.paths, "Number of paths");
    auto* tc_seed_opt = tc->add_option("--seed", tc_seed, "Random seed");
    tc->add_option("--x", ta.x, "Initial state, comma-separated");
    tc->add_option("--policy", ta.policy, "const:INDEX or field:FIELD.csv");
    tc->add_option("--out", ta.out, "Output JSON (default stdout)");
    auto* tc_max_opt = tc->add_option("--assert-max", tc_max, "Fail when the max discrepancy exceeds this");

    OracleArgs oa;
    double o_T = 0.0;
    auto* orc = app.add_subcommand("oracle", "Closed-form oracle values");
    orc->add_option("--id", oa.id, "ex2_1, ex3_1, smooth_upper or reach_control")->required();
    orc->add_option("--t", oa.t, "Time(s), comma-separated")->required();
    orc->add_option("--x", oa.x, "x1 value(s), comma-separated")->required();
    auto* o_T_opt = orc->add_option("--T", o_T, "Horizon (default per oracle)");
    orc->add_option("--out", oa.out, "Output CSV");

    CompareArgs ca;
    double c_T = 0.0, c_tol = 0.0;
    auto* cmp = app.add_subcommand("compare", "Sup and L2 difference between a field and a field or oracle");
    cmp->add_option("--a", ca.a, "Field CSV")->required();
    cmp->add_option("--b", ca.b, "Second field CSV");
    cmp->add_option("--oracle", ca.oracle, "Oracle id");
    auto* c_T_opt = cmp->add_option("--T", c_T, "Oracle horizon (default: field horizon)");
    cmp->add_option("--window-lo", ca.window_lo, "Lower corner of the comparison window");
    cmp->add_option("--window-hi", ca.window_hi, "Upper corner of the comparison window");
    cmp->add_option("--out", ca.out, "Output JSON (default stdout)");
    auto* c_tol_opt = cmp->add_option("--assert-tol", c_tol, "Fail when the sup difference exceeds this");

    AssumeArgs aa;
    auto* chk = app.add_subcommand("check-assumptions", "Sampled bounds and Lipschitz diagnostics (JSON)");
    chk->add_option("--scenario", aa.scenario, "Scenario file")->required();
    chk->add_option("--samples", aa.samples, "Sample count");
    chk->add_option("--seed", aa.seed, "Sampling seed");
    chk->add_option("--lo", aa.lo, "Lower box corner (default: grid box)");
    chk->add_option("--hi", aa.hi, "Upper box corner (default: grid box)");
    chk->add_option("--out", aa.out, "Output JSON (default stdout)");

    std::vector<const char*> cargv;
    for (const auto& s : argv) cargv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    if (*mc_t_opt) ma.t = mc_t;
    if (*mc_seed_opt) ma.seed = mc_seed;
    if (*tc_n_opt) ta.n = tc_n;
    if (*tc_dt_opt) ta.dt = tc_dt;
    if (*tc_seed_opt) ta.seed = tc_seed;
    if (*tc_max_opt) ta.assert_max = tc_max;
    if (*o_T_opt) oa.horizon = o_T;
    if (*c_T_opt) ca.horizon = c_T;
    if (*c_tol_opt) ca.assert_tol = c_tol;

    Context ctx{out, err, {}, 0, 0};
    const auto started = Clock::now();
    const std::string started_utc = utc_now();
    int code = kOk;
    try {
        if (threads >= 0) {
            set_thread_count(threads);
        } else {
            configure_threads_from_env();
        }
        if (*solve) code = do_solve(sa, ctx);
        if (*mc) code = do_mc(ma, ctx);
        if (*reg) code = do_regularity(ra, ctx);
        if (*tc) code = do_timechange(ta, ctx);
        if (*orc) code = do_oracle(oa, ctx);
        if (*cmp) code = do_compare(ca, ctx);
        if (*chk) code = do_assumptions(aa, ctx);
        if (!manifest.empty()) {
            RunManifest m;
            m.scenario_hash = ctx.hash;
            m.tool_version = HJBLAB_VERSION;
            m.seed = ctx.seed;
            m.started = started_utc;
            m.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
            m.stages = ctx.stages.list;
            write_text(manifest, m.to_json(), out);
        }
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return code;
}

}  // namespace hjblab::cli
