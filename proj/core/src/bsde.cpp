#include "hjblab/bsde.hpp"
#include "bsde_internal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "hjblab/error.hpp"
#include "hjblab/parallel.hpp"
#include "text_format.hpp"

namespace hjblab {

PenaltyLadder::PenaltyLadder(std::vector<double> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw InputError("penalty ladder must not be empty");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        if (!(levels_[i] >= 1.0) || !std::isfinite(levels_[i])) throw InputError("penalty levels must be >= 1");
        if (i > 0 && !(levels_[i] > levels_[i - 1])) throw InputError("penalty levels must be strictly increasing");
    }
}

PenaltyLadder PenaltyLadder::geometric(double first, std::size_t count) {
    std::vector<double> v;
    double n = first;
    for (std::size_t i = 0; i < count; ++i, n *= 2.0) v.push_back(n);
    return PenaltyLadder(std::move(v));
}

namespace detail {

BsdeSolution bsde_backward(const PathBundle& bundle, const ControlProblem& prob, double n, ObstacleSide side,
                      const RegressionBasis& basis) {
    if (bundle.state_dim != prob.state_dim() || bundle.noise_dim != prob.noise_dim()) {
        throw InputError("bundle dimensions do not match the problem");
    }
    const std::size_t P = bundle.n_paths;
    const std::size_t N = bundle.grid.steps();
    const std::size_t d = bundle.state_dim;
    const std::size_t m = bundle.noise_dim;
    const double dt = bundle.grid.dt();
    const bool penalized = side != ObstacleSide::None;

    BsdeSolution sol;
    sol.grid = bundle.grid;
    sol.n_paths = P;
    sol.noise_dim = m;
    sol.penalty = penalized ? n : 0.0;
    sol.side = side;
    sol.y.assign(P * (N + 1), 0.0);
    sol.z.assign(P * N * m, 0.0);
    sol.k.assign(P * (N + 1), 0.0);
    if (penalized) sol.phi.assign(P * (N + 1), 0.0);

    std::vector<double> zeta(P, 0.0);
    parallel_for(P, [&](std::size_t p) {
        const auto xT = bundle.state(p, N);
        const double v = prob.eval_terminal(xT);
        if (!std::isfinite(v)) throw NumericalError("non-finite terminal value on path " + std::to_string(p));
        sol.y[p * (N + 1) + N] = v;
        zeta[p] = v;
        if (penalized) sol.phi[p * (N + 1) + N] = prob.eval_obstacle(bundle.grid.node(N), xT);
    });

    std::vector<double> states(P * d), target(P), cond(P), zfit(P * m), tmp(P);
    std::size_t merged_nodes = 0;
    for (std::size_t step = N; step-- > 0;) {
        const double t = bundle.grid.node(step);
        for (std::size_t p = 0; p < P; ++p) {
            const auto xs = bundle.state(p, step);
            std::copy(xs.begin(), xs.end(), states.begin() + static_cast<std::ptrdiff_t>(p * d));
        }
        const Regressor reg(basis, states, P, d);
        if (reg.merged_cells() > 0) {
            sol.merged_cells += reg.merged_cells();
            ++merged_nodes;
        }
        for (std::size_t p = 0; p < P; ++p) target[p] = sol.y[p * (N + 1) + step + 1];
        reg.fit(target, cond);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t p = 0; p < P; ++p) tmp[p] = target[p] * bundle.increment(p, step)[j];
            std::vector<double> out(P);
            reg.fit(tmp, out);
            for (std::size_t p = 0; p < P; ++p) zfit[p * m + j] = out[p] / dt;
        }

        parallel_for(P, [&](std::size_t p) {
            const auto xs = bundle.state(p, step);
            const std::span<const double> zk(zfit.data() + p * m, m);
            std::copy(zk.begin(), zk.end(), sol.z.begin() + static_cast<std::ptrdiff_t>((p * N + step) * m));
            const double f = prob.eval_driver(t, xs, cond[p], zk, prob.control(bundle.control(p, step)));
            const double c = cond[p] + f * dt;
            double y = c;
            if (penalized) {
                const double phi = prob.eval_obstacle(t, xs);
                sol.phi[p * (N + 1) + step] = phi;
                const bool active = side == ObstacleSide::Lower ? c < phi : c > phi;
                if (active) y = (c + n * dt * phi) / (1.0 + n * dt);
            }
            if (!std::isfinite(y)) {
                throw NumericalError("non-finite Y on path " + std::to_string(p) + " at node " + std::to_string(step));
            }
            sol.y[p * (N + 1) + step] = y;
            zeta[p] += y - cond[p];
        });
    }

    double mean = 0.0;
    double y0 = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        mean += zeta[p];
        y0 += sol.y[p * (N + 1)];
    }
    mean /= static_cast<double>(P);
    sol.y0 = y0 / static_cast<double>(P);
    double var = 0.0;
    for (std::size_t p = 0; p < P; ++p) var += (zeta[p] - mean) * (zeta[p] - mean);
    var = P > 1 ? var / static_cast<double>(P - 1) : 0.0;
    sol.y0_half_width = 1.96 * std::sqrt(var / static_cast<double>(P));
    if (merged_nodes > 0) {
        sol.warnings.push_back("merged " + std::to_string(sol.merged_cells) + " sparse regression cells over " +
                               std::to_string(merged_nodes) + " time nodes");
    }
    return sol;
}

}  // namespace detail

BsdeSolution solve_bsde(const PathBundle& bundle, const ControlProblem& prob, const RegressionBasis& basis) {
    if (prob.side() != ObstacleSide::None) throw InputError("solve_bsde requires a problem without obstacle side");
    return detail::bsde_backward(bundle, prob, 0.0, ObstacleSide::None, basis);
}

BsdeSolution solve_penalized(const PathBundle& bundle, const ControlProblem& prob, double n, ObstacleSide side,
                             const RegressionBasis& basis) {
    if (!prob.has_obstacle()) throw InputError("penalized solve requires an obstacle");
    if (side == ObstacleSide::None) throw InputError("penalized solve requires side lower or upper");
    if (!(n >= 1.0) || !std::isfinite(n)) throw InputError("penalty level must be >= 1");
    return detail::bsde_backward(bundle, prob, n, side, basis);
}

BsdeSolution recover_K(BsdeSolution sol, double n, ObstacleSide side) {
    const std::size_t N = sol.grid.steps();
    std::fill(sol.k.begin(), sol.k.end(), 0.0);
    if (side == ObstacleSide::None || sol.phi.empty()) return sol;
    if (sol.side != side || sol.penalty != n) {
        throw InputError("recover_K needs the penalty level and side used for the solve");
    }
    const double dt = sol.grid.dt();
    for (std::size_t p = 0; p < sol.n_paths; ++p) {
        double acc = 0.0;
        const std::size_t base = p * (N + 1);
        for (std::size_t j = 0; j < N; ++j) {
            const double gap = sol.y[base + j] - sol.phi[base + j];
            const double part = side == ObstacleSide::Lower ? std::max(-gap, 0.0) : std::max(gap, 0.0);
            acc += n * part * dt;
            sol.k[base + j + 1] = acc;
        }
    }
    return sol;
}

ValueTable value_fixed_control(const ControlProblem& prob, double t, std::span<const double> x,
                               const ControlPolicy& policy, const PenaltyLadder& ladder, const McSpec& mc) {
    const TimeGrid grid(t, prob.horizon(), mc.steps);
    const PathBundle bundle = simulate_paths(prob, policy, t, x, grid, mc.n_paths, mc.seed);
    ValueTable table;
    if (prob.side() == ObstacleSide::None || !prob.has_obstacle()) {
        const auto sol = detail::bsde_backward(bundle, prob, 0.0, ObstacleSide::None, mc.basis);
        table.rows.push_back({0.0, sol.y0, sol.y0_half_width});
    } else {
        for (double n : ladder.levels()) {
            const auto sol = solve_penalized(bundle, prob, n, prob.side(), mc.basis);
            table.rows.push_back({n, sol.y0, sol.y0_half_width});
        }
    }
    table.limit = table.rows.back().y0;
    table.limit_half_width = table.rows.back().half_width;
    return table;
}

ComparisonReport comparison_harness(const ControlProblem& base, const ComparisonData& a, const ComparisonData& b,
                                    const PathBundle& bundle, const RegressionBasis& basis, double n) {
    const ExprContext ctx{base.state_dim(), base.noise_dim(), base.control_dim(), {}};
    auto make = [&](const ComparisonData& cd) {
        ProblemData data = base.data();
        data.terminal = Expr::parse(cd.terminal, ctx);
        data.driver = Expr::parse(cd.driver, ctx);
        return ControlProblem(std::move(data));
    };
    const ControlProblem pa = make(a);
    const ControlProblem pb = make(b);

    const std::size_t N = bundle.grid.steps();
    const std::size_t P = bundle.n_paths;
    for (std::size_t p = 0; p < P; ++p) {
        const auto xT = bundle.state(p, N);
        if (pa.eval_terminal(xT) > pb.eval_terminal(xT) + 1e-12) {
            throw InputError("comparison precondition violated: Phi_A > Phi_B on path " + std::to_string(p));
        }
    }
    std::mt19937_64 rng(bundle.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<std::size_t> pick_path(0, P - 1), pick_node(0, N - 1);
    std::uniform_real_distribution<double> val(-5.0, 5.0);
    std::vector<double> z(base.noise_dim());
    for (int s = 0; s < 2000; ++s) {
        const std::size_t p = pick_path(rng);
        const std::size_t k = pick_node(rng);
        const double y = val(rng);
        for (auto& zj : z) zj = val(rng);
        const auto xs = bundle.state(p, k);
        const auto u = base.control(bundle.control(p, k));
        const double t = bundle.grid.node(k);
        if (pa.eval_driver(t, xs, y, z, u) > pb.eval_driver(t, xs, y, z, u) + 1e-12) {
            throw InputError("comparison precondition violated: f_A > f_B at path " + std::to_string(p) +
                             ", node " + std::to_string(k));
        }
    }

    const bool pen = base.has_obstacle() && base.side() != ObstacleSide::None;
    if (pen && !(n >= 1.0)) throw InputError("comparison with an obstacle needs a penalty level >= 1");
    const auto sa = pen ? solve_penalized(bundle, pa, n, base.side(), basis) : solve_bsde(bundle, pa, basis);
    const auto sb = pen ? solve_penalized(bundle, pb, n, base.side(), basis) : solve_bsde(bundle, pb, basis);

    ComparisonReport r;
    const double wa = 2.0 * sa.y0_half_width;
    const double wb = 2.0 * sb.y0_half_width;
    double scale = 0.0;
    for (std::size_t i = 0; i < sa.y.size(); ++i) scale = std::max({scale, std::fabs(sa.y[i]), std::fabs(sb.y[i])});
    r.tau_reg = std::max(3.0 * std::sqrt(0.5 * (wa * wa + wb * wb)), 1e-12 * (1.0 + scale));
    r.points = sa.y.size();
    for (std::size_t i = 0; i < sa.y.size(); ++i) {
        const double diff = sa.y[i] - sb.y[i];
        r.max_violation = std::max(r.max_violation, diff);
        if (diff > r.tau_reg) ++r.violations;
    }
    r.fraction = static_cast<double>(r.violations) / static_cast<double>(r.points);
    r.y0_a = sa.y0;
    r.y0_b = sb.y0;
    r.pass = r.max_violation <= r.tau_reg;
    return r;
}

void write_solution_csv(const BsdeSolution& sol, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << "path,step,node_time,y";
    for (std::size_t j = 0; j < sol.noise_dim; ++j) out << ",z" << j + 1;
    out << ",k\n";
    const std::size_t N = sol.grid.steps();
    for (std::size_t p = 0; p < sol.n_paths; ++p) {
        for (std::size_t k = 0; k <= N; ++k) {
            out << p << ',' << k << ',';
            out << detail::format_double(sol.grid.node(k));
            out << ',';
            out << detail::format_double(sol.Y(p, k));
            for (std::size_t j = 0; j < sol.noise_dim; ++j) {
                out << ',';
                if (k < N) out << detail::format_double(sol.Z(p, k)[j]);
            }
            out << ',';
            out << detail::format_double(sol.K(p, k));
            out << '\n';
        }
    }
    if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace hjblab
