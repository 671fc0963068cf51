#include "hjblab/forward_sim.hpp"

#include <cmath>
#include <fstream>

#include "hjblab/error.hpp"
#include "hjblab/parallel.hpp"
#include "text_format.hpp"
#include "hjblab/rng.hpp"

namespace hjblab {

TimeGrid::TimeGrid(double start, double end, std::size_t steps) : start_(start), end_(end), steps_(steps) {
    if (!(start < end) || !std::isfinite(start) || !std::isfinite(end)) {
        throw InputError("time grid needs start < end");
    }
    if (steps < 1) throw InputError("time grid needs at least one step");
    dt_ = (end - start) / static_cast<double>(steps);
}

double TimeGrid::node(std::size_t k) const {
    if (k >= steps_) return end_;
    return start_ + (end_ - start_) * static_cast<double>(k) / static_cast<double>(steps_);
}

ControlPolicy ControlPolicy::constant(std::size_t index) { return ControlPolicy(Constant{index}); }

ControlPolicy ControlPolicy::feedback(FeedbackTable table) {
    if (table.index.size() != table.time_nodes * table.cells.size()) {
        throw InputError("feedback table size does not match its grid");
    }
    return ControlPolicy(std::move(table));
}

ControlPolicy ControlPolicy::sequence(std::size_t n_paths, std::size_t steps, std::vector<std::uint32_t> indices) {
    if (indices.size() != n_paths * steps) throw InputError("control sequence must hold n_paths * steps entries");
    return ControlPolicy(Sequence{n_paths, steps, std::move(indices)});
}

std::size_t ControlPolicy::control_at(std::size_t path, std::size_t node, std::span<const double> x) const {
    if (const auto* c = std::get_if<Constant>(&rule_)) return c->index;
    if (const auto* f = std::get_if<FeedbackTable>(&rule_)) {
        const std::size_t k = node < f->time_nodes ? node : f->time_nodes - 1;
        return f->index[k * f->cells.size() + f->cells.nearest(x)];
    }
    const auto& s = std::get<Sequence>(rule_);
    return s.indices[path * s.steps + node];
}

void ControlPolicy::validate(std::size_t n_controls, std::size_t n_paths, std::size_t steps) const {
    if (const auto* c = std::get_if<Constant>(&rule_)) {
        if (c->index >= n_controls) throw InputError("constant policy index out of range");
        return;
    }
    if (const auto* f = std::get_if<FeedbackTable>(&rule_)) {
        if (f->time_nodes == 0) throw InputError("feedback table has no time nodes");
        for (auto i : f->index) {
            if (i >= n_controls) throw InputError("feedback table references a control index out of range");
        }
        return;
    }
    const auto& s = std::get<Sequence>(rule_);
    if (s.n_paths != n_paths || s.steps != steps) throw InputError("control sequence shape does not match the simulation");
    for (auto i : s.indices) {
        if (i >= n_controls) throw InputError("control sequence references an index out of range");
    }
}

std::string ControlPolicy::describe() const {
    if (const auto* c = std::get_if<Constant>(&rule_)) return "constant:" + std::to_string(c->index);
    if (std::holds_alternative<FeedbackTable>(rule_)) return "feedback";
    return "sequence";
}

PathBundle simulate_paths(const ControlProblem& prob, const ControlPolicy& policy, double t0,
                          std::span<const double> x0, const TimeGrid& grid, std::size_t n_paths,
                          std::uint64_t seed) {
    const std::size_t d = prob.state_dim();
    const std::size_t m = prob.noise_dim();
    if (x0.size() != d) throw InputError("initial state has the wrong dimension");
    if (n_paths < 1) throw InputError("at least one path is required");
    const double scale = std::max(1.0, std::fabs(prob.horizon()));
    if (std::fabs(grid.start() - t0) > 1e-12 * scale || std::fabs(grid.end() - prob.horizon()) > 1e-12 * scale) {
        throw InputError("time grid must span [t0, T]");
    }
    policy.validate(prob.num_controls(), n_paths, grid.steps());

    const std::size_t steps = grid.steps();
    const double dt = grid.dt();
    PathBundle b{grid, n_paths, d, m, seed, {}, {}, {}};
    b.x.resize(n_paths * (steps + 1) * d);
    b.dw.resize(n_paths * steps * m);
    b.u.resize(n_paths * steps);

    parallel_for(n_paths, [&](std::size_t p) {
        std::vector<double> drift(d), sigma(d * m);
        double* xs = b.x.data() + p * (steps + 1) * d;
        std::copy(x0.begin(), x0.end(), xs);
        for (std::size_t k = 0; k < steps; ++k) {
            const std::span<const double> xk(xs + k * d, d);
            double* xn = xs + (k + 1) * d;
            double* dw = b.dw.data() + (p * steps + k) * m;
            const std::size_t c = policy.control_at(p, k, xk);
            b.u[p * steps + k] = static_cast<std::uint32_t>(c);
            const auto u = prob.control(c);
            const double t = grid.node(k);
            prob.eval_drift(t, xk, u, drift);
            prob.eval_diffusion(t, xk, u, sigma);
            for (std::size_t j = 0; j < m; ++j) {
                dw[j] = brownian_increment(seed, p, static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(j), dt);
            }
            for (std::size_t i = 0; i < d; ++i) {
                double v = xk[i] + drift[i] * dt;
                for (std::size_t j = 0; j < m; ++j) v += sigma[i * m + j] * dw[j];
                if (!std::isfinite(v)) {
                    throw NumericalError("non-finite state on path " + std::to_string(p) + " at step " +
                                         std::to_string(k + 1));
                }
                xn[i] = v;
            }
        }
    });
    return b;
}

void write_bundle_csv(const PathBundle& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << "path,step,node_time";
    for (std::size_t i = 0; i < b.state_dim; ++i) out << ",x" << i + 1;
    for (std::size_t j = 0; j < b.noise_dim; ++j) out << ",dw" << j + 1;
    out << ",u_index\n";
    const std::size_t steps = b.grid.steps();
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        for (std::size_t k = 0; k <= steps; ++k) {
            out << p << ',' << k << ',';
            out << detail::format_double(b.grid.node(k));
            for (double v : b.state(p, k)) {
                out << ',';
                out << detail::format_double(v);
            }
            if (k < steps) {
                for (double v : b.increment(p, k)) {
                    out << ',';
                    out << detail::format_double(v);
                }
                out << ',' << b.control(p, k) << '\n';
            } else {
                for (std::size_t j = 0; j < b.noise_dim; ++j) out << ',';
                out << ",\n";
            }
        }
    }
    if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace hjblab
