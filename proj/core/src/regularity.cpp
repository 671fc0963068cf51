#include "hjblab/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numbers>

#include "hjblab/error.hpp"
#include "hjblab/parallel.hpp"

namespace hjblab {

namespace {

struct Best {
    double C = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> pts;  ///< (slice, node)

    void offer(double c, std::initializer_list<std::pair<std::size_t, std::size_t>> p) {
        if (c > C) {
            C = c;
            pts.assign(p);
        }
    }
};

Estimate to_estimate(const ValueField& f, const Best& b) {
    Estimate e;
    e.C = b.C;
    for (auto [s, node] : b.pts) {
        WitnessPoint w;
        w.t = f.time(s);
        w.x.resize(f.space.dims());
        f.space.coords(node, w.x);
        w.v = f.at(s, node);
        e.witness.push_back(std::move(w));
    }
    return e;
}

Best reduce(std::vector<Best>& parts) {
    Best out;
    for (auto& p : parts) {
        if (p.C > out.C) out = std::move(p);
    }
    return out;
}

double max_slice_gap(const ValueField& f) {
    double gap = 0.0;
    for (std::size_t s = 0; s + 1 < f.slices(); ++s) gap = std::max(gap, f.time(s + 1) - f.time(s));
    return gap;
}

/// Number of leading slices with t <= T - delta.
std::size_t slices_up_to(const ValueField& f, double delta) {
    const double limit = f.horizon - delta + 1e-12 * std::max(1.0, f.horizon);
    std::size_t n = 0;
    while (n < f.slices() && f.time(n) <= limit) ++n;
    return n;
}

std::vector<char> region_mask(const ValueField& f, const RegularityOptions& opts) {
    const SpaceGrid& g = f.space;
    std::vector<char> mask(g.size(), 0);
    std::vector<double> x(g.dims());
    for (std::size_t node = 0; node < g.size(); ++node) {
        bool ok = true;
        for (std::size_t i = 0; i < g.dims() && ok; ++i) {
            const std::size_t k = g.index_along(node, i);
            ok = k > 0 && k + 1 < g.nodes(i);
        }
        if (ok && opts.window) {
            g.coords(node, x);
            ok = opts.window->contains(x, 1e-9);
        }
        mask[node] = ok ? 1 : 0;
    }
    return mask;
}

void require_region(const ValueField& f, double delta, std::size_t s_in, const std::vector<char>& mask) {
    if (!(delta > max_slice_gap(f))) {
        throw InputError("delta must exceed the time step of the field");
    }
    if (s_in < 2 || std::none_of(mask.begin(), mask.end(), [](char c) { return c != 0; })) {
        throw InputError("empty estimation region for delta " + std::to_string(delta));
    }
}

double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

}  // namespace

Estimate lipschitz_constant(const ValueField& f, double delta, const RegularityOptions& opts) {
    const SpaceGrid& g = f.space;
    const auto mask = region_mask(f, opts);
    const std::size_t S = slices_up_to(f, delta);
    require_region(f, delta, S, mask);
    std::vector<Best> parts(S);
    parallel_for(S, [&](std::size_t s) {
        Best& b = parts[s];
        for (std::size_t node = 0; node < g.size(); ++node) {
            if (!mask[node]) continue;
            const double v = f.at(s, node);
            if (s + 1 < S) {
                b.offer(std::fabs(f.at(s + 1, node) - v) / (f.time(s + 1) - f.time(s)), {{s, node}, {s + 1, node}});
            }
            for (std::size_t i = 0; i < g.dims(); ++i) {
                if (g.index_along(node, i) + 1 >= g.nodes(i)) continue;
                const std::size_t nb = node + g.stride(i);
                if (!mask[nb]) continue;
                b.offer(std::fabs(f.at(s, nb) - v) / g.spacing(i), {{s, node}, {s, nb}});
            }
        }
    });
    return to_estimate(f, reduce(parts));
}

Estimate semiconcavity_constant(const ValueField& f, double delta, const RegularityOptions& opts) {
    const SpaceGrid& g = f.space;
    const std::size_t d = g.dims();
    const auto mask = region_mask(f, opts);
    const std::size_t S = slices_up_to(f, delta);
    require_region(f, delta, S, mask);

    auto cap = [&](double extent, double step) {
        const auto c = static_cast<std::size_t>(std::floor(opts.offset_fraction * extent / step + 1e-9));
        return std::clamp<std::size_t>(c, 1, std::max<std::size_t>(1, opts.max_offset_nodes));
    };
    const long long A = static_cast<long long>(cap(f.horizon, f.time(1) - f.time(0)));
    std::vector<long long> B(d);
    for (std::size_t i = 0; i < d; ++i) B[i] = static_cast<long long>(cap(g.hi(i) - g.lo(i), g.spacing(i)));

    // Offsets (a, b_1..b_d) modulo sign: a > 0, or a == 0 with the first nonzero b positive.
    std::vector<std::vector<long long>> offsets;
    std::vector<long long> cur(d + 1, 0);
    auto rec = [&](auto&& self, std::size_t k) -> void {
        if (k == d + 1) {
            bool canonical = false;
            for (long long c : cur) {
                if (c != 0) {
                    canonical = c > 0;
                    break;
                }
            }
            if (canonical) offsets.push_back(cur);
            return;
        }
        const long long lim = k == 0 ? A : B[k - 1];
        for (long long c = k == 0 ? 0 : -lim; c <= lim; ++c) {
            cur[k] = c;
            self(self, k + 1);
        }
    };
    rec(rec, 0);

    const double ttol = 1e-9 * std::max(1.0, f.horizon);
    std::vector<Best> parts(S);
    parallel_for(S, [&](std::size_t s) {
        Best& b = parts[s];
        std::vector<std::size_t> idx(d);
        for (std::size_t node = 0; node < g.size(); ++node) {
            if (!mask[node]) continue;
            g.multi(node, idx);
            const double vc = f.at(s, node);
            for (const auto& off : offsets) {
                const long long a = off[0];
                if (static_cast<long long>(s) - a < 0 || static_cast<long long>(s) + a >= static_cast<long long>(S)) {
                    continue;
                }
                const std::size_t sm = s - static_cast<std::size_t>(a);
                const std::size_t sp = s + static_cast<std::size_t>(a);
                const double ht = f.time(sp) - f.time(s);
                if (std::fabs(ht - (f.time(s) - f.time(sm))) > ttol) continue;
                long long shift = 0;
                double h2 = ht * ht;
                bool inside = true;
                for (std::size_t i = 0; i < d && inside; ++i) {
                    const long long k = static_cast<long long>(idx[i]);
                    const long long bi = off[i + 1];
                    if (k - bi < 0 || k + bi < 0 || k + bi >= static_cast<long long>(g.nodes(i)) ||
                        k - bi >= static_cast<long long>(g.nodes(i))) {
                        inside = false;
                    }
                    shift += bi * static_cast<long long>(g.stride(i));
                    h2 += static_cast<double>(bi * bi) * g.spacing(i) * g.spacing(i);
                }
                if (!inside) continue;
                const auto np = static_cast<std::size_t>(static_cast<long long>(node) + shift);
                const auto nm = static_cast<std::size_t>(static_cast<long long>(node) - shift);
                if (!mask[np] || !mask[nm]) continue;
                const double q = (0.5 * f.at(sm, nm) + 0.5 * f.at(sp, np) - vc) / h2;
                b.offer(q, {{sm, nm}, {s, node}, {sp, np}});
            }
        }
    });
    return to_estimate(f, reduce(parts));
}

Estimate holder_time_constant(const ValueField& f, std::size_t node, double delta) {
    if (node >= f.space.size()) throw InputError("holder column out of range");
    const std::size_t S = delta > 0.0 ? slices_up_to(f, delta) : f.slices();
    std::vector<double> x(f.space.dims());
    f.space.coords(node, x);
    const double w = 1.0 + norm(x);
    std::vector<Best> parts(S);
    parallel_for(S, [&](std::size_t s) {
        for (std::size_t r = s + 1; r < S; ++r) {
            const double q = std::fabs(f.at(r, node) - f.at(s, node)) / (w * std::sqrt(f.time(r) - f.time(s)));
            parts[s].offer(q, {{s, node}, {r, node}});
        }
    });
    return to_estimate(f, reduce(parts));
}

ValueField subsample(const ValueField& f) {
    const SpaceGrid& g = f.space;
    const std::size_t d = g.dims();
    std::vector<std::size_t> keep;
    for (std::size_t s = 0; s < f.slices(); s += 2) keep.push_back(s);
    if (keep.back() + 1 != f.slices()) keep.push_back(f.slices() - 1);

    Box box = g.box();
    std::vector<std::size_t> nodes(d);
    for (std::size_t i = 0; i < d; ++i) {
        nodes[i] = (g.nodes(i) - 1) / 2 + 1;
        if (nodes[i] < 2) throw InputError("grid too coarse to subsample");
        box.hi[i] = g.coord(i, 2 * (nodes[i] - 1));
    }
    ValueField out;
    out.space = SpaceGrid(box, nodes);
    out.horizon = f.horizon;
    out.nt = f.nt;
    out.scheme = f.scheme;
    out.variant = f.variant;
    out.side = f.side;
    out.penalty = f.penalty;
    out.problem_hash = f.problem_hash;
    const std::size_t N = out.space.size();
    out.values.resize(keep.size() * N);
    out.controls.resize(keep.size() * N);
    std::vector<std::size_t> idx(d);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.time_index.push_back(f.time_index[keep[k]]);
        for (std::size_t node = 0; node < N; ++node) {
            out.space.multi(node, idx);
            for (auto& i : idx) i *= 2;
            const std::size_t src = g.flat(idx);
            out.values[k * N + node] = f.at(keep[k], src);
            out.controls[k * N + node] = f.controls[keep[k] * g.size() + src];
        }
    }
    return out;
}

namespace {

Estimate holder_region(const ValueField& f, double delta, const RegularityOptions& opts) {
    const auto mask = region_mask(f, opts);
    Estimate best;
    for (std::size_t node = 0; node < f.space.size(); ++node) {
        if (!mask[node]) continue;
        Estimate e = holder_time_constant(f, node, delta);
        if (e.C > best.C) best = std::move(e);
    }
    return best;
}

bool stable(double full, double half) { return std::fabs(full - half) <= 0.25 * std::max(full, half); }

}  // namespace

RegularityReport regularity_report(const ValueField& field, const std::vector<double>& deltas,
                                   const RegularityOptions& opts) {
    if (deltas.empty()) throw InputError("regularity report needs at least one delta");
    const double gap = max_slice_gap(field);
    for (double d : deltas) {
        if (!(d > 2.0 * gap)) throw InputError("each delta must exceed twice the time step of the field");
    }
    const ValueField half = subsample(field);
    RegularityReport r;
    for (double d : deltas) {
        DeltaReport dr;
        dr.delta = d;
        dr.lipschitz = lipschitz_constant(field, d, opts);
        dr.semiconcavity = semiconcavity_constant(field, d, opts);
        dr.holder = holder_region(field, d, opts);
        dr.lipschitz_half = lipschitz_constant(half, d, opts);
        dr.semiconcavity_half = semiconcavity_constant(half, d, opts);
        dr.holder_half = holder_region(half, d, opts);
        dr.lipschitz_stable = stable(dr.lipschitz.C, dr.lipschitz_half.C);
        dr.semiconcave_stable = stable(dr.semiconcavity.C, dr.semiconcavity_half.C);
        dr.semiconcave_diverging = dr.semiconcavity.C > 0.0 && dr.semiconcavity.C >= 1.6 * dr.semiconcavity_half.C;
        r.per_delta.push_back(std::move(dr));
    }
    return r;
}

namespace {

nlohmann::ordered_json estimate_json(const Estimate& e) {
    nlohmann::ordered_json w = nlohmann::ordered_json::array();
    for (const auto& p : e.witness) w.push_back({{"t", p.t}, {"x", p.x}, {"v", p.v}});
    return {{"C", e.C}, {"witness", w}};
}

}  // namespace

std::string report_to_json(const RegularityReport& report) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& d : report.per_delta) {
        nlohmann::ordered_json j;
        j["delta"] = d.delta;
        j["lipschitz"] = estimate_json(d.lipschitz);
        j["semiconcavity"] = estimate_json(d.semiconcavity);
        j["holder"] = estimate_json(d.holder);
        j["refinement"] = {{"lipschitz", estimate_json(d.lipschitz_half)},
                           {"semiconcavity", estimate_json(d.semiconcavity_half)},
                           {"holder", estimate_json(d.holder_half)}};
        j["verdicts"] = {{"lipschitz_stable", d.lipschitz_stable},
                         {"semiconcave_stable", d.semiconcave_stable},
                         {"semiconcave_diverging", d.semiconcave_diverging}};
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

OracleId OracleId::parse(std::string_view name, std::optional<double> horizon) {
    OracleId id;
    if (name == "ex2_1") {
        id = {Kind::Ex2_1, 1.0};
    } else if (name == "ex3_1") {
        id = {Kind::Ex3_1, 2.0};
    } else if (name == "smooth_upper") {
        id = {Kind::SmoothUpper, 1.0};
    } else if (name == "reach_control") {
        id = {Kind::ReachControl, 1.0};
    } else {
        throw InputError("unknown oracle '" + std::string(name) +
                         "' (expected ex2_1, ex3_1, smooth_upper or reach_control)");
    }
    if (horizon) id.horizon = *horizon;
    if (!(id.horizon > 0.0)) throw InputError("oracle horizon must be positive");
    return id;
}

std::string OracleId::name() const {
    switch (kind) {
        case Kind::Ex2_1: return "ex2_1";
        case Kind::Ex3_1: return "ex3_1";
        case Kind::SmoothUpper: return "smooth_upper";
        case Kind::ReachControl: return "reach_control";
    }
    return "?";
}

double oracle_value(const OracleId& id, double t, std::span<const double> x) {
    if (!(id.horizon > 0.0)) throw InputError("oracle horizon must be positive");
    if (t > id.horizon) throw InputError("oracle time exceeds the horizon");
    if (x.empty()) throw InputError("oracle needs a state");
    const double tau = id.horizon - t;
    const double x1 = x[0];
    switch (id.kind) {
        case OracleId::Kind::Ex2_1: {
            if (tau == 0.0) return std::fabs(x1);
            const double s = std::sqrt(tau);
            const double z = x1 / s;
            return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * z * z) + x1 * std::erf(z / std::numbers::sqrt2);
        }
        case OracleId::Kind::Ex3_1: return std::max(1.0 - tau, 0.0);
        case OracleId::Kind::SmoothUpper: return std::exp(-tau) * std::cos(x1);
        case OracleId::Kind::ReachControl: return std::min(std::max(std::fabs(x1) - tau, 0.0), 2.0);
    }
    return 0.0;
}

}  // namespace hjblab
