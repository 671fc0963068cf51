#include "hjblab/problem.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <random>

#include "hjblab/error.hpp"
#include "hjblab/hash.hpp"

namespace hjblab {

namespace {

std::string fmt(double v) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

void require_vars(const Expr& e, const std::string& name, bool allow_t, bool allow_y, bool allow_z,
                  bool allow_u) {
    auto reject = [&](VarKind k, const char* var) {
        if (e.depends_on(k)) {
            throw InputError("coefficient '" + name + "' must not depend on " + var);
        }
    };
    if (!allow_t) reject(VarKind::Time, "t");
    if (!allow_y) reject(VarKind::Value, "y");
    if (!allow_z) reject(VarKind::Gradient, "z");
    if (!allow_u) reject(VarKind::Control, "u");
}

void require_extent(const Expr& e, const std::string& name, const ProblemData& d) {
    const std::size_t k = d.controls.front().size();
    if (e.index_extent(VarKind::State) > d.state_dim ||
        e.index_extent(VarKind::Gradient) > d.noise_dim ||
        e.index_extent(VarKind::Control) > k) {
        throw InputError("coefficient '" + name + "' references a variable beyond the problem dimensions");
    }
}

std::vector<std::vector<double>> terminal_samples(std::size_t d) {
    std::vector<std::vector<double>> pts;
    constexpr double R = 5.0;
    if (d == 1) {
        for (int i = 0; i <= 200; ++i) pts.push_back({-R + 2.0 * R * i / 200.0});
        return pts;
    }
    std::mt19937_64 gen(0x5eed);
    std::uniform_real_distribution<double> dist(-R, R);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> x(d);
        for (auto& v : x) v = dist(gen);
        pts.push_back(std::move(x));
    }
    return pts;
}

}  // namespace

std::string to_string(ObstacleSide side) {
    switch (side) {
        case ObstacleSide::None: return "none";
        case ObstacleSide::Lower: return "lower";
        case ObstacleSide::Upper: return "upper";
    }
    return "none";
}

ObstacleSide parse_obstacle_side(std::string_view text) {
    if (text == "none") return ObstacleSide::None;
    if (text == "lower") return ObstacleSide::Lower;
    if (text == "upper") return ObstacleSide::Upper;
    throw InputError("unknown obstacle side '" + std::string(text) + "' (expected none, lower or upper)");
}

bool Box::contains(std::span<const double> x, double tol) const {
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    }
    return true;
}

ControlProblem::ControlProblem(ProblemData data) : data_(std::move(data)) {
    auto& d = data_;
    if (!(d.horizon > 0.0) || !std::isfinite(d.horizon)) throw InputError("field 'T' must be positive and finite");
    if (d.state_dim < 1) throw InputError("field 'd' must be at least 1");
    if (d.noise_dim < 1) throw InputError("field 'm' must be at least 1");
    if (d.controls.empty()) throw InputError("field 'controls' must be nonempty");
    const std::size_t k = d.controls.front().size();
    for (const auto& u : d.controls) {
        if (u.size() != k) throw InputError("field 'controls' mixes points of different dimension");
        for (double v : u) {
            if (!std::isfinite(v)) throw InputError("field 'controls' contains a non-finite value");
        }
    }
    if (d.drift.size() != d.state_dim) {
        throw InputError("field 'b' must have " + std::to_string(d.state_dim) + " component(s)");
    }
    if (d.diffusion.size() != d.state_dim * d.noise_dim) {
        throw InputError("field 'sigma' must be a " + std::to_string(d.state_dim) + "x" +
                         std::to_string(d.noise_dim) + " matrix");
    }
    for (std::size_t i = 0; i < d.drift.size(); ++i) {
        const std::string name = "b" + std::to_string(i + 1);
        require_vars(d.drift[i], name, true, false, false, true);
        require_extent(d.drift[i], name, d);
    }
    for (std::size_t i = 0; i < d.diffusion.size(); ++i) {
        const std::string name =
            "sigma" + std::to_string(i / d.noise_dim + 1) + std::to_string(i % d.noise_dim + 1);
        require_vars(d.diffusion[i], name, true, false, false, true);
        require_extent(d.diffusion[i], name, d);
    }
    require_vars(d.driver, "f", true, true, true, true);
    require_extent(d.driver, "f", d);
    require_vars(d.terminal, "Phi", false, false, false, false);
    require_extent(d.terminal, "Phi", d);
    if (d.obstacle) {
        require_vars(*d.obstacle, "phi", true, false, false, false);
        require_extent(*d.obstacle, "phi", d);
    }
    if (d.side != ObstacleSide::None) {
        if (!d.obstacle) throw InputError("field 'phi' is required when the obstacle side is " + to_string(d.side));
        for (const auto& x : terminal_samples(d.state_dim)) {
            const double phi_T = eval_obstacle(d.horizon, x);
            const double payoff = eval_terminal(x);
            const bool ok = d.side == ObstacleSide::Lower ? payoff >= phi_T : payoff <= phi_T;
            if (!ok) {
                throw InputError(std::string("field 'Phi' violates ") +
                                 (d.side == ObstacleSide::Lower ? "Phi(x) >= phi(T,x)" : "Phi(x) <= phi(T,x)") +
                                 " at x1=" + fmt(x[0]));
            }
        }
    }
    drift_constant_ = std::all_of(d.drift.begin(), d.drift.end(), [](const Expr& e) { return e.is_constant(); });
    diffusion_constant_ =
        std::all_of(d.diffusion.begin(), d.diffusion.end(), [](const Expr& e) { return e.is_constant(); });
}

ControlProblem ControlProblem::from_spec(const ProblemSpec& spec) {
    ExprContext ctx;
    ctx.state_dim = spec.state_dim;
    ctx.noise_dim = spec.noise_dim;
    ctx.control_dim = spec.controls.empty() ? 0 : spec.controls.front().size();
    ctx.constants = spec.constants;

    auto parse = [&](const std::string& text, const std::string& field) {
        try {
            return Expr::parse(text, ctx);
        } catch (const ParseError& e) {
            throw ParseError("field '" + field + "': " + e.what(), e.offset());
        }
    };

    ProblemData data;
    data.state_dim = spec.state_dim;
    data.noise_dim = spec.noise_dim;
    data.horizon = spec.horizon;
    data.controls = spec.controls;
    data.side = spec.side;
    if (spec.drift.size() != spec.state_dim) {
        throw InputError("field 'b' must have " + std::to_string(spec.state_dim) + " component(s)");
    }
    if (spec.diffusion.size() != spec.state_dim * spec.noise_dim) {
        throw InputError("field 'sigma' must be a " + std::to_string(spec.state_dim) + "x" +
                         std::to_string(spec.noise_dim) + " matrix");
    }
    for (const auto& s : spec.drift) data.drift.push_back(parse(s, "b"));
    for (const auto& s : spec.diffusion) data.diffusion.push_back(parse(s, "sigma"));
    data.driver = parse(spec.driver, "f");
    data.terminal = parse(spec.terminal, "Phi");
    if (spec.obstacle != "none" && !spec.obstacle.empty()) data.obstacle = parse(spec.obstacle, "phi");
    return ControlProblem(std::move(data));
}

void ControlProblem::eval_drift(double t, std::span<const double> x, std::span<const double> u,
                                std::span<double> out) const {
    const EvalPoint p{t, x, 0.0, {}, u};
    for (std::size_t i = 0; i < data_.drift.size(); ++i) out[i] = data_.drift[i].eval(p);
}

void ControlProblem::eval_diffusion(double t, std::span<const double> x, std::span<const double> u,
                                    std::span<double> out) const {
    const EvalPoint p{t, x, 0.0, {}, u};
    for (std::size_t i = 0; i < data_.diffusion.size(); ++i) out[i] = data_.diffusion[i].eval(p);
}

double ControlProblem::eval_driver(double t, std::span<const double> x, double y,
                                   std::span<const double> z, std::span<const double> u) const {
    return data_.driver.eval(EvalPoint{t, x, y, z, u});
}

double ControlProblem::eval_terminal(std::span<const double> x) const {
    return data_.terminal.eval(EvalPoint{0.0, x, 0.0, {}, {}});
}

double ControlProblem::eval_obstacle(double t, std::span<const double> x) const {
    if (!data_.obstacle) throw InputError("problem has no obstacle");
    return data_.obstacle->eval(EvalPoint{t, x, 0.0, {}, {}});
}

bool ControlProblem::coefficients_time_independent() const {
    auto no_t = [](const Expr& e) { return !e.depends_on(VarKind::Time); };
    return std::all_of(data_.drift.begin(), data_.drift.end(), no_t) &&
           std::all_of(data_.diffusion.begin(), data_.diffusion.end(), no_t) && no_t(data_.driver) &&
           (!data_.obstacle || no_t(*data_.obstacle));
}

std::string ControlProblem::canonical_text() const {
    std::string s;
    s += "d=" + std::to_string(data_.state_dim) + "\n";
    s += "m=" + std::to_string(data_.noise_dim) + "\n";
    s += "T=" + fmt(data_.horizon) + "\n";
    for (std::size_t i = 0; i < data_.drift.size(); ++i) {
        s += "b" + std::to_string(i + 1) + "=" + data_.drift[i].to_string() + "\n";
    }
    for (std::size_t i = 0; i < data_.diffusion.size(); ++i) {
        s += "sigma" + std::to_string(i / data_.noise_dim + 1) + std::to_string(i % data_.noise_dim + 1) + "=" +
             data_.diffusion[i].to_string() + "\n";
    }
    s += "f=" + data_.driver.to_string() + "\n";
    s += "Phi=" + data_.terminal.to_string() + "\n";
    s += "phi=" + (data_.obstacle ? data_.obstacle->to_string() : std::string("none")) + "\n";
    s += "side=" + to_string(data_.side) + "\n";
    s += "controls=";
    for (const auto& u : data_.controls) {
        s += '[';
        for (std::size_t j = 0; j < u.size(); ++j) {
            if (j) s += ',';
            s += fmt(u[j]);
        }
        s += ']';
    }
    s += "\n";
    return s;
}

std::uint64_t ControlProblem::hash() const { return fnv1a64(canonical_text()); }

double hamiltonian(const ControlProblem& prob, const HamiltonianInput& in) {
    const std::size_t d = prob.state_dim();
    const std::size_t m = prob.noise_dim();
    if (in.x.size() != d || in.p.size() != d || in.A.size() != d * d) {
        throw InputError("hamiltonian input dimensions do not match the problem");
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            if (std::fabs(in.A[i * d + j] - in.A[j * d + i]) > 1e-12) {
                throw InputError("hamiltonian input matrix A is not symmetric");
            }
        }
    }
    std::vector<double> b(d), sigma(d * m), z(m, 0.0);
    prob.eval_drift(in.t, in.x, in.u, b);
    prob.eval_diffusion(in.t, in.x, in.u, sigma);

    // 1/2 tr(sigma sigma^T A) = 1/2 sum_{i,j} (sigma sigma^T)_{ij} A_{ji}
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double a = 0.0;
            for (std::size_t r = 0; r < m; ++r) a += sigma[i * m + r] * sigma[j * m + r];
            trace += a * in.A[j * d + i];
        }
    }
    double drift = 0.0;
    for (std::size_t i = 0; i < d; ++i) drift += b[i] * in.p[i];
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t i = 0; i < d; ++i) z[r] += in.p[i] * sigma[i * m + r];
    }
    return 0.5 * trace + drift + prob.eval_driver(in.t, in.x, in.y, z, in.u);
}

DriverInf hjb_driver_inf(const ControlProblem& prob, double t, std::span<const double> x, double y,
                         std::span<const double> p, std::span<const double> A) {
    DriverInf best;
    for (std::size_t c = 0; c < prob.num_controls(); ++c) {
        const double h = hamiltonian(prob, HamiltonianInput{t, x, y, p, A, prob.control(c)});
        if (c == 0 || h < best.value) best = DriverInf{h, c};
    }
    return best;
}

AssumptionReport check_assumptions(const ControlProblem& prob, std::size_t samples, const Box& box,
                                   std::uint64_t seed) {
    const std::size_t d = prob.state_dim();
    const std::size_t m = prob.noise_dim();
    if (box.dims() != d) throw InputError("assumption box dimension does not match the problem");
    samples = std::max<std::size_t>(samples, 1);
    const double T = prob.horizon();
    const auto& data = prob.data();

    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, prob.num_controls() - 1);

    struct Sample {
        double t;
        std::vector<double> x;
        double y;
        std::vector<double> z;
        std::size_t u;
    };
    auto draw = [&](double scale) {
        Sample s{T * unit(gen), std::vector<double>(d), 2.0 * unit(gen) - 1.0, std::vector<double>(m), pick(gen)};
        for (std::size_t i = 0; i < d; ++i) {
            const double c = 0.5 * (box.lo[i] + box.hi[i]);
            const double h = 0.5 * (box.hi[i] - box.lo[i]) * scale;
            s.x[i] = c - h + 2.0 * h * unit(gen);
        }
        for (auto& v : s.z) v = 2.0 * unit(gen) - 1.0;
        return s;
    };
    // Box corners are always included so sup-norms of monotone growth are attained.
    auto corners = [&](double scale) {
        std::vector<Sample> out;
        const std::size_t n = std::size_t{1} << std::min<std::size_t>(d, 10);
        for (std::size_t mask = 0; mask < n; ++mask) {
            for (double t : {0.0, T}) {
                Sample s{t, std::vector<double>(d), 0.0, std::vector<double>(m, 0.0), 0};
                for (std::size_t i = 0; i < d; ++i) {
                    const double c = 0.5 * (box.lo[i] + box.hi[i]);
                    const double h = 0.5 * (box.hi[i] - box.lo[i]) * scale;
                    s.x[i] = (mask >> i) & 1 ? c + h : c - h;
                }
                out.push_back(std::move(s));
            }
        }
        return out;
    };

    struct Coef {
        std::string name;
        const Expr* expr;
    };
    std::vector<Coef> coefs;
    for (std::size_t i = 0; i < d; ++i) coefs.push_back({"b" + std::to_string(i + 1), &data.drift[i]});
    for (std::size_t i = 0; i < d * m; ++i) {
        coefs.push_back({"sigma" + std::to_string(i / m + 1) + std::to_string(i % m + 1), &data.diffusion[i]});
    }
    coefs.push_back({"f", &data.driver});
    coefs.push_back({"Phi", &data.terminal});
    if (data.obstacle) coefs.push_back({"phi", &*data.obstacle});

    AssumptionReport report;
    auto eval_at = [&](const Expr& e, const Sample& s) {
        return e.eval(EvalPoint{s.t, s.x, s.y, s.z, prob.control(s.u)});
    };

    std::vector<Sample> inner = corners(1.0), wide = corners(2.0);
    for (std::size_t i = 0; i < samples; ++i) inner.push_back(draw(1.0));
    for (std::size_t i = 0; i < samples; ++i) wide.push_back(draw(2.0));

    double diam = 0.0;
    for (std::size_t i = 0; i < d; ++i) diam = std::max(diam, box.hi[i] - box.lo[i]);
    const double eps = 1e-4 * std::max(diam, 1.0);

    for (const auto& c : coefs) {
        CoefficientDiagnostic diag;
        diag.name = c.name;
        try {
            for (const auto& s : inner) diag.sup = std::max(diag.sup, std::fabs(eval_at(*c.expr, s)));
            for (const auto& s : wide) diag.sup_wide = std::max(diag.sup_wide, std::fabs(eval_at(*c.expr, s)));
            // Difference quotients over (x, y, z) at fixed (t, u).
            for (std::size_t i = 0; i < samples; ++i) {
                Sample a = draw(1.0);
                Sample b = a;
                double dist2 = 0.0;
                for (auto& v : b.x) {
                    const double h = eps * (2.0 * unit(gen) - 1.0);
                    v += h;
                    dist2 += h * h;
                }
                {
                    const double h = eps * (2.0 * unit(gen) - 1.0);
                    b.y += h;
                    dist2 += h * h;
                }
                for (auto& v : b.z) {
                    const double h = eps * (2.0 * unit(gen) - 1.0);
                    v += h;
                    dist2 += h * h;
                }
                if (dist2 == 0.0) continue;
                const double q = std::fabs(eval_at(*c.expr, a) - eval_at(*c.expr, b)) / std::sqrt(dist2);
                diag.lipschitz = std::max(diag.lipschitz, q);
            }
        } catch (const EvalError& e) {
            report.warnings.push_back("coefficient '" + c.name + "' failed to evaluate: " + e.what());
        }
        diag.growth_suspected = diag.sup_wide > 1.5 * diag.sup + 1e-12;
        if (diag.growth_suspected) {
            report.warnings.push_back("coefficient '" + c.name + "' appears unbounded (sup " + fmt(diag.sup) +
                                      " on the box, " + fmt(diag.sup_wide) + " on the doubled box)");
        }
        report.coefficients.push_back(std::move(diag));
    }

    if (data.obstacle) {
        double lo = HUGE_VAL, hi = -HUGE_VAL;
        for (const auto& s : inner) {
            const double v = prob.eval_obstacle(s.t, s.x);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            if (prob.side() != ObstacleSide::None) {
                const double payoff = prob.eval_terminal(s.x);
                const double phi_T = prob.eval_obstacle(T, s.x);
                const bool ok = prob.side() == ObstacleSide::Lower ? payoff >= phi_T : payoff <= phi_T;
                report.terminal_obstacle_ordered = report.terminal_obstacle_ordered && ok;
            }
        }
        report.obstacle_constant = data.obstacle->is_constant() || lo == hi;
        if (!report.terminal_obstacle_ordered) {
            report.warnings.push_back("terminal value and obstacle are not ordered at T");
        }
    }
    return report;
}

}  // namespace hjblab
