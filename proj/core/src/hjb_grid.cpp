#include "hjblab/hjb_grid.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hjblab/error.hpp"
#include "hjblab/parallel.hpp"
#include "text_format.hpp"

namespace hjblab {

std::string to_string(Scheme s) { return s == Scheme::Explicit ? "explicit" : "implicit-sweep"; }

Scheme parse_scheme(std::string_view text) {
    if (text == "explicit") return Scheme::Explicit;
    if (text == "implicit-sweep" || text == "implicit") return Scheme::ImplicitSweep;
    throw InputError("unknown scheme '" + std::string(text) + "' (expected explicit or implicit-sweep)");
}

std::string ObstacleVariant::describe() const {
    if (kind == Kind::Projected) return "projected";
    return "penalized(" + detail::format_double(n) + ")";
}

double ValueField::time(std::size_t slice) const {
    const std::size_t k = time_index.at(slice);
    return k >= nt ? horizon : horizon * static_cast<double>(k) / static_cast<double>(nt);
}

namespace {

constexpr std::size_t kChunk = 256;

std::string describe_point(const SpaceGrid& g, std::size_t node) {
    std::ostringstream os;
    os << "x=(";
    for (std::size_t i = 0; i < g.dims(); ++i) {
        if (i) os << ", ";
        os << g.coord(i, g.index_along(node, i));
    }
    os << ")";
    return os.str();
}

/**
 * Discrete generator L_u V(node) = sum_s w_s (V[nbr_s] - V[node]) for every
 * node and control, plus sigma for the gradient argument of f.
 *
 * Slot layout per (node, control): 2i / 2i+1 are the minus / plus neighbours
 * along dimension i, then two corner slots per pair i < j.
 */
class Operator {
public:
    Operator(const ControlProblem& prob, const SpaceGrid& g)
        : prob_(prob), g_(g), d_(g.dims()), m_(prob.noise_dim()), nu_(prob.num_controls()),
          slots_(d_ * (d_ + 1)), cached_(prob.coefficients_time_independent()) {
        w_.resize(g_.size() * nu_ * slots_);
        nbr_.resize(g_.size() * nu_ * slots_);
        sigma_.resize(g_.size() * nu_ * d_ * m_);
    }

    void prepare(double t) {
        if (cached_ && ready_) return;
        const std::size_t chunks = (g_.size() + kChunk - 1) / kChunk;
        parallel_for(chunks, [&](std::size_t c) {
            std::vector<double> x(d_), b(d_), a(d_ * d_);
            std::vector<std::size_t> idx(d_);
            const std::size_t end = std::min(g_.size(), (c + 1) * kChunk);
            for (std::size_t node = c * kChunk; node < end; ++node) {
                g_.coords(node, x);
                g_.multi(node, idx);
                for (std::size_t u = 0; u < nu_; ++u) build(t, node, u, x, idx, b, a);
            }
        });
        ready_ = true;
    }

    std::size_t slots() const { return slots_; }
    std::span<const double> weights(std::size_t node, std::size_t u) const {
        return {w_.data() + (node * nu_ + u) * slots_, slots_};
    }
    std::span<const std::size_t> neighbours(std::size_t node, std::size_t u) const {
        return {nbr_.data() + (node * nu_ + u) * slots_, slots_};
    }
    std::span<const double> sigma(std::size_t node, std::size_t u) const {
        return {sigma_.data() + (node * nu_ + u) * d_ * m_, d_ * m_};
    }

    double apply(std::span<const double> v, std::size_t node, std::size_t u) const {
        const auto w = weights(node, u);
        const auto nb = neighbours(node, u);
        double s = 0.0;
        for (std::size_t k = 0; k < slots_; ++k) s += w[k] * (v[nb[k]] - v[node]);
        return s;
    }

    double total_weight(std::size_t node, std::size_t u) const {
        double s = 0.0;
        for (double w : weights(node, u)) s += w;
        return s;
    }

private:
    void build(double t, std::size_t node, std::size_t u, std::span<const double> x,
               std::span<const std::size_t> idx, std::vector<double>& b, std::vector<double>& a) {
        double* w = w_.data() + (node * nu_ + u) * slots_;
        std::size_t* nb = nbr_.data() + (node * nu_ + u) * slots_;
        const std::span<double> sig(sigma_.data() + (node * nu_ + u) * d_ * m_, d_ * m_);
        std::fill(w, w + slots_, 0.0);
        std::fill(nb, nb + slots_, node);

        const auto uc = prob_.control(u);
        prob_.eval_drift(t, x, uc, b);
        prob_.eval_diffusion(t, x, uc, sig);
        for (std::size_t i = 0; i < d_; ++i) {
            for (std::size_t j = 0; j < d_; ++j) {
                double s = 0.0;
                for (std::size_t r = 0; r < m_; ++r) s += sig[i * m_ + r] * sig[j * m_ + r];
                a[i * d_ + j] = 0.5 * s;
            }
        }

        auto lo_edge = [&](std::size_t i) { return idx[i] == 0; };
        auto hi_edge = [&](std::size_t i) { return idx[i] + 1 == g_.nodes(i); };
        auto interior = [&](std::size_t i) { return !lo_edge(i) && !hi_edge(i); };

        for (std::size_t i = 0; i < d_; ++i) {
            const double h = g_.spacing(i);
            const std::size_t st = g_.stride(i);
            if (!lo_edge(i)) nb[2 * i] = node - st;
            if (!hi_edge(i)) nb[2 * i + 1] = node + st;
            if (interior(i)) {
                w[2 * i] += a[i * d_ + i] / (h * h);
                w[2 * i + 1] += a[i * d_ + i] / (h * h);
            }
            if (b[i] > 0.0 && !hi_edge(i)) w[2 * i + 1] += b[i] / h;
            if (b[i] < 0.0 && !lo_edge(i)) w[2 * i] -= b[i] / h;
        }

        std::size_t q = 0;
        for (std::size_t i = 0; i < d_; ++i) {
            for (std::size_t j = i + 1; j < d_; ++j, ++q) {
                const double aij = a[i * d_ + j];
                if (aij == 0.0 || !interior(i) || !interior(j)) continue;
                const double c = std::fabs(aij) / (g_.spacing(i) * g_.spacing(j));
                const std::size_t si = g_.stride(i);
                const std::size_t sj = g_.stride(j);
                const std::size_t sa = 2 * d_ + 2 * q;
                if (aij > 0.0) {
                    nb[sa] = node + si + sj;
                    nb[sa + 1] = node - si - sj;
                } else {
                    nb[sa] = node + si - sj;
                    nb[sa + 1] = node - si + sj;
                }
                w[sa] += c;
                w[sa + 1] += c;
                w[2 * i] -= c;
                w[2 * i + 1] -= c;
                w[2 * j] -= c;
                w[2 * j + 1] -= c;
            }
        }

        for (std::size_t s = 0; s < slots_; ++s) {
            if (w[s] < 0.0) {
                double scale = 0.0;
                for (std::size_t k = 0; k < d_ * d_; ++k) scale = std::max(scale, std::fabs(a[k]));
                if (w[s] < -1e-12 * scale / (g_.spacing(0) * g_.spacing(0))) {
                    throw InputError("cross-diffusion stencil is not monotone at " + describe_point(g_, node) +
                                     ", control " + std::to_string(u) +
                                     ": |a_ij| exceeds the diagonal dominance bound");
                }
                w[s] = 0.0;
            }
            if (!std::isfinite(w[s])) {
                throw NumericalError("non-finite coefficient at " + describe_point(g_, node));
            }
        }
    }

    const ControlProblem& prob_;
    const SpaceGrid& g_;
    std::size_t d_;
    std::size_t m_;
    std::size_t nu_;
    std::size_t slots_;
    bool cached_;
    bool ready_ = false;
    std::vector<double> w_;
    std::vector<std::size_t> nbr_;
    std::vector<double> sigma_;
};

/// Central gradient, one-sided at the boundary.
void gradient(const SpaceGrid& g, std::span<const double> v, std::size_t node, std::span<double> p) {
    for (std::size_t i = 0; i < g.dims(); ++i) {
        const std::size_t k = g.index_along(node, i);
        const std::size_t st = g.stride(i);
        const double h = g.spacing(i);
        if (k == 0) {
            p[i] = (v[node + st] - v[node]) / h;
        } else if (k + 1 == g.nodes(i)) {
            p[i] = (v[node] - v[node - st]) / h;
        } else {
            p[i] = (v[node + st] - v[node - st]) / (2.0 * h);
        }
    }
}

/// f(t, x, y, p sigma, u) with the gradient taken from v.
struct DriverEval {
    const ControlProblem& prob;
    const SpaceGrid& g;
    bool uses_z;

    double operator()(const Operator& op, std::span<const double> v, double t, std::size_t node,
                      std::span<const double> x, double y, std::size_t u, std::vector<double>& p,
                      std::vector<double>& z) const {
        if (uses_z) {
            const std::size_t d = g.dims();
            const std::size_t m = prob.noise_dim();
            gradient(g, v, node, p);
            const auto sig = op.sigma(node, u);
            for (std::size_t j = 0; j < m; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i) s += p[i] * sig[i * m + j];
                z[j] = s;
            }
        }
        return prob.eval_driver(t, x, y, z, prob.control(u));
    }
};

double sampled_y_lipschitz(const ControlProblem& prob, const SpaceGrid& g, std::span<const double> times) {
    const Expr& f = prob.data().driver;
    if (!f.depends_on(VarKind::Value)) return 0.0;
    const double ys[] = {-10.0, -1.0, -0.1, 0.0, 0.1, 1.0, 10.0};
    std::vector<double> z(prob.noise_dim(), 0.0);
    std::vector<double> lip(g.size(), 0.0);
    parallel_for(g.size(), [&](std::size_t node) {
        std::vector<double> x(g.dims());
        g.coords(node, x);
        double best = 0.0;
        for (double t : times) {
            for (std::size_t u = 0; u < prob.num_controls(); ++u) {
                for (double y : ys) {
                    const double e = 1e-3 * (1.0 + std::fabs(y));
                    const double q = (prob.eval_driver(t, x, y + e, z, prob.control(u)) -
                                      prob.eval_driver(t, x, y, z, prob.control(u))) /
                                     e;
                    if (std::isfinite(q)) best = std::max(best, std::fabs(q));
                }
            }
        }
        lip[node] = best;
    });
    return *std::max_element(lip.begin(), lip.end());
}

std::vector<double> sample_times(const ControlProblem& prob) {
    if (prob.coefficients_time_independent() && !prob.data().driver.depends_on(VarKind::Time)) {
        return {0.0};
    }
    std::vector<double> ts;
    for (int i = 0; i <= 10; ++i) ts.push_back(prob.horizon() * i / 10.0);
    return ts;
}

}  // namespace

double stability_bound(const ControlProblem& prob, const SpaceGrid& space, Scheme scheme) {
    if (space.dims() != prob.state_dim()) throw InputError("grid dimension does not match the problem");
    const auto times = sample_times(prob);
    const double ly = sampled_y_lipschitz(prob, space, times);
    double rate = ly;
    if (scheme == Scheme::Explicit) {
        double wmax = 0.0;
        for (double t : times) {
            Operator op(prob, space);
            op.prepare(t);
            for (std::size_t node = 0; node < space.size(); ++node) {
                for (std::size_t u = 0; u < prob.num_controls(); ++u) wmax = std::max(wmax, op.total_weight(node, u));
            }
        }
        rate += wmax;
    }
    return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

SpaceTimeGrid build_grid(const Box& box, const std::vector<std::size_t>& nodes, std::size_t nt,
                         const ControlProblem& prob, Scheme scheme) {
    const std::size_t d = prob.state_dim();
    if (box.lo.size() != d || box.hi.size() != d) throw InputError("grid box dimension does not match the problem");
    if (nodes.size() != d) throw InputError("grid needs one node count per state dimension");
    for (std::size_t i = 0; i < d; ++i) {
        if (!(box.lo[i] < box.hi[i])) throw InputError("degenerate grid box in dimension " + std::to_string(i + 1));
        if (nodes[i] < 3) throw InputError("grid needs at least 3 nodes per dimension");
    }
    SpaceTimeGrid g;
    g.space = SpaceGrid(box, nodes);
    g.horizon = prob.horizon();
    g.scheme = scheme;
    for (std::size_t i = 0; i < d; ++i) {
        if (nodes[i] < 11) {
            g.warnings.push_back("coarse grid: only " + std::to_string(nodes[i]) + " nodes in dimension " +
                                 std::to_string(i + 1));
        }
    }
    g.dt_max = stability_bound(prob, g.space, scheme);
    if (nt == 0) {
        if (!std::isfinite(g.dt_max)) {
            throw InputError("nt must be given: the data impose no time-step bound");
        }
        nt = static_cast<std::size_t>(std::ceil(g.horizon / g.dt_max - 1e-9));
        nt = std::max<std::size_t>(nt, 1);
    }
    g.nt = nt;
    if (g.dt() > g.dt_max * (1.0 + 1e-12)) {
        const std::string msg = "time step " + detail::format_double(g.dt()) + " exceeds the stability bound " +
                                detail::format_double(g.dt_max) + " of the " + to_string(scheme) + " scheme";
        if (scheme == Scheme::Explicit) throw InputError(msg);
        g.warnings.push_back(msg);
    }
    return g;
}

ValueField solve_hjb(const ControlProblem& prob, const SpaceTimeGrid& grid, const HjbOptions& opts) {
    const SpaceGrid& g = grid.space;
    if (g.dims() != prob.state_dim()) throw InputError("grid dimension does not match the problem");
    if (std::fabs(grid.horizon - prob.horizon()) > 1e-12 * std::max(1.0, prob.horizon())) {
        throw InputError("grid horizon does not match the problem");
    }
    if (opts.side != ObstacleSide::None && !prob.has_obstacle()) throw InputError("obstacle side requires phi");
    if (opts.store_every < 1) throw InputError("store_every must be >= 1");
    const bool penalized = opts.variant.kind == ObstacleVariant::Kind::Penalized;
    if (opts.side != ObstacleSide::None && penalized && !(opts.variant.n >= 1.0)) {
        throw InputError("penalty level must be >= 1");
    }
    if (grid.scheme == Scheme::Explicit && grid.dt() > grid.dt_max * (1.0 + 1e-12)) {
        throw InputError("explicit time step exceeds the stability bound");
    }

    const std::size_t N = g.size();
    const std::size_t nu = prob.num_controls();
    const std::size_t nt = grid.nt;
    const double dt = grid.dt();
    const std::size_t chunks = (N + kChunk - 1) / kChunk;

    ValueField field;
    field.space = g;
    field.horizon = grid.horizon;
    field.nt = nt;
    field.scheme = to_string(grid.scheme);
    field.side = opts.side;
    field.variant = opts.side == ObstacleSide::None ? "none" : opts.variant.describe();
    field.penalty = opts.side != ObstacleSide::None && penalized ? opts.variant.n : 0.0;
    field.problem_hash = prob.hash();

    std::vector<double> next(N), cur(N);
    std::vector<std::uint32_t> arg(N, 0);
    parallel_for(N, [&](std::size_t node) {
        std::vector<double> x(g.dims());
        g.coords(node, x);
        next[node] = prob.eval_terminal(x);
        if (!std::isfinite(next[node])) {
            throw NumericalError("non-finite terminal value at " + describe_point(g, node));
        }
    });

    std::vector<std::vector<double>> kept_v;
    std::vector<std::vector<std::uint32_t>> kept_u;
    std::vector<std::size_t> kept_k;
    auto keep = [&](std::size_t k, const std::vector<double>& v, const std::vector<std::uint32_t>& u) {
        if (k % opts.store_every == 0 || k == nt) {
            kept_k.push_back(k);
            kept_v.push_back(v);
            kept_u.push_back(u);
        }
    };
    keep(nt, next, arg);

    Operator op(prob, g);
    const DriverEval drv{prob, g, prob.data().driver.depends_on(VarKind::Gradient)};

    auto obstacle_step = [&](double t, std::span<const double> x, double v) {
        if (opts.side == ObstacleSide::None) return v;
        const double phi = prob.eval_obstacle(t, x);
        const bool lower = opts.side == ObstacleSide::Lower;
        if (!penalized) return lower ? std::max(v, phi) : std::min(v, phi);
        const bool active = lower ? v < phi : v > phi;
        if (!active) return v;
        const double nd = opts.variant.n * dt;
        return (v + nd * phi) / (1.0 + nd);
    };

    auto check = [&](double v, std::size_t node, double t) {
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite value at t=" + detail::format_double(t) + ", " + describe_point(g, node));
        }
    };

    std::vector<double> fval;
    std::vector<std::uint32_t> policy;
    if (grid.scheme == Scheme::ImplicitSweep) {
        fval.resize(N * nu);
        policy.resize(N);
    }

    for (std::size_t k = nt; k-- > 0;) {
        const double tk = grid.time(k);
        if (grid.scheme == Scheme::Explicit) {
            const double t = grid.time(k + 1);
            op.prepare(t);
            parallel_for(chunks, [&](std::size_t c) {
                std::vector<double> x(g.dims()), p(g.dims()), z(prob.noise_dim(), 0.0);
                const std::size_t end = std::min(N, (c + 1) * kChunk);
                for (std::size_t node = c * kChunk; node < end; ++node) {
                    g.coords(node, x);
                    double best = std::numeric_limits<double>::infinity();
                    std::uint32_t bu = 0;
                    for (std::size_t u = 0; u < nu; ++u) {
                        const double h = op.apply(next, node, u) + drv(op, next, t, node, x, next[node], u, p, z);
                        if (h < best) {
                            best = h;
                            bu = static_cast<std::uint32_t>(u);
                        }
                    }
                    const double v = obstacle_step(tk, x, next[node] + dt * best);
                    check(v, node, tk);
                    cur[node] = v;
                    arg[node] = bu;
                }
            });
        } else {
            op.prepare(tk);
            parallel_for(chunks, [&](std::size_t c) {
                std::vector<double> x(g.dims()), p(g.dims()), z(prob.noise_dim(), 0.0);
                const std::size_t end = std::min(N, (c + 1) * kChunk);
                for (std::size_t node = c * kChunk; node < end; ++node) {
                    g.coords(node, x);
                    double best = std::numeric_limits<double>::infinity();
                    for (std::size_t u = 0; u < nu; ++u) {
                        const double f = drv(op, next, tk, node, x, next[node], u, p, z);
                        check(f, node, tk);
                        fval[node * nu + u] = f;
                        const double h = op.apply(next, node, u) + f;
                        if (h < best) {
                            best = h;
                            policy[node] = static_cast<std::uint32_t>(u);
                        }
                    }
                }
            });

            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            bool analysed = false;
            Eigen::VectorXd rhs(static_cast<Eigen::Index>(N));
            std::vector<Eigen::Triplet<double>> trip;
            bool converged = false;
            for (int iter = 0; iter < 200; ++iter) {
                trip.clear();
                trip.reserve(N * (op.slots() + 1));
                for (std::size_t node = 0; node < N; ++node) {
                    const std::size_t u = policy[node];
                    const auto w = op.weights(node, u);
                    const auto nb = op.neighbours(node, u);
                    double diag = 1.0;
                    for (std::size_t s = 0; s < w.size(); ++s) {
                        diag += dt * w[s];
                        trip.emplace_back(static_cast<int>(node), static_cast<int>(nb[s]), -dt * w[s]);
                    }
                    trip.emplace_back(static_cast<int>(node), static_cast<int>(node), diag);
                    rhs[static_cast<Eigen::Index>(node)] = next[node] + dt * fval[node * nu + u];
                }
                Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
                A.setFromTriplets(trip.begin(), trip.end());
                if (!analysed) {
                    lu.analyzePattern(A);
                    analysed = true;
                }
                lu.factorize(A);
                if (lu.info() != Eigen::Success) throw NumericalError("implicit step: sparse factorization failed");
                const Eigen::VectorXd sol = lu.solve(rhs);
                for (std::size_t node = 0; node < N; ++node) cur[node] = sol[static_cast<Eigen::Index>(node)];
                if (nu == 1) {
                    converged = true;
                    break;
                }
                std::size_t switched = 0;
                for (std::size_t node = 0; node < N; ++node) {
                    const std::size_t pu = policy[node];
                    const double hp = op.apply(cur, node, pu) + fval[node * nu + pu];
                    double best = hp;
                    std::size_t bu = pu;
                    for (std::size_t u = 0; u < nu; ++u) {
                        const double h = op.apply(cur, node, u) + fval[node * nu + u];
                        if (h < best - 1e-12 * (1.0 + std::fabs(hp))) {
                            best = h;
                            bu = u;
                        }
                    }
                    if (bu != pu) {
                        policy[node] = static_cast<std::uint32_t>(bu);
                        ++switched;
                    }
                }
                if (switched == 0) {
                    converged = true;
                    break;
                }
            }
            if (!converged) {
                throw NumericalError("implicit step at t=" + detail::format_double(tk) +
                                     ": policy iteration did not converge");
            }
            parallel_for(chunks, [&](std::size_t c) {
                std::vector<double> x(g.dims());
                const std::size_t end = std::min(N, (c + 1) * kChunk);
                for (std::size_t node = c * kChunk; node < end; ++node) {
                    g.coords(node, x);
                    const double v = obstacle_step(tk, x, cur[node]);
                    check(v, node, tk);
                    cur[node] = v;
                    arg[node] = policy[node];
                }
            });
        }
        std::swap(cur, next);
        keep(k, next, arg);
    }

    const std::size_t S = kept_k.size();
    field.time_index.resize(S);
    field.values.resize(S * N);
    field.controls.resize(S * N);
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t src = S - 1 - s;
        field.time_index[s] = kept_k[src];
        std::copy(kept_v[src].begin(), kept_v[src].end(), field.values.begin() + static_cast<std::ptrdiff_t>(s * N));
        std::copy(kept_u[src].begin(), kept_u[src].end(), field.controls.begin() + static_cast<std::ptrdiff_t>(s * N));
    }
    return field;
}

double pde_residual(const ValueField& field, const ControlProblem& prob, std::size_t slice, std::size_t node) {
    const SpaceGrid& g = field.space;
    if (slice + 1 >= field.slices()) throw InputError("residual needs a non-terminal slice");
    if (node >= g.size()) throw InputError("residual node out of range");
    for (std::size_t i = 0; i < g.dims(); ++i) {
        const std::size_t k = g.index_along(node, i);
        if (k == 0 || k + 1 == g.nodes(i)) throw InputError("residual needs an interior node");
    }
    const double t = field.time(slice);
    const double dt = field.time(slice + 1) - t;
    const auto v = field.slice_values(slice);
    Operator op(prob, g);
    op.prepare(t);
    const DriverEval drv{prob, g, prob.data().driver.depends_on(VarKind::Gradient)};
    std::vector<double> x(g.dims()), p(g.dims()), z(prob.noise_dim(), 0.0);
    g.coords(node, x);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < prob.num_controls(); ++u) {
        best = std::min(best, op.apply(v, node, u) + drv(op, v, t, node, x, v[node], u, p, z));
    }
    const double dvdt = (field.at(slice + 1, node) - field.at(slice, node)) / dt;
    return -dvdt - best;
}

namespace {

/// Rounds grid coordinates that sit within roundoff of a node onto the node.
double snap(double r) {
    const double n = std::round(r);
    return std::fabs(r - n) <= 1e-10 * std::max(1.0, std::fabs(r)) ? n : r;
}

}  // namespace

double interpolate(const ValueField& field, double t, std::span<const double> x) {
    const SpaceGrid& g = field.space;
    const std::size_t d = g.dims();
    if (x.size() != d) throw InputError("interpolation point has the wrong dimension");
    const double ttol = 1e-12 * std::max(1.0, field.horizon);
    if (!(t >= -ttol && t <= field.horizon + ttol)) throw InputError("interpolation time outside [0, T]");
    std::size_t s0 = 0;
    while (s0 + 2 < field.slices() && field.time(s0 + 1) <= t) ++s0;
    const double ta = field.time(s0);
    const double tb = field.time(s0 + 1);
    const double wt = snap(std::clamp((t - ta) / (tb - ta), 0.0, 1.0));

    std::vector<std::size_t> base(d);
    std::vector<double> frac(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double h = g.spacing(i);
        const double tol = 1e-12 * std::max(1.0, std::fabs(g.hi(i)) + std::fabs(g.lo(i)));
        if (!(x[i] >= g.lo(i) - tol && x[i] <= g.hi(i) + tol)) {
            throw InputError("interpolation point outside the grid box in dimension " + std::to_string(i + 1));
        }
        const double r = snap(std::clamp((x[i] - g.lo(i)) / h, 0.0, static_cast<double>(g.nodes(i) - 1)));
        std::size_t i0 = std::min(static_cast<std::size_t>(r), g.nodes(i) - 2);
        double w = r - static_cast<double>(i0);
        // exact hits reproduce the stored node value
        if (w == 1.0) {
            ++i0;
            w = 0.0;
            if (i0 + 1 >= g.nodes(i)) {
                --i0;
                w = 1.0;
            }
        }
        base[i] = i0;
        frac[i] = w;
    }
    auto spatial = [&](std::size_t slice) {
        double acc = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double w = 1.0;
            std::size_t flat = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const bool up = (corner >> i) & 1U;
                const double wi = up ? frac[i] : 1.0 - frac[i];
                if (wi == 0.0) {
                    w = 0.0;
                    break;
                }
                w *= wi;
                flat += (base[i] + (up ? 1 : 0)) * g.stride(i);
            }
            if (w != 0.0) acc += w * field.at(slice, flat);
        }
        return acc;
    };
    if (wt == 0.0) return spatial(s0);
    if (wt == 1.0) return spatial(s0 + 1);
    return (1.0 - wt) * spatial(s0) + wt * spatial(s0 + 1);
}

ControlPolicy policy_from_field(const ValueField& field, const TimeGrid& grid) {
    FeedbackTable table;
    table.cells = field.space;
    table.time_nodes = grid.steps() + 1;
    const std::size_t N = field.space.size();
    table.index.resize(table.time_nodes * N);
    for (std::size_t k = 0; k < table.time_nodes; ++k) {
        const double t = grid.node(k);
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        const std::size_t usable = field.slices() > 1 ? field.slices() - 1 : 1;
        for (std::size_t s = 0; s < usable; ++s) {
            const double dist = std::fabs(field.time(s) - t);
            if (dist < bd) {
                bd = dist;
                best = s;
            }
        }
        std::copy(field.controls.begin() + static_cast<std::ptrdiff_t>(best * N),
                  field.controls.begin() + static_cast<std::ptrdiff_t>((best + 1) * N),
                  table.index.begin() + static_cast<std::ptrdiff_t>(k * N));
    }
    return ControlPolicy::feedback(std::move(table));
}

}  // namespace hjblab
