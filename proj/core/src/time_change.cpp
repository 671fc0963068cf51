#include "hjblab/time_change.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "bsde_internal.hpp"
#include "hjblab/error.hpp"

namespace hjblab {

TimeChange::TimeChange(double t0, double t1, double horizon) : t0_(t0), t1_(t1), T_(horizon) {
    if (!(t0 < horizon) || !(t1 < horizon)) throw InputError("time change needs t0, t1 < T");
    rate_ = t0 == t1 ? 1.0 : (T_ - t0_) / (T_ - t1_);
}

double TimeChange::tau(double s) const {
    if (s == T_) return T_;
    if (s == t1_) return t0_;
    return t0_ + rate_ * (s - t1_);
}

double TimeChange::tau_inv(double s) const {
    if (s == T_) return T_;
    if (s == t0_) return t1_;
    return t1_ + (s - t0_) / rate_;
}

TimeChange make_time_change(double t0, double t1, double horizon, double delta) {
    if (!(delta > 0.0)) throw InputError("delta must be positive");
    if (!(horizon > delta)) throw InputError("delta must be smaller than T");
    const double hi = horizon - delta;
    const double tol = 1e-12 * std::max(1.0, horizon);
    if (!(t0 >= -tol && t0 <= hi + tol)) throw InputError("t0 outside [0, T - delta]");
    if (!(t1 >= -tol && t1 <= hi + tol)) throw InputError("t1 outside [0, T - delta]");
    return TimeChange(t0, t1, horizon);
}

LemmaReport lemma_bounds_check(const TimeChange& tc, double delta, std::size_t samples) {
    if (!(delta > 0.0)) throw InputError("delta must be positive");
    if (samples < 2) throw InputError("lemma check needs at least two samples");
    LemmaReport r;
    r.bound = tc.horizon() / delta + 2.0 / delta;
    if (tc.identity()) {
        r.pass = true;
        return r;
    }
    const double rate = tc.rate();
    const double fixed = std::fabs(1.0 / rate - 1.0) + std::fabs(1.0 / std::sqrt(rate) - 1.0);
    for (std::size_t i = 0; i < samples; ++i) {
        const double s = i + 1 == samples ? tc.horizon()
                                          : tc.t0() + (tc.horizon() - tc.t0()) * static_cast<double>(i) /
                                                          static_cast<double>(samples - 1);
        const double lhs = std::fabs(tc.tau_inv(s) - s) + fixed;
        if (lhs > r.max_lhs) {
            r.max_lhs = lhs;
            r.worst_s = s;
        }
    }
    r.ratio = r.max_lhs / std::fabs(tc.t0() - tc.t1());
    r.pass = r.ratio <= r.bound;
    return r;
}

TransformedProblem transform_problem(const ControlProblem& prob, const TimeChange& tc, double n) {
    if (std::fabs(tc.horizon() - prob.horizon()) > 1e-12 * std::max(1.0, prob.horizon())) {
        throw InputError("time change horizon differs from the problem horizon");
    }
    if (tc.identity()) return {prob, n, tc};
    const double rate = tc.rate();
    const Expr t = Expr::variable({VarKind::Time, 0});
    const Expr tinv = Expr::constant(tc.t1()) + (t - Expr::constant(tc.t0())) / Expr::constant(rate);
    const VarRef tv{VarKind::Time, 0};

    ProblemData data = prob.data();
    for (auto& b : data.drift) b = b.substitute(tv, tinv) / Expr::constant(rate);
    for (auto& s : data.diffusion) s = s.substitute(tv, tinv) / Expr::constant(std::sqrt(rate));
    Expr f = data.driver.substitute(tv, tinv);
    for (std::size_t j = 0; j < data.noise_dim; ++j) {
        const VarRef zj{VarKind::Gradient, static_cast<std::uint16_t>(j)};
        f = f.substitute(zj, Expr::constant(std::sqrt(rate)) * Expr::variable(zj));
    }
    data.driver = f / Expr::constant(rate);
    if (data.obstacle) data.obstacle = data.obstacle->substitute(tv, tinv);
    return {ControlProblem(std::move(data)), n / rate, tc};
}

DiscrepancyReport coupled_invariance_check(const ControlProblem& prob, double t0, double t1,
                                           std::span<const double> x, const ControlPolicy& policy, double n,
                                           std::size_t steps, std::size_t n_paths, std::uint64_t seed,
                                           const RegressionBasis& basis) {
    const double T = prob.horizon();
    const TimeChange tc(t0, t1, T);
    const TransformedProblem tp = transform_problem(prob, tc, n);
    const bool pen = prob.has_obstacle() && prob.side() != ObstacleSide::None;
    if (pen && !(n > 0.0)) throw InputError("penalty level must be positive");

    const TimeGrid ga(t1, T, steps);
    const TimeGrid gb(t0, T, steps);
    const PathBundle ba = simulate_paths(prob, policy, t1, x, ga, n_paths, seed);
    const PathBundle bb = simulate_paths(tp.problem, policy, t0, x, gb, n_paths, seed);
    const ObstacleSide side = pen ? prob.side() : ObstacleSide::None;
    const BsdeSolution sa = detail::bsde_backward(ba, prob, pen ? n : 0.0, side, basis);
    const BsdeSolution sb = detail::bsde_backward(bb, tp.problem, pen ? tp.penalty : 0.0, side, basis);

    DiscrepancyReport r;
    r.t0 = t0;
    r.t1 = t1;
    r.n = n;
    r.dt = ga.dt();
    r.y_original = sa.y0;
    r.y_transformed = sb.y0;
    std::vector<double> diff(n_paths);
    double sum = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        diff[p] = std::fabs(sb.Y(p, 0) - sa.Y(p, 0));
        sum += diff[p];
        r.max_abs = std::max(r.max_abs, diff[p]);
    }
    r.mean_abs = sum / static_cast<double>(n_paths);
    std::sort(diff.begin(), diff.end());
    for (double q : {0.0, 0.25, 0.5, 0.75, 0.95, 1.0}) {
        const auto i = static_cast<std::size_t>(std::round(q * static_cast<double>(n_paths - 1)));
        r.quantiles.push_back(diff[i]);
    }
    return r;
}

std::string discrepancy_to_json(const DiscrepancyReport& r) {
    nlohmann::ordered_json j;
    j["t0"] = r.t0;
    j["t1"] = r.t1;
    j["n"] = r.n;
    j["dt"] = r.dt;
    j["max_abs"] = r.max_abs;
    j["mean_abs"] = r.mean_abs;
    const char* names[] = {"q0", "q25", "q50", "q75", "q95", "q100"};
    nlohmann::ordered_json q;
    for (std::size_t i = 0; i < r.quantiles.size() && i < 6; ++i) q[names[i]] = r.quantiles[i];
    j["per_path_quantiles"] = q;
    j["y_original"] = r.y_original;
    j["y_transformed"] = r.y_transformed;
    return j.dump(2) + "\n";
}

}  // namespace hjblab
