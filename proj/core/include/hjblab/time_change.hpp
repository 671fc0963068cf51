#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hjblab/forward_sim.hpp"
#include "hjblab/problem.hpp"
#include "hjblab/regression.hpp"

namespace hjblab {

/**
 * Linear map of [t1, T] onto [t0, T]:
 *   tau(s) = t0 + rate (s - t1),  tau_inv(s) = t1 + (s - t0) / rate,
 *   rate = (T - t0) / (T - t1).
 * The endpoint identities tau(t1) = t0, tau(T) = T and their inverses hold exactly.
 */
class TimeChange {
public:
    TimeChange(double t0, double t1, double horizon);

    double t0() const { return t0_; }
    double t1() const { return t1_; }
    double horizon() const { return T_; }
    double rate() const { return rate_; }
    bool identity() const { return t0_ == t1_; }

    double tau(double s) const;
    double tau_inv(double s) const;

private:
    double t0_;
    double t1_;
    double T_;
    double rate_;
};

/// Throws InputError unless delta > 0 and t0, t1 lie in [0, T - delta].
TimeChange make_time_change(double t0, double t1, double horizon, double delta);

struct LemmaReport {
    double max_lhs = 0.0;   ///< max over s of |tau_inv(s) - s| + |1/rate - 1| + |1/sqrt(rate) - 1|
    double worst_s = 0.0;
    double ratio = 0.0;     ///< max_lhs / |t0 - t1| (0 when t0 == t1)
    double bound = 0.0;     ///< T/delta + 2/delta
    bool pass = false;
};

LemmaReport lemma_bounds_check(const TimeChange& tc, double delta, std::size_t samples = 1001);

/// Time-changed problem on [t0, T] together with its rescaled penalty level.
struct TransformedProblem {
    ControlProblem problem;
    double penalty = 0.0;
    TimeChange change;
};

/**
 * b~ = b(tau_inv(s), x, u) / rate, sigma~ = sigma(tau_inv(s), x, u) / sqrt(rate),
 * f~ = f(tau_inv(s), x, y, sqrt(rate) z, u) / rate, phi~ = phi(tau_inv(s), x),
 * Phi unchanged, penalty n / rate. The identity change returns the problem as is.
 */
TransformedProblem transform_problem(const ControlProblem& prob, const TimeChange& tc, double n);

struct DiscrepancyReport {
    double t0 = 0.0;
    double t1 = 0.0;
    double n = 0.0;
    double dt = 0.0;  ///< step of the original run on [t1, T]
    double max_abs = 0.0;
    double mean_abs = 0.0;
    std::vector<double> quantiles;  ///< per-path |Y~ - Y| at 0, 0.25, 0.5, 0.75, 0.95, 1
    double y_original = 0.0;
    double y_transformed = 0.0;
};

/**
 * Solves the original system on [t1, T] and the transformed one on [t0, T]
 * with the same number of steps and the same seed, so the increments of the
 * second run are sqrt(rate) times those of the first. Reports the per-path
 * difference of the initial values. Without an obstacle the plain BSDE is used.
 */
DiscrepancyReport coupled_invariance_check(const ControlProblem& prob, double t0, double t1,
                                           std::span<const double> x, const ControlPolicy& policy, double n,
                                           std::size_t steps, std::size_t n_paths, std::uint64_t seed,
                                           const RegressionBasis& basis = {});

std::string discrepancy_to_json(const DiscrepancyReport& report);

}  // namespace hjblab
