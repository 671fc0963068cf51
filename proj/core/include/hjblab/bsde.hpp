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

/// Strictly increasing penalty levels, all >= 1.
class PenaltyLadder {
public:
    explicit PenaltyLadder(std::vector<double> levels);
    /// first, 2*first, ..., 2^(count-1)*first
    static PenaltyLadder geometric(double first, std::size_t count);

    const std::vector<double>& levels() const { return levels_; }

private:
    std::vector<double> levels_;
};

/// Backward processes along a path bundle.
struct BsdeSolution {
    TimeGrid grid{0.0, 1.0, 1};
    std::size_t n_paths = 0;
    std::size_t noise_dim = 1;
    std::vector<double> y;    ///< [path][node]
    std::vector<double> z;    ///< [path][step][m]
    std::vector<double> k;    ///< [path][node], cumulative increasing process
    std::vector<double> phi;  ///< [path][node] obstacle values (penalized runs only)
    double penalty = 0.0;
    ObstacleSide side = ObstacleSide::None;
    double y0 = 0.0;
    double y0_half_width = 0.0;  ///< 95% confidence half-width
    std::size_t merged_cells = 0;
    std::vector<std::string> warnings;

    double Y(std::size_t path, std::size_t node) const { return y[path * (grid.steps() + 1) + node]; }
    double K(std::size_t path, std::size_t node) const { return k[path * (grid.steps() + 1) + node]; }
    std::span<const double> Z(std::size_t path, std::size_t step) const {
        return {z.data() + (path * grid.steps() + step) * noise_dim, noise_dim};
    }
};

/**
 * Plain BSDE by backward regression:
 *   Z_k = E[Y_{k+1} dW_k | X_k] / dt,
 *   Y_k = E[Y_{k+1} | X_k] + f(t_k, X_k, E[Y_{k+1} | X_k], Z_k, u_k) dt.
 * Requires a problem without obstacle.
 */
BsdeSolution solve_bsde(const PathBundle& bundle, const ControlProblem& prob, const RegressionBasis& basis);

/**
 * Penalized BSDE. The lower side adds n (Y - phi)^- to the driver, the upper
 * side subtracts n (Y - phi)^+; the penalty is taken implicitly and solved in
 * closed form at every node. K is left at zero; see recover_K.
 */
BsdeSolution solve_penalized(const PathBundle& bundle, const ControlProblem& prob, double n, ObstacleSide side,
                             const RegressionBasis& basis);

/// K_k = sum_{j<k} n (Y_j - phi_j)^{-/+} dt.
BsdeSolution recover_K(BsdeSolution sol, double n, ObstacleSide side);

struct McSpec {
    std::size_t n_paths = 10000;
    std::size_t steps = 100;
    std::uint64_t seed = 1;
    RegressionBasis basis;
};

struct ValueRow {
    double n = 0.0;  ///< 0 for the unpenalized solve
    double y0 = 0.0;
    double half_width = 0.0;
};

struct ValueTable {
    std::vector<ValueRow> rows;
    double limit = 0.0;
    double limit_half_width = 0.0;
};

/**
 * Value of a fixed policy started at (t, x). Problems with an obstacle are
 * solved along the ladder (the last level is reported as the limit); problems
 * without one give a single unpenalized row.
 */
ValueTable value_fixed_control(const ControlProblem& prob, double t, std::span<const double> x,
                               const ControlPolicy& policy, const PenaltyLadder& ladder, const McSpec& mc);

/// Terminal condition and driver of one side of a comparison.
struct ComparisonData {
    std::string terminal;
    std::string driver;
};

struct ComparisonReport {
    std::size_t points = 0;
    std::size_t violations = 0;
    double fraction = 0.0;
    double max_violation = 0.0;
    double tau_reg = 0.0;
    double y0_a = 0.0;
    double y0_b = 0.0;
    bool pass = false;
};

/**
 * Solves both BSDEs on the shared bundle and counts (path, node) pairs with
 * Y_A > Y_B + tau_reg, where tau_reg is three times the root-mean 95% CI width
 * of the two initial values. Throws InputError when sampling finds
 * Phi_A > Phi_B or f_A > f_B. `base` supplies dimensions, b and sigma; an
 * obstacle in `base` is honoured with penalty level `n`.
 */
ComparisonReport comparison_harness(const ControlProblem& base, const ComparisonData& a, const ComparisonData& b,
                                    const PathBundle& bundle, const RegressionBasis& basis, double n = 0.0);

/// CSV columns: path, step, node_time, y, z1..zm, k (last node leaves z empty).
void write_solution_csv(const BsdeSolution& sol, const std::string& path);

}  // namespace hjblab
