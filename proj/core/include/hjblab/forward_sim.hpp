#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hjblab/problem.hpp"
#include "hjblab/space_grid.hpp"

namespace hjblab {

/// Uniform time grid on [start, end]; node(steps) is exactly `end`.
class TimeGrid {
public:
    TimeGrid(double start, double end, std::size_t steps);

    double start() const { return start_; }
    double end() const { return end_; }
    std::size_t steps() const { return steps_; }
    double dt() const { return dt_; }
    double node(std::size_t k) const;

private:
    double start_;
    double end_;
    std::size_t steps_;
    double dt_;
};

/// Control index per (time node, nearest spatial cell).
struct FeedbackTable {
    SpaceGrid cells;
    std::size_t time_nodes = 0;
    std::vector<std::uint32_t> index;  ///< time_nodes * cells.size()
};

/**
 * Piecewise-constant control rule. The policy only ever sees the path index,
 * the node index and the state at that node, so the simulated control is
 * adapted by construction.
 */
class ControlPolicy {
public:
    static ControlPolicy constant(std::size_t index);
    static ControlPolicy feedback(FeedbackTable table);
    /// indices[path * steps + step]
    static ControlPolicy sequence(std::size_t n_paths, std::size_t steps, std::vector<std::uint32_t> indices);

    std::size_t control_at(std::size_t path, std::size_t node, std::span<const double> x) const;

    /// Throws InputError when an index is out of range or the shape does not fit.
    void validate(std::size_t n_controls, std::size_t n_paths, std::size_t steps) const;

    std::string describe() const;

private:
    struct Constant {
        std::size_t index;
    };
    struct Sequence {
        std::size_t n_paths;
        std::size_t steps;
        std::vector<std::uint32_t> indices;
    };
    std::variant<Constant, FeedbackTable, Sequence> rule_;

    explicit ControlPolicy(std::variant<Constant, FeedbackTable, Sequence> rule) : rule_(std::move(rule)) {}
};

/// Ensemble of Euler-Maruyama paths with their increments and controls.
struct PathBundle {
    TimeGrid grid{0.0, 1.0, 1};
    std::size_t n_paths = 0;
    std::size_t state_dim = 1;
    std::size_t noise_dim = 1;
    std::uint64_t seed = 0;
    std::vector<double> x;          ///< [path][node][d]
    std::vector<double> dw;         ///< [path][step][m]
    std::vector<std::uint32_t> u;   ///< [path][step]

    std::span<const double> state(std::size_t path, std::size_t node) const {
        return {x.data() + (path * (grid.steps() + 1) + node) * state_dim, state_dim};
    }
    std::span<const double> increment(std::size_t path, std::size_t step) const {
        return {dw.data() + (path * grid.steps() + step) * noise_dim, noise_dim};
    }
    std::uint32_t control(std::size_t path, std::size_t step) const { return u[path * grid.steps() + step]; }
};

/**
 * X_{k+1} = X_k + b(t_k, X_k, u_k) dt + sigma(t_k, X_k, u_k) dW_k with dW_k
 * drawn from the counter-based stream keyed by (seed, path, step, component).
 * The result is bitwise independent of the thread count.
 */
PathBundle simulate_paths(const ControlProblem& prob, const ControlPolicy& policy, double t0,
                          std::span<const double> x0, const TimeGrid& grid, std::size_t n_paths,
                          std::uint64_t seed);

/// CSV columns: path, step, node_time, x1..xd, dw1..dwm, u_index (last node leaves dw/u empty).
void write_bundle_csv(const PathBundle& bundle, const std::string& path);

}  // namespace hjblab
