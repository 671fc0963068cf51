#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hjblab/forward_sim.hpp"
#include "hjblab/problem.hpp"
#include "hjblab/space_grid.hpp"

namespace hjblab {

enum class Scheme { Explicit, ImplicitSweep };

std::string to_string(Scheme s);
Scheme parse_scheme(std::string_view text);

/// How the obstacle enters a solve.
struct ObstacleVariant {
    enum class Kind { Projected, Penalized };
    Kind kind = Kind::Projected;
    double n = 0.0;  ///< penalty level for Kind::Penalized

    static ObstacleVariant projected() { return {Kind::Projected, 0.0}; }
    static ObstacleVariant penalized(double n) { return {Kind::Penalized, n}; }
    std::string describe() const;
};

/**
 * Space box, node counts and time steps on [0, T].
 *
 * dt_max is the monotonicity bound of the scheme:
 *   explicit:       1 / max(sum_i 2 a_ii / h_i^2 + |b_i| / h_i + L_y)
 *   implicit sweep: 1 / L_y
 * with a = sigma sigma^T / 2 and L_y the sampled Lipschitz constant of f in y,
 * maximised over grid nodes, controls and a set of sample times.
 */
struct SpaceTimeGrid {
    SpaceGrid space;
    std::size_t nt = 1;
    double horizon = 1.0;
    Scheme scheme = Scheme::Explicit;
    double dt_max = 0.0;  ///< +inf when the data impose no bound
    std::vector<std::string> warnings;

    double dt() const { return horizon / static_cast<double>(nt); }
    double time(std::size_t k) const {
        return k >= nt ? horizon : horizon * static_cast<double>(k) / static_cast<double>(nt);
    }
};

/// Stability bound for the given space grid; see SpaceTimeGrid.
double stability_bound(const ControlProblem& prob, const SpaceGrid& space, Scheme scheme);

/**
 * Validates the grid against the problem. nt = 0 picks the smallest step
 * count satisfying the bound (an error when the bound is infinite). An
 * explicit scheme whose dt exceeds the bound is rejected.
 */
SpaceTimeGrid build_grid(const Box& box, const std::vector<std::size_t>& nodes, std::size_t nt,
                         const ControlProblem& prob, Scheme scheme = Scheme::Explicit);

/// Grid-sampled value function with the minimizing control per node.
struct ValueField {
    SpaceGrid space;
    double horizon = 1.0;
    std::size_t nt = 1;
    std::vector<std::size_t> time_index;   ///< stored time nodes, increasing, first 0 and last nt
    std::vector<double> values;            ///< [slice][space node]
    std::vector<std::uint32_t> controls;   ///< [slice][space node], 0 on the terminal slice
    std::string scheme = "explicit";
    std::string variant = "none";
    ObstacleSide side = ObstacleSide::None;
    double penalty = 0.0;
    std::uint64_t problem_hash = 0;

    std::size_t slices() const { return time_index.size(); }
    double time(std::size_t slice) const;
    double& at(std::size_t slice, std::size_t node) { return values[slice * space.size() + node]; }
    double at(std::size_t slice, std::size_t node) const { return values[slice * space.size() + node]; }
    std::span<const double> slice_values(std::size_t slice) const {
        return {values.data() + slice * space.size(), space.size()};
    }

    friend bool operator==(const ValueField&, const ValueField&) = default;
};

struct HjbOptions {
    ObstacleSide side = ObstacleSide::None;
    ObstacleVariant variant;
    std::size_t store_every = 1;  ///< keep every k-th time node (t = 0 and T always kept)
};

/**
 * Backward monotone finite-difference solve from V(T,.) = Phi.
 *
 * Each step applies the discrete Hamiltonian (central second differences,
 * seven-point cross stencil, drift upwinded per control candidate) and then
 * the obstacle step: projection onto V >= phi / V <= phi, or the implicit
 * penalty update. The explicit scheme evaluates the operator on V_{k+1}; the
 * implicit sweep solves the fully implicit step by policy iteration.
 * At a boundary node the second difference normal to the boundary and any
 * drift pointing out of the box are dropped.
 */
ValueField solve_hjb(const ControlProblem& prob, const SpaceTimeGrid& grid, const HjbOptions& opts = {});

/// -dV/dt - inf_u H_disc at (slice, node), using the forward time difference to the next slice.
double pde_residual(const ValueField& field, const ControlProblem& prob, std::size_t slice, std::size_t node);

/// Multilinear interpolation in t and x. Throws InputError outside the grid hull.
double interpolate(const ValueField& field, double t, std::span<const double> x);

/// Feedback policy reading the stored argmin at the slice nearest to each node of `grid`.
ControlPolicy policy_from_field(const ValueField& field, const TimeGrid& grid);

}  // namespace hjblab
