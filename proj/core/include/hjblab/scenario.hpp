#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hjblab/bsde.hpp"
#include "hjblab/hjb_grid.hpp"
#include "hjblab/problem.hpp"

namespace hjblab {

struct GridSpec {
    Box box;
    std::vector<std::size_t> nodes;
    std::size_t nt = 0;  ///< 0 derives the step count from the stability bound
    Scheme scheme = Scheme::Explicit;
    std::size_t store_every = 1;
};

struct Scenario {
    std::string path;
    ProblemSpec spec;
    ControlProblem problem;
    std::optional<GridSpec> grid;
    McSpec mc;
    double mc_t0 = 0.0;
    std::vector<double> mc_x0;
    std::vector<double> ladder;
    std::vector<double> deltas;
    std::optional<Box> window;
    std::string output_dir = ".";
    std::uint64_t hash = 0;
};

/**
 * Reads a line-oriented scenario file:
 *
 *   [problem]            d, m, T, b, sigma, f, Phi, phi, side, controls
 *   [constants]          name = number, usable inside expressions
 *   [grid]               lo, hi, nodes, nt, scheme, store_every
 *   [mc]                 paths, steps, seed, basis, t0, x0
 *   [penalty]            ladder
 *   [regularity]         deltas, window_lo, window_hi
 *   [output]             dir
 *
 * Lists use brackets and commas, matrices are lists of rows: `sigma = [[1, 0], [0, 1]]`.
 * `#` starts a comment. Errors report line and column, or name the offending field.
 */
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>");

/// FNV-1a over the canonical content; stable under key reordering, blind to [output].
std::uint64_t scenario_hash(const Scenario& s);

struct RunManifest {
    std::uint64_t scenario_hash = 0;
    std::string tool_version;
    std::uint64_t seed = 0;
    std::string started;  ///< UTC, ISO 8601
    double wall_seconds = 0.0;
    std::vector<std::pair<std::string, double>> stages;  ///< seconds per stage

    std::string to_json() const;
};

}  // namespace hjblab
