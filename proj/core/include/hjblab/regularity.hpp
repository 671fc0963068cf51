#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hjblab/hjb_grid.hpp"

namespace hjblab {

/// A grid point (t, x) with the field value there.
struct WitnessPoint {
    double t = 0.0;
    std::vector<double> x;
    double v = 0.0;
};

struct Estimate {
    double C = 0.0;
    std::vector<WitnessPoint> witness;  ///< pair or triple; empty when C is 0 by default
};

/**
 * Node region used by the estimators: stored slices with t <= T - delta and
 * interior space nodes, optionally restricted further to `window`.
 */
struct RegularityOptions {
    std::optional<Box> window;
    double offset_fraction = 0.1;   ///< cap on semiconcavity offsets, fraction of T and of the box width
    std::size_t max_offset_nodes = 16;  ///< hard cap on offsets in node units per axis
};

/// max |V(p) - V(q)| / |p - q| over adjacent node pairs (in t and along each x axis).
Estimate lipschitz_constant(const ValueField& field, double delta, const RegularityOptions& opts = {});

/**
 * max over grid-aligned symmetric triples (p - h, p, p + h) of
 * (V(p-h)/2 + V(p+h)/2 - V(p)) / (|2h|^2 / 4), floored at 0.
 */
Estimate semiconcavity_constant(const ValueField& field, double delta, const RegularityOptions& opts = {});

/// max over slice pairs of |V(t,x) - V(t',x)| / ((1 + |x|) sqrt|t - t'|) in the column of `node`.
/// A positive delta restricts both times to t <= T - delta.
Estimate holder_time_constant(const ValueField& field, std::size_t node, double delta = 0.0);

/// Every other stored slice and every other node per dimension.
ValueField subsample(const ValueField& field);

struct DeltaReport {
    double delta = 0.0;
    Estimate lipschitz;
    Estimate semiconcavity;
    Estimate holder;
    Estimate lipschitz_half;
    Estimate semiconcavity_half;
    Estimate holder_half;
    bool lipschitz_stable = false;
    bool semiconcave_stable = false;
    bool semiconcave_diverging = false;
};

struct RegularityReport {
    std::vector<DeltaReport> per_delta;
};

/// Runs the three estimators at full and half resolution for each delta.
/// *_stable: the constant changes by at most 25%; diverging: it grows by at least 60%.
RegularityReport regularity_report(const ValueField& field, const std::vector<double>& deltas,
                                   const RegularityOptions& opts = {});

std::string report_to_json(const RegularityReport& report);

/// Closed-form value functions of the bundled scenarios.
struct OracleId {
    enum class Kind { Ex2_1, Ex3_1, SmoothUpper, ReachControl };
    Kind kind = Kind::Ex2_1;
    double horizon = 1.0;

    static OracleId parse(std::string_view name, std::optional<double> horizon = std::nullopt);
    std::string name() const;
};

/// Throws InputError for t > T or a nonpositive horizon.
double oracle_value(const OracleId& id, double t, std::span<const double> x);

}  // namespace hjblab
