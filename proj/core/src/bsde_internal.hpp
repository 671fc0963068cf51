#pragma once

#include "hjblab/bsde.hpp"

namespace hjblab::detail {

/// Backward regression with an optional implicit penalty of any positive level.
BsdeSolution bsde_backward(const PathBundle& bundle, const ControlProblem& prob, double n, ObstacleSide side,
                           const RegressionBasis& basis);

}  // namespace hjblab::detail
