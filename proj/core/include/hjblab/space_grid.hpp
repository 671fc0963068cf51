#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hjblab/problem.hpp"

namespace hjblab {

/// Tensor-product uniform grid over a box; node i of dimension k sits at
/// lo_k + (hi_k - lo_k) * i / (n_k - 1). The first dimension varies fastest.
class SpaceGrid {
public:
    SpaceGrid() = default;
    SpaceGrid(Box box, std::vector<std::size_t> nodes);

    std::size_t dims() const { return nodes_.size(); }
    std::size_t nodes(std::size_t dim) const { return nodes_[dim]; }
    const std::vector<std::size_t>& shape() const { return nodes_; }
    std::size_t size() const { return size_; }
    const Box& box() const { return box_; }
    double lo(std::size_t dim) const { return box_.lo[dim]; }
    double hi(std::size_t dim) const { return box_.hi[dim]; }
    double spacing(std::size_t dim) const { return (box_.hi[dim] - box_.lo[dim]) / static_cast<double>(nodes_[dim] - 1); }
    std::size_t stride(std::size_t dim) const { return strides_[dim]; }

    double coord(std::size_t dim, std::size_t index) const;
    void coords(std::size_t flat, std::span<double> out) const;
    std::size_t flat(std::span<const std::size_t> multi) const;
    void multi(std::size_t flat, std::span<std::size_t> out) const;
    std::size_t index_along(std::size_t flat, std::size_t dim) const { return (flat / strides_[dim]) % nodes_[dim]; }

    /// Flat index of the node nearest to x, clamped into the grid.
    std::size_t nearest(std::span<const double> x) const;

    friend bool operator==(const SpaceGrid&, const SpaceGrid&) = default;

private:
    Box box_;
    std::vector<std::size_t> nodes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

}  // namespace hjblab
