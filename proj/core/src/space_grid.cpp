#include "hjblab/space_grid.hpp"

#include <cmath>

#include "hjblab/error.hpp"

namespace hjblab {

SpaceGrid::SpaceGrid(Box box, std::vector<std::size_t> nodes) : box_(std::move(box)), nodes_(std::move(nodes)) {
    if (box_.lo.size() != nodes_.size() || box_.hi.size() != nodes_.size() || nodes_.empty()) {
        throw InputError("grid box and node counts must have the same nonzero dimension");
    }
    strides_.resize(nodes_.size());
    size_ = 1;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        if (!(box_.lo[k] < box_.hi[k]) || !std::isfinite(box_.lo[k]) || !std::isfinite(box_.hi[k])) {
            throw InputError("degenerate grid box in dimension " + std::to_string(k + 1));
        }
        if (nodes_[k] < 2) throw InputError("grid needs at least 2 nodes per dimension");
        strides_[k] = size_;
        size_ *= nodes_[k];
    }
}

double SpaceGrid::coord(std::size_t dim, std::size_t index) const {
    if (index + 1 == nodes_[dim]) return box_.hi[dim];
    return box_.lo[dim] +
           (box_.hi[dim] - box_.lo[dim]) * static_cast<double>(index) / static_cast<double>(nodes_[dim] - 1);
}

void SpaceGrid::coords(std::size_t flat, std::span<double> out) const {
    for (std::size_t k = 0; k < nodes_.size(); ++k) out[k] = coord(k, (flat / strides_[k]) % nodes_[k]);
}

std::size_t SpaceGrid::flat(std::span<const std::size_t> multi) const {
    std::size_t f = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) f += multi[k] * strides_[k];
    return f;
}

void SpaceGrid::multi(std::size_t flat, std::span<std::size_t> out) const {
    for (std::size_t k = 0; k < nodes_.size(); ++k) out[k] = (flat / strides_[k]) % nodes_[k];
}

std::size_t SpaceGrid::nearest(std::span<const double> x) const {
    std::size_t f = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const double s = (x[k] - box_.lo[k]) / spacing(k);
        double r = std::round(s);
        if (!(r >= 0.0)) r = 0.0;
        const auto last = static_cast<double>(nodes_[k] - 1);
        if (r > last) r = last;
        f += static_cast<std::size_t>(r) * strides_[k];
    }
    return f;
}

}  // namespace hjblab
