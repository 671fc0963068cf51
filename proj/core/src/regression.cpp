#include "hjblab/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hjblab/error.hpp"

namespace hjblab {

std::string RegressionBasis::describe() const {
    if (kind == Kind::Cells) return "cells:" + std::to_string(cells_per_dim);
    return "poly:" + std::to_string(degree);
}

struct Regressor::Poly {
    Eigen::MatrixXd design;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
};

namespace {

std::size_t auto_cells(std::size_t n_paths, std::size_t dims) {
    const double target = std::pow(static_cast<double>(n_paths) / 64.0, 1.0 / static_cast<double>(dims));
    return std::clamp<std::size_t>(static_cast<std::size_t>(target), 1, 512);
}

// Exponent tuples of total degree <= q in `dims` variables, graded order.
void monomials(std::size_t dims, int q, std::vector<std::vector<int>>& out) {
    std::vector<int> cur(dims, 0);
    for (int total = 0; total <= q; ++total) {
        auto rec = [&](auto&& self, std::size_t k, int left) -> void {
            if (k + 1 == dims) {
                cur[k] = left;
                out.push_back(cur);
                return;
            }
            for (int e = left; e >= 0; --e) {
                cur[k] = e;
                self(self, k + 1, left - e);
            }
        };
        rec(rec, 0, total);
    }
}

}  // namespace

Regressor::Regressor(const RegressionBasis& basis, std::span<const double> states, std::size_t n_paths,
                     std::size_t dims)
    : n_(n_paths) {
    if (n_paths == 0 || dims == 0 || states.size() != n_paths * dims) {
        throw InputError("regression needs n_paths * dims states");
    }
    std::vector<double> lo(dims, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dims, -std::numeric_limits<double>::infinity());
    for (std::size_t p = 0; p < n_paths; ++p) {
        for (std::size_t k = 0; k < dims; ++k) {
            lo[k] = std::min(lo[k], states[p * dims + k]);
            hi[k] = std::max(hi[k], states[p * dims + k]);
        }
    }

    if (basis.kind == RegressionBasis::Kind::Polynomial) {
        if (basis.degree < 0) throw InputError("polynomial degree must be nonnegative");
        std::vector<std::vector<int>> exps;
        monomials(dims, basis.degree, exps);
        poly_ = std::make_unique<Poly>();
        poly_->design.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(exps.size()));
        for (std::size_t p = 0; p < n_paths; ++p) {
            for (std::size_t j = 0; j < exps.size(); ++j) {
                double v = 1.0;
                for (std::size_t k = 0; k < dims; ++k) {
                    const double mid = 0.5 * (lo[k] + hi[k]);
                    const double half = 0.5 * (hi[k] - lo[k]);
                    const double s = half > 0.0 ? (states[p * dims + k] - mid) / half : 0.0;
                    for (int e = 0; e < exps[j][k]; ++e) v *= s;
                }
                poly_->design(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = v;
            }
        }
        poly_->cod.compute(poly_->design);
        basis_size_ = exps.size();
        return;
    }

    const std::size_t per_dim = basis.cells_per_dim == 0 ? auto_cells(n_paths, dims) : basis.cells_per_dim;
    std::vector<std::size_t> counts(dims);
    std::size_t total = 1;
    for (std::size_t k = 0; k < dims; ++k) {
        counts[k] = hi[k] - lo[k] > 1e-12 * std::max(1.0, std::fabs(hi[k])) ? per_dim : 1;
        total *= counts[k];
    }

    std::vector<std::size_t> raw(n_paths);
    std::map<std::size_t, std::size_t> occupancy;
    for (std::size_t p = 0; p < n_paths; ++p) {
        std::size_t c = 0;
        std::size_t stride = 1;
        for (std::size_t k = 0; k < dims; ++k) {
            std::size_t i = 0;
            if (counts[k] > 1) {
                const double s = (states[p * dims + k] - lo[k]) / (hi[k] - lo[k]) * static_cast<double>(counts[k]);
                i = std::min(counts[k] - 1, static_cast<std::size_t>(std::max(0.0, s)));
            }
            c += i * stride;
            stride *= counts[k];
        }
        raw[p] = c;
        ++occupancy[c];
    }
    (void)total;

    // Cells with a single path borrow the group of the nearest well-populated cell.
    std::vector<std::size_t> rich;
    for (const auto& [c, cnt] : occupancy) {
        if (cnt >= 2) rich.push_back(c);
    }
    std::map<std::size_t, std::size_t> target;
    auto split = [&](std::size_t c, std::vector<long long>& idx) {
        idx.resize(dims);
        for (std::size_t k = 0; k < dims; ++k) {
            idx[k] = static_cast<long long>(c % counts[k]);
            c /= counts[k];
        }
    };
    std::vector<long long> a, b;
    for (const auto& [c, cnt] : occupancy) {
        if (cnt >= 2 || rich.empty()) {
            target[c] = c;
            continue;
        }
        split(c, a);
        std::size_t best = rich.front();
        long long best_d = std::numeric_limits<long long>::max();
        for (std::size_t r : rich) {
            split(r, b);
            long long dist = 0;
            for (std::size_t k = 0; k < dims; ++k) dist += (a[k] - b[k]) * (a[k] - b[k]);
            if (dist < best_d) {
                best_d = dist;
                best = r;
            }
        }
        target[c] = best;
        ++merged_;
    }

    std::map<std::size_t, std::size_t> group;
    for (const auto& [c, t] : target) group.emplace(t, 0);
    std::size_t g = 0;
    for (auto& [t, id] : group) id = g++;
    cell_of_.resize(n_paths);
    group_count_.assign(g, 0);
    for (std::size_t p = 0; p < n_paths; ++p) {
        cell_of_[p] = group[target[raw[p]]];
        ++group_count_[cell_of_[p]];
    }
    basis_size_ = g;
}

Regressor::~Regressor() = default;
Regressor::Regressor(Regressor&&) noexcept = default;
Regressor& Regressor::operator=(Regressor&&) noexcept = default;

void Regressor::fit(std::span<const double> target, std::span<double> fitted) const {
    if (target.size() != n_ || fitted.size() != n_) throw InputError("regression target has the wrong length");
    if (poly_) {
        const Eigen::Map<const Eigen::VectorXd> y(target.data(), static_cast<Eigen::Index>(n_));
        const Eigen::VectorXd beta = poly_->cod.solve(y);
        Eigen::Map<Eigen::VectorXd>(fitted.data(), static_cast<Eigen::Index>(n_)) = poly_->design * beta;
        return;
    }
    std::vector<double> sum(group_count_.size(), 0.0);
    for (std::size_t p = 0; p < n_; ++p) sum[cell_of_[p]] += target[p];
    for (std::size_t g = 0; g < sum.size(); ++g) sum[g] /= static_cast<double>(group_count_[g]);
    for (std::size_t p = 0; p < n_; ++p) fitted[p] = sum[cell_of_[p]];
}

}  // namespace hjblab
