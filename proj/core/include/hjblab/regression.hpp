#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hjblab {

/// Basis for the conditional-expectation estimator.
struct RegressionBasis {
    enum class Kind { Cells, Polynomial };

    Kind kind = Kind::Cells;
    std::size_t cells_per_dim = 0;  ///< 0 picks a count from the number of paths
    int degree = 2;                 ///< total degree for Kind::Polynomial

    static RegressionBasis cells(std::size_t per_dim = 0) { return {Kind::Cells, per_dim, 0}; }
    static RegressionBasis polynomial(int degree) { return {Kind::Polynomial, 0, degree}; }

    std::string describe() const;
};

/**
 * Least-squares projection of path-wise targets onto a basis evaluated at the
 * path states of one time node. Built once per node and reused for every
 * target at that node.
 *
 * The cell basis partitions the sampled range of each coordinate into equal
 * slabs. Cells holding fewer than two paths are merged into the nearest
 * populated cell. Both bases contain the constants, so fitted values keep the
 * sample mean of the target.
 */
class Regressor {
public:
    /// states: n_paths * dims, path-major.
    Regressor(const RegressionBasis& basis, std::span<const double> states, std::size_t n_paths, std::size_t dims);
    ~Regressor();
    Regressor(Regressor&&) noexcept;
    Regressor& operator=(Regressor&&) noexcept;

    /// fitted[i] = projection of target evaluated at path i.
    void fit(std::span<const double> target, std::span<double> fitted) const;

    std::size_t merged_cells() const { return merged_; }
    std::size_t basis_size() const { return basis_size_; }

private:
    struct Poly;

    std::size_t n_ = 0;
    std::size_t merged_ = 0;
    std::size_t basis_size_ = 0;
    // cell basis
    std::vector<std::size_t> cell_of_;   ///< compact group per path
    std::vector<std::size_t> group_count_;
    // polynomial basis
    std::unique_ptr<Poly> poly_;
};

}  // namespace hjblab
