#pragma once

// Dense test oracles. Nothing in the production solve path includes this.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bvtrack/error.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack::oracle {

inline constexpr std::size_t max_dense_dofs = 20000;

/// Column-by-column materialisation of a matrix-free operator.
template <LinearMap Op>
[[nodiscard]] Eigen::MatrixXd materialize(const Op& op)
{
    if (op.rows() > max_dense_dofs || op.cols() > max_dense_dofs) {
        throw ConfigError("materialize: operator too large for dense oracle (" + std::to_string(op.rows()) + ")");
    }
    const auto r = op.rows();
    const auto c = op.cols();
    Eigen::MatrixXd dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    std::vector<double> e(c, 0.0);
    std::vector<double> col(r);
    for (std::size_t j = 0; j < c; ++j) {
        e[j] = 1.0;
        op.apply(e, col);
        e[j] = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
        }
    }
    return dense;
}

/// Partial-pivoting LU solve.
[[nodiscard]] inline std::vector<double> dense_lu_solve(Eigen::MatrixXd a, std::span<const double> rhs)
{
    const auto n = a.rows();
    if (a.cols() != n) {
        throw DimensionError("dense_lu_solve: matrix must be square");
    }
    if (static_cast<std::size_t>(n) > max_dense_dofs) {
        throw ConfigError("dense_lu_solve: system too large for dense oracle");
    }
    detail::require_size(rhs.size(), static_cast<std::size_t>(n), "dense_lu_solve");
    std::vector<double> b(rhs.begin(), rhs.end());
    const double scale = a.cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index p = k;
        for (Eigen::Index i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > std::abs(a(p, k))) {
                p = i;
            }
        }
        if (std::abs(a(p, k)) <= 1e-14 * scale) {
            throw SingularMatrixError("dense_lu_solve: matrix is singular");
        }
        if (p != k) {
            a.row(p).swap(a.row(k));
            std::swap(b[static_cast<std::size_t>(p)], b[static_cast<std::size_t>(k)]);
        }
        for (Eigen::Index i = k + 1; i < n; ++i) {
            const double l = a(i, k) / a(k, k);
            a(i, k) = l;
            for (Eigen::Index j = k + 1; j < n; ++j) {
                a(i, j) -= l * a(k, j);
            }
            b[static_cast<std::size_t>(i)] -= l * b[static_cast<std::size_t>(k)];
        }
    }
    std::vector<double> x(b.size());
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i + 1; j < n; ++j) {
            s -= a(i, j) * x[static_cast<std::size_t>(j)];
        }
        x[static_cast<std::size_t>(i)] = s / a(i, i);
    }
    return x;
}

} // namespace bvtrack::oracle
