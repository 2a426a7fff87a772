#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bvtrack/error.hpp"
#include "bvtrack/mesh1d.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack {

/// Exact solver for  sum_k (M x .. x K_k x .. x M) + (M x .. x M)  on a
/// d-dimensional tensor, via the generalized eigenbasis of the 1D pencil
/// (K, M):  V^T K V = Lambda, V^T M V = I. The weighted form
/// a (M x .. x M) + b sum_k (M x .. x K_k x .. x M)  is also supported.
class FastDiagSolver {
public:
    FastDiagSolver(int d, const Tri1D& stiffness, const Tri1D& mass)
        : FastDiagSolver(d, dense(stiffness), dense(mass))
    {
    }

    FastDiagSolver(int d, const Eigen::MatrixXd& stiffness, const Eigen::MatrixXd& mass, double mass_weight = 1.0,
                   double stiffness_weight = 1.0)
        : shape_(TensorShape::cube(d, static_cast<std::size_t>(stiffness.rows())))
    {
        const auto m = stiffness.rows();
        if (stiffness.cols() != m || mass.rows() != m || mass.cols() != m || m == 0) {
            throw DimensionError("FastDiagSolver: factor sizes differ");
        }
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(stiffness, mass);
        if (es.info() != Eigen::Success) {
            throw NumericError("FastDiagSolver: generalized eigendecomposition failed");
        }
        const auto& vecs = es.eigenvectors();
        const auto& vals = es.eigenvalues();
        v_ = Matrix1D(static_cast<std::size_t>(m), static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                v_(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = vecs(i, j);
            }
        }
        vt_ = v_.transposed();
        eigenvalues_.assign(vals.data(), vals.data() + m);

        inv_.resize(shape_.size());
        for (std::size_t r = 0; r < inv_.size(); ++r) {
            std::size_t rest = r;
            double lambda = 0.0;
            for (int dd = 0; dd < d; ++dd) {
                lambda += eigenvalues_[rest % static_cast<std::size_t>(m)];
                rest /= static_cast<std::size_t>(m);
            }
            lambda = mass_weight + stiffness_weight * lambda;
            if (!(lambda > 0.0)) {
                throw NumericError("FastDiagSolver: operator is not positive definite");
            }
            inv_[r] = 1.0 / lambda;
        }
    }

    /// Solver for the strict-interior block of the interior-domain H1 operator.
    [[nodiscard]] static FastDiagSolver for_interior_block(const TensorSpace& space)
    {
        const auto m = static_cast<std::size_t>(space.m());
        return {space.dim(), assemble_stiffness_1d_interior(space.basis()).restricted(1, m - 1),
                assemble_mass_1d_interior(space.basis()).restricted(1, m - 1)};
    }

    [[nodiscard]] std::size_t size() const noexcept { return shape_.size(); }
    [[nodiscard]] std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }

    void solve(std::span<const double> rhs, std::span<double> x) const
    {
        detail::require_size(rhs.size(), size(), "FastDiagSolver::solve");
        detail::require_size(x.size(), size(), "FastDiagSolver::solve");
        std::vector<double> a(rhs.begin(), rhs.end());
        std::vector<double> b;
        TensorShape s = shape_;
        for (int k = 0; k < shape_.dim; ++k) {
            s = tensor::apply_matrix_along(vt_, k, s, a, b);
            std::swap(a, b);
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] *= inv_[i];
        }
        for (int k = 0; k < shape_.dim; ++k) {
            s = tensor::apply_matrix_along(v_, k, s, a, b);
            std::swap(a, b);
        }
        std::copy(a.begin(), a.end(), x.begin());
    }

    [[nodiscard]] std::vector<double> solve(std::span<const double> rhs) const
    {
        std::vector<double> x(size());
        solve(rhs, x);
        return x;
    }

private:
    static Eigen::MatrixXd dense(const Tri1D& t)
    {
        const auto m = static_cast<Eigen::Index>(t.size());
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = std::max<Eigen::Index>(0, i - 1); j <= std::min<Eigen::Index>(m - 1, i + 1); ++j) {
                a(i, j) = t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            }
        }
        return a;
    }

    TensorShape shape_;
    Matrix1D v_;
    Matrix1D vt_;
    std::vector<double> eigenvalues_;
    std::vector<double> inv_;
};

[[nodiscard]] inline FastDiagSolver fast_diag_build(int d, const Tri1D& stiffness, const Tri1D& mass)
{
    return {d, stiffness, mass};
}

[[nodiscard]] inline std::vector<double> fast_diag_solve(const FastDiagSolver& solver, std::span<const double> rhs)
{
    return solver.solve(rhs);
}

} // namespace bvtrack
