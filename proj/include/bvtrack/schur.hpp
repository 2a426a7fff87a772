#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bvtrack/error.hpp"
#include "bvtrack/fast_diag.hpp"
#include "bvtrack/krylov.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack {

/// Operators shared by the boundary Schur complement and the interior
/// reconstruction.
struct SchurBlocks {
    TensorSpace space;
    BoundaryMassOperator mass;
    KronSumOperator h1;
    KronSumOperator interior_h1;
    DofPartition partition;

    explicit SchurBlocks(const TensorSpace& s)
        : space(s)
        , mass(s)
        , h1(build_h1_operator(s))
        , interior_h1(build_interior_h1_operator(s))
        , partition(s)
    {
    }
};

/// S = M_BB + rho (A_BB - Ko_BI Ko_II^{-1} Ko_IB), acting on packed
/// near-boundary vectors. Ko is the H1 form over the interior box; the
/// boundary-layer part A - Ko only couples B with B.
class SchurOperator {
public:
    SchurOperator(std::shared_ptr<const SchurBlocks> blocks, double rho, SolverConfig cfg)
        : blocks_(std::move(blocks))
        , rho_(rho)
        , cfg_(cfg)
        , inner_iters_(std::make_shared<std::atomic<long>>(0))
    {
        if (!blocks_) {
            throw ConfigError("SchurOperator: missing blocks");
        }
        if (!(rho_ > 0.0) || !std::isfinite(rho_)) {
            throw ConfigError("SchurOperator: rho must be positive");
        }
        cfg_.validate();
        const auto& s = blocks_->space;
        const auto mi = static_cast<std::size_t>(s.m() - 2);
        const auto mass_i = assemble_mass_1d_interior(s.basis()).restricted(1, mi + 1);
        const auto stiff_i = assemble_stiffness_1d_interior(s.basis()).restricted(1, mi + 1);
        if (cfg_.inner_mode == InnerMode::fast_diagonalization) {
            fast_ = std::make_shared<FastDiagSolver>(s.dim(), stiff_i, mass_i);
        } else {
            inner_op_ = std::make_shared<KronSumOperator>(
                detail::h1_from_factors(s.dim(), TensorShape::cube(s.dim(), mi), mass_i, stiff_i));
            inner_precond_ = std::make_shared<DiagonalPreconditioner>(inner_op_->diagonal());
        }
    }

    [[nodiscard]] std::size_t rows() const noexcept { return blocks_->partition.boundary_ids().size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return rows(); }
    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] const SchurBlocks& blocks() const noexcept { return *blocks_; }
    [[nodiscard]] long inner_iterations() const noexcept { return inner_iters_->load(); }

    /// x = Ko_II^{-1} rhs on packed interior vectors.
    void solve_interior(std::span<const double> rhs, std::span<double> x) const
    {
        if (fast_) {
            fast_->solve(rhs, x);
            return;
        }
        SolverConfig inner;
        inner.rel_tol = cfg_.inner_rel_tol;
        inner.max_iters = std::max(cfg_.max_iters, 10000);
        auto res = cg(*inner_op_, rhs, inner, *inner_precond_);
        *inner_iters_ += res.report.iterations;
        if (!res.report.converged) {
            throw SolverFailure("SchurOperator: inner solve did not converge (rel. residual "
                                    + std::to_string(res.report.final_rel_residual) + ")",
                                res.report);
        }
        std::copy(res.x.begin(), res.x.end(), x.begin());
    }

    void apply(std::span<const double> v, std::span<double> out) const
    {
        const auto& b = *blocks_;
        const auto& p = b.partition;
        detail::require_size(v.size(), rows(), "SchurOperator::apply");
        detail::require_size(out.size(), rows(), "SchurOperator::apply");
        const auto u = p.embed(BlockSet::boundary, v);
        std::vector<double> w(u.size());
        std::vector<double> t(u.size());
        b.mass.apply(u, w);
        b.h1.apply(u, t);
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] += rho_ * t[i];
        }
        b.interior_h1.apply(u, t);
        const auto ti = p.restrict_to(BlockSet::interior, t);
        std::vector<double> z(ti.size());
        solve_interior(ti, z);
        const auto zf = p.embed(BlockSet::interior, z);
        b.interior_h1.apply(zf, t);
        const auto ids = p.boundary_ids();
        for (std::size_t k = 0; k < ids.size(); ++k) {
            out[k] = w[ids[k]] - rho_ * t[ids[k]];
        }
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> v) const
    {
        std::vector<double> out(rows());
        apply(v, out);
        return out;
    }

private:
    std::shared_ptr<const SchurBlocks> blocks_;
    double rho_;
    SolverConfig cfg_;
    std::shared_ptr<const FastDiagSolver> fast_;
    std::shared_ptr<const KronSumOperator> inner_op_;
    std::shared_ptr<const DiagonalPreconditioner> inner_precond_;
    std::shared_ptr<std::atomic<long>> inner_iters_;
};

[[nodiscard]] inline SchurOperator build_schur(std::shared_ptr<const SchurBlocks> blocks, double rho,
                                               const SolverConfig& cfg)
{
    return {std::move(blocks), rho, cfg};
}

[[nodiscard]] inline SchurOperator build_schur(const TensorSpace& space, double rho, const SolverConfig& cfg)
{
    return {std::make_shared<const SchurBlocks>(space), rho, cfg};
}

/// y_I = -Ko_II^{-1} Ko_IB y_B, returned as the full coefficient vector.
[[nodiscard]] inline std::vector<double> reconstruct_interior(const SchurOperator& schur, std::span<const double> y_b)
{
    const auto& b = schur.blocks();
    const auto& p = b.partition;
    auto y = p.embed(BlockSet::boundary, y_b);
    std::vector<double> t(y.size());
    b.interior_h1.apply(y, t);
    auto ti = p.restrict_to(BlockSet::interior, t);
    std::vector<double> yi(ti.size());
    schur.solve_interior(ti, yi);
    for (auto& v : yi) {
        v = -v;
    }
    p.embed(BlockSet::interior, yi, y);
    return y;
}

/// Row sums of M_BB as a diagonal preconditioner. Rows without boundary
/// trace fall back to h^(d-1).
[[nodiscard]] inline DiagonalPreconditioner lumped_mass_preconditioner(const BoundaryMassOperator& mass,
                                                                       const DofPartition& partition)
{
    const std::vector<double> ones(mass.size(), 1.0);
    std::vector<double> sums(mass.size());
    mass.apply(ones, sums);
    auto diag = partition.restrict_to(BlockSet::boundary, sums);
    const double fallback = std::pow(mass.h(), mass.dim() - 1);
    for (auto& v : diag) {
        if (v < 0.0) {
            throw NumericError("lumped_mass_preconditioner: negative row sum in boundary mass");
        }
        if (v == 0.0) {
            v = fallback;
        }
    }
    return DiagonalPreconditioner(std::move(diag));
}

} // namespace bvtrack
