#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bvtrack/error.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack {

enum class InnerMode { fast_diagonalization, inner_pcg };

enum class PreconditionerKind { none, lumped_boundary_mass, jacobi, gmg_vcycle };

/// Grid transfer of the multigrid hierarchy.
///  interior_aligned: nodal interpolation after mapping the fine interior
///  box (h_f, 1-h_f) affinely onto the coarse one (h_c, 1-h_c).
///  nested: plain nodal interpolation between the nested modified spaces.
enum class GmgTransfer { interior_aligned, nested };

/// Smoother of the multigrid hierarchy.
///  face_block_jacobi: damped block Jacobi; the dofs of each face that do
///  not lie on an edge form one block, every other dof is its own block.
///  jacobi: damped pointwise Jacobi.
enum class GmgSmoother { face_block_jacobi, jacobi };

struct GmgOptions {
    double damping = 0.8;
    int pre_smooth = 1;
    int post_smooth = 1;
    GmgTransfer transfer = GmgTransfer::interior_aligned;
    GmgSmoother smoother = GmgSmoother::face_block_jacobi;
};

struct SolverConfig {
    double rel_tol = 1e-9;
    int max_iters = 1000;
    double inner_rel_tol = 1e-10;
    InnerMode inner_mode = InnerMode::fast_diagonalization;
    /// Preconditioner of the full-system path; the Schur paths pick their own.
    PreconditionerKind preconditioner = PreconditionerKind::gmg_vcycle;
    GmgOptions gmg{};

    void validate() const
    {
        if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
            throw ConfigError("SolverConfig: rel_tol must lie in (0,1)");
        }
        if (max_iters < 1) {
            throw ConfigError("SolverConfig: max_iters must be >= 1");
        }
        if (!(inner_rel_tol > 0.0 && inner_rel_tol < 1.0)) {
            throw ConfigError("SolverConfig: inner_rel_tol must lie in (0,1)");
        }
        if (!(gmg.damping > 0.0 && gmg.damping <= 1.0) || gmg.pre_smooth < 0 || gmg.post_smooth < 0) {
            throw ConfigError("SolverConfig: invalid multigrid smoother settings");
        }
    }
};

struct SolveReport {
    int iterations = 0;
    double final_rel_residual = 0.0;
    bool converged = false;
    long inner_iterations_total = 0;
    double wall_time = 0.0; ///< seconds
};

/// Raised when a solve ends without reaching its tolerance.
class SolverFailure : public Error {
public:
    SolverFailure(const std::string& what, SolveReport report)
        : Error(what)
        , report_(report)
    {
    }
    [[nodiscard]] const SolveReport& report() const noexcept { return report_; }

private:
    SolveReport report_;
};

struct IdentityPreconditioner {
    void apply(std::span<const double> r, std::span<double> z) const { std::copy(r.begin(), r.end(), z.begin()); }
};

/// z = D^{-1} r
class DiagonalPreconditioner {
public:
    explicit DiagonalPreconditioner(std::vector<double> diag)
        : inv_(std::move(diag))
    {
        for (auto& d : inv_) {
            if (!(d > 0.0)) {
                throw NumericError("DiagonalPreconditioner: nonpositive diagonal entry");
            }
            d = 1.0 / d;
        }
    }

    void apply(std::span<const double> r, std::span<double> z) const
    {
        detail::require_size(r.size(), inv_.size(), "DiagonalPreconditioner::apply");
        for (std::size_t i = 0; i < r.size(); ++i) {
            z[i] = inv_[i] * r[i];
        }
    }

    [[nodiscard]] std::span<const double> inverse_diagonal() const noexcept { return inv_; }

private:
    std::vector<double> inv_;
};

template <class P>
concept Preconditioner = requires(const P& p, std::span<const double> r, std::span<double> z) { p.apply(r, z); };

struct CgResult {
    std::vector<double> x;
    SolveReport report;
};

/// Observer called after every iteration with (iteration, current iterate).
using CgObserver = std::function<void(int, std::span<const double>)>;

/// Preconditioned conjugate gradients from a zero initial guess. Stops on
/// the unpreconditioned Euclidean relative residual ||b - Ax|| / ||b||.
template <LinearMap Op, Preconditioner P = IdentityPreconditioner>
[[nodiscard]] CgResult cg(const Op& op, std::span<const double> rhs, const SolverConfig& cfg, const P& precond = {},
                          const CgObserver& observer = {})
{
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = op.rows();
    detail::require_size(rhs.size(), n, "cg");
    CgResult result;
    result.x.assign(n, 0.0);
    auto& rep = result.report;

    const double bnorm = tensor::norm2(rhs);
    if (!std::isfinite(bnorm)) {
        throw DivergenceError("cg: right-hand side is not finite");
    }
    if (bnorm == 0.0) {
        rep.converged = true;
        return result;
    }

    std::vector<double> r(rhs.begin(), rhs.end());
    std::vector<double> z(n);
    std::vector<double> p(n);
    std::vector<double> q(n);
    precond.apply(r, z);
    p = z;
    double rz = tensor::dot(r, z);
    double rel = 1.0;

    for (int k = 1; k <= cfg.max_iters; ++k) {
        op.apply(p, q);
        const double pq = tensor::dot(p, q);
        if (std::isnan(pq) || std::isinf(pq)) {
            throw DivergenceError("cg: non-finite curvature at iteration " + std::to_string(k));
        }
        if (pq <= 0.0) {
            throw NotSpdError("cg: p^T A p <= 0 at iteration " + std::to_string(k));
        }
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) {
            result.x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = tensor::norm2(r) / bnorm;
        if (!std::isfinite(rel)) {
            throw DivergenceError("cg: residual became non-finite at iteration " + std::to_string(k));
        }
        rep.iterations = k;
        if (observer) {
            observer(k, result.x);
        }
        if (rel <= cfg.rel_tol) {
            rep.converged = true;
            break;
        }
        precond.apply(r, z);
        const double rz_new = tensor::dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = z[i] + beta * p[i];
        }
    }
    rep.final_rel_residual = rel;
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace bvtrack
