#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bvtrack/error.hpp"
#include "bvtrack/krylov.hpp"
#include "bvtrack/multigrid.hpp"
#include "bvtrack/quadrature.hpp"
#include "bvtrack/schur.hpp"
#include "bvtrack/system.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack {

enum class TargetKind { cosine, quadratic, custom };
enum class Smoothness { h2_compatible, h1_incompatible, unknown };

/// Tracking target, evaluated on the closed cube.
struct Target {
    TargetKind kind = TargetKind::cosine;
    std::function<double(std::span<const double>)> evaluator;
    Smoothness smoothness = Smoothness::unknown;

    [[nodiscard]] double operator()(std::span<const double> x) const { return evaluator(x); }

    /// prod_i cos(pi x_i); zero normal derivative on every face.
    [[nodiscard]] static Target cosine()
    {
        return {TargetKind::cosine,
                [](std::span<const double> x) {
                    double v = 1.0;
                    for (double xi : x) {
                        v *= std::cos(std::numbers::pi * xi);
                    }
                    return v;
                },
                Smoothness::h2_compatible};
    }

    /// d=3: x1^2 - x2^2/2 - x3^2/2,  d=2: x1^2 - x2^2,  d=1: x1^2.
    [[nodiscard]] static Target quadratic(int d)
    {
        if (d < 1 || d > max_dim) {
            throw ConfigError("Target::quadratic: dimension must be 1, 2 or 3");
        }
        return {TargetKind::quadratic,
                [d](std::span<const double> x) {
                    if (d == 1) {
                        return x[0] * x[0];
                    }
                    if (d == 2) {
                        return x[0] * x[0] - x[1] * x[1];
                    }
                    return x[0] * x[0] - 0.5 * x[1] * x[1] - 0.5 * x[2] * x[2];
                },
                Smoothness::h1_incompatible};
    }

    [[nodiscard]] static Target custom(std::function<double(std::span<const double>)> f,
                                       Smoothness s = Smoothness::unknown)
    {
        return {TargetKind::custom, std::move(f), s};
    }
};

/// How the target enters the discrete problem on the boundary.
///  interpolated: the target is replaced face by face by its nodal
///  interpolant in the modified trace space; rhs and error then use exact
///  face mass products.
///  exact: rhs moments and the error integral use Gauss quadrature of the
///  target itself.
enum class TargetSampling { interpolated, exact };

enum class RhoKind { h, h32, h2, constant };

struct RhoRule {
    RhoKind kind = RhoKind::h2;
    double value = 0.0; ///< used by RhoKind::constant

    [[nodiscard]] double operator()(double h) const
    {
        switch (kind) {
        case RhoKind::h:
            return h;
        case RhoKind::h32:
            return h * std::sqrt(h);
        case RhoKind::h2:
            return h * h;
        case RhoKind::constant:
            return value;
        }
        return value;
    }
};

enum class SolverPath { schur_cg, schur_pcg, full_pcg };

inline constexpr std::array<SolverPath, 3> all_paths{SolverPath::full_pcg, SolverPath::schur_cg, SolverPath::schur_pcg};

[[nodiscard]] inline std::string to_string(SolverPath p)
{
    switch (p) {
    case SolverPath::schur_cg:
        return "schur-cg";
    case SolverPath::schur_pcg:
        return "schur-pcg";
    case SolverPath::full_pcg:
        return "full-pcg";
    }
    return "?";
}

struct OcpConfig {
    int d = 3;
    int level = 1;
    RhoRule rho{};
    Target target = Target::cosine();
    SolverPath path = SolverPath::schur_cg;
    SolverConfig solver{};
    TargetSampling sampling = TargetSampling::interpolated;
    int quad_order = 5;

    void validate() const
    {
        if (d < 1 || d > max_dim) {
            throw ConfigError("OcpConfig: dimension must be 1, 2 or 3");
        }
        if (level < 1) {
            throw ConfigError("OcpConfig: level must be >= 1");
        }
        if (!target.evaluator) {
            throw ConfigError("OcpConfig: target has no evaluator");
        }
        if (quad_order < 5 || quad_order > 10) {
            throw ConfigError("OcpConfig: quadrature order must be in 5..10");
        }
        solver.validate();
    }
};

struct StateSolution {
    std::vector<double> coeffs;
    OcpConfig config;
    SolveReport report;
    double rho = 0.0;
    double h = 0.0;
    double full_rel_residual = 0.0; ///< ||rhs - (M_Gamma + rho A) y|| / ||rhs||
};

namespace detail {

// Face-wise nodal samples of the target, one slice per face: node r of a
// face slice sits at the pinned coordinate and the 1D nodes x_1..x_m.
inline std::vector<std::vector<double>> face_samples(const TensorSpace& space, const BoundaryMassOperator& mass,
                                                     const Target& target)
{
    const int d = space.dim();
    const auto m = static_cast<std::size_t>(space.m());
    std::vector<std::vector<double>> out;
    std::array<double, max_dim> x{};
    for (const auto& face : mass.faces()) {
        std::vector<double> vals(face.dof_indices.size());
        for (std::size_t r = 0; r < vals.size(); ++r) {
            std::size_t rest = r;
            for (int k = 0; k < d; ++k) {
                if (k == face.fixed_dim) {
                    x[static_cast<std::size_t>(k)] = face.fixed_index == 0 ? 0.0 : 1.0;
                    continue;
                }
                x[static_cast<std::size_t>(k)] = space.basis().node(static_cast<int>(rest % m));
                rest /= m;
            }
            vals[r] = target(std::span<const double>(x.data(), static_cast<std::size_t>(d)));
        }
        out.push_back(std::move(vals));
    }
    return out;
}

// Quadrature over one face: f receives the (d-1) in-face coordinates.
inline std::function<double(std::span<const double>)> face_restriction(const BoundaryFace& face, int d,
                                                                       const Target& target)
{
    const double side = face.fixed_index == 0 ? 0.0 : 1.0;
    return [&target, side, d, k = face.fixed_dim](std::span<const double> y) {
        std::array<double, max_dim> x{};
        int j = 0;
        for (int i = 0; i < d; ++i) {
            x[static_cast<std::size_t>(i)] = i == k ? side : y[static_cast<std::size_t>(j++)];
        }
        return target(std::span<const double>(x.data(), static_cast<std::size_t>(d)));
    };
}

} // namespace detail

/// Boundary load vector <ybar, phi_k>_{L2(Gamma)}; zero at strict-interior dofs.
[[nodiscard]] inline std::vector<double> assemble_boundary_rhs(const Target& target, const TensorSpace& space,
                                                               const QuadratureRule& quad,
                                                               TargetSampling sampling = TargetSampling::interpolated)
{
    if (quad.size() < 5) {
        throw ConfigError("assemble_boundary_rhs: quadrature with at least 5 points required");
    }
    const BoundaryMassOperator mass(space);
    std::vector<double> rhs(space.total_dofs(), 0.0);
    if (sampling == TargetSampling::interpolated) {
        auto samples = detail::face_samples(space, mass, target);
        for (std::size_t fi = 0; fi < samples.size(); ++fi) {
            const auto& face = mass.faces()[fi];
            mass.apply_face_mass(face, samples[fi]);
            for (std::size_t r = 0; r < samples[fi].size(); ++r) {
                rhs[face.dof_indices[r]] += samples[fi][r];
            }
        }
        return rhs;
    }
    const auto g = detail::grid_sampling(space.basis(), quad);
    for (const auto& face : mass.faces()) {
        const auto b = detail::tensor_moments(space.dim() - 1, g, detail::face_restriction(face, space.dim(), target));
        for (std::size_t r = 0; r < b.size(); ++r) {
            rhs[face.dof_indices[r]] += b[r];
        }
    }
    return rhs;
}

/// ||y_h - ybar||_{L2(Gamma)}, with ybar sampled as configured.
[[nodiscard]] inline double boundary_l2_error(std::span<const double> coeffs, const TensorSpace& space,
                                              const Target& target, const QuadratureRule& quad,
                                              TargetSampling sampling = TargetSampling::interpolated)
{
    detail::require_size(coeffs.size(), space.total_dofs(), "boundary_l2_error");
    if (quad.size() < 5) {
        throw ConfigError("boundary_l2_error: quadrature with at least 5 points required");
    }
    const BoundaryMassOperator mass(space);
    double e2 = 0.0;
    if (sampling == TargetSampling::interpolated) {
        const auto samples = detail::face_samples(space, mass, target);
        for (std::size_t fi = 0; fi < samples.size(); ++fi) {
            const auto& face = mass.faces()[fi];
            std::vector<double> diff(samples[fi].size());
            for (std::size_t r = 0; r < diff.size(); ++r) {
                diff[r] = coeffs[face.dof_indices[r]] - samples[fi][r];
            }
            auto mdiff = diff;
            mass.apply_face_mass(face, mdiff);
            e2 += tensor::dot(diff, mdiff);
        }
        return std::sqrt(std::max(e2, 0.0));
    }
    const int dims = space.dim() - 1;
    const auto g = detail::grid_sampling(space.basis(), quad);
    const std::size_t npts = g.points.size();
    std::array<double, max_dim> y{};
    for (const auto& face : mass.faces()) {
        std::vector<double> slice(face.dof_indices.size());
        for (std::size_t r = 0; r < slice.size(); ++r) {
            slice[r] = coeffs[face.dof_indices[r]];
        }
        const auto vals = detail::tensor_grid_values(dims, g, slice);
        const auto f = detail::face_restriction(face, space.dim(), target);
        for (std::size_t q = 0; q < vals.size(); ++q) {
            std::size_t rest = q;
            double w = 1.0;
            for (int k = 0; k < dims; ++k) {
                const std::size_t i = rest % npts;
                rest /= npts;
                y[static_cast<std::size_t>(k)] = g.points[i];
                w *= g.weights[i];
            }
            const double diff = vals[q] - f(std::span<const double>(y.data(), static_cast<std::size_t>(dims)));
            e2 += w * diff * diff;
        }
    }
    return std::sqrt(e2);
}

/// ||ybar||_{L2(Gamma)} in the same sampling as the error.
[[nodiscard]] inline double boundary_target_norm(const TensorSpace& space, const Target& target,
                                                 const QuadratureRule& quad,
                                                 TargetSampling sampling = TargetSampling::interpolated)
{
    const std::vector<double> zero(space.total_dofs(), 0.0);
    return boundary_l2_error(zero, space, target, quad, sampling);
}

struct ControlRecovery {
    std::vector<double> functional; ///< f = A_h y, the control as a functional on Y_h
    double dual_norm = 0.0;         ///< sqrt(y^T A_h y) = ||y||_{H1}
};

[[nodiscard]] inline ControlRecovery recover_control(const TensorSpace& space, std::span<const double> coeffs)
{
    detail::require_size(coeffs.size(), space.total_dofs(), "recover_control");
    ControlRecovery c;
    c.functional = build_h1_operator(space).apply(coeffs);
    c.dual_norm = std::sqrt(std::max(tensor::dot(coeffs, c.functional), 0.0));
    return c;
}

namespace detail {

inline CgResult solve_full(const TensorSpace& space, const GradientSystemOperator& op, std::span<const double> rhs,
                           const SolverConfig& cfg)
{
    switch (cfg.preconditioner) {
    case PreconditionerKind::none:
        return cg(op, rhs, cfg);
    case PreconditionerKind::jacobi:
        return cg(op, rhs, cfg, DiagonalPreconditioner(op.diagonal()));
    case PreconditionerKind::gmg_vcycle:
        return cg(op, rhs, cfg, GmgVCycle::for_space(space, op.rho(), cfg.gmg));
    case PreconditionerKind::lumped_boundary_mass:
        break;
    }
    throw ConfigError("solve_ocp: the lumped boundary mass preconditioner applies to the Schur system only");
}

} // namespace detail

/// Solves  (M_Gamma + rho A_h) y = ybar_h  by the configured path.
[[nodiscard]] inline StateSolution solve_ocp(const OcpConfig& cfg)
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto space = TensorSpace::at_level(cfg.d, cfg.level);
    StateSolution sol;
    sol.config = cfg;
    sol.h = space.h();
    sol.rho = cfg.rho(space.h());
    if (!(sol.rho > 0.0) || !std::isfinite(sol.rho)) {
        throw ConfigError("solve_ocp: rho must be positive");
    }
    const auto rhs = assemble_boundary_rhs(cfg.target, space, gauss_rule(cfg.quad_order), cfg.sampling);
    const std::string where = "solve_ocp(" + to_string(cfg.path) + ", level " + std::to_string(cfg.level) + ")";

    if (cfg.path == SolverPath::full_pcg) {
        const GradientSystemOperator op(space, sol.rho);
        auto res = detail::solve_full(space, op, rhs, cfg.solver);
        sol.coeffs = std::move(res.x);
        sol.report = res.report;
    } else {
        auto blocks = std::make_shared<const SchurBlocks>(space);
        const auto schur = build_schur(blocks, sol.rho, cfg.solver);
        const auto rhs_b = blocks->partition.restrict_to(BlockSet::boundary, rhs);
        CgResult res = cfg.path == SolverPath::schur_pcg
                           ? cg(schur, rhs_b, cfg.solver, lumped_mass_preconditioner(blocks->mass, blocks->partition))
                           : cg(schur, rhs_b, cfg.solver);
        sol.report = res.report;
        sol.report.inner_iterations_total = schur.inner_iterations();
        if (sol.report.converged) {
            sol.coeffs = reconstruct_interior(schur, res.x);
        } else {
            sol.coeffs = blocks->partition.embed(BlockSet::boundary, res.x);
        }
    }
    sol.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!sol.report.converged) {
        throw SolverFailure(where + ": no convergence after " + std::to_string(sol.report.iterations)
                                + " iterations (rel. residual " + std::to_string(sol.report.final_rel_residual) + ")",
                            sol.report);
    }
    const double bnorm = tensor::norm2(rhs);
    if (bnorm > 0.0) {
        const GradientSystemOperator op(space, sol.rho);
        auto r = op.apply(sol.coeffs);
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] = rhs[i] - r[i];
        }
        sol.full_rel_residual = tensor::norm2(r) / bnorm;
    }
    return sol;
}

[[nodiscard]] inline double eoc(double coarse_error, double fine_error) { return std::log2(coarse_error / fine_error); }

struct ConvergenceRow {
    int level = 0;
    std::size_t dofs = 0;
    double h = 0.0;
    std::optional<double> error;
    std::optional<double> eoc;
    std::optional<int> iters_full_pcg;
    std::optional<int> iters_scg;
    std::optional<int> iters_pscg;
    std::vector<std::pair<SolverPath, double>> path_errors;
    std::string failure; ///< empty unless some path failed
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
};

namespace detail {

inline ConvergenceRow study_level(OcpConfig cfg, int level, std::span<const SolverPath> paths)
{
    cfg.level = level;
    const auto space = TensorSpace::at_level(cfg.d, level);
    ConvergenceRow row;
    row.level = level;
    row.dofs = space.total_dofs();
    row.h = space.h();
    const auto quad = gauss_rule(cfg.quad_order);
    for (const auto path : paths) {
        cfg.path = path;
        try {
            const auto sol = solve_ocp(cfg);
            const double err = boundary_l2_error(sol.coeffs, space, cfg.target, quad, cfg.sampling);
            row.path_errors.emplace_back(path, err);
            if (!row.error) {
                row.error = err;
            }
            const int its = sol.report.iterations;
            switch (path) {
            case SolverPath::full_pcg:
                row.iters_full_pcg = its;
                break;
            case SolverPath::schur_cg:
                row.iters_scg = its;
                break;
            case SolverPath::schur_pcg:
                row.iters_pscg = its;
                break;
            }
        } catch (const Error& e) {
            if (!row.failure.empty()) {
                row.failure += "; ";
            }
            row.failure += to_string(path) + ": " + e.what();
        }
    }
    return row;
}

} // namespace detail

/// One row per level; levels may run concurrently on `jobs` threads. A
/// failing path is recorded in its row and the study continues.
[[nodiscard]] inline ConvergenceTable run_convergence_study(const OcpConfig& base, std::span<const int> levels,
                                                            std::span<const SolverPath> paths, int jobs = 1)
{
    base.validate();
    if (levels.empty()) {
        throw ConfigError("run_convergence_study: no levels");
    }
    if (paths.empty()) {
        throw ConfigError("run_convergence_study: no solver paths");
    }
    for (std::size_t i = 1; i < levels.size(); ++i) {
        if (levels[i] <= levels[i - 1]) {
            throw ConfigError("run_convergence_study: levels must be increasing");
        }
    }
    ConvergenceTable table;
    table.rows.resize(levels.size());
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, levels.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < levels.size(); ++i) {
            table.rows[i] = detail::study_level(base, levels[i], paths);
        }
    } else {
        // Largest levels first so the long solves start early.
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < levels.size(); k = next++) {
                    const std::size_t i = levels.size() - 1 - k;
                    table.rows[i] = detail::study_level(base, levels[i], paths);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        const auto& prev = table.rows[i - 1];
        auto& cur = table.rows[i];
        if (prev.error && cur.error && cur.level == prev.level + 1 && *cur.error > 0.0) {
            cur.eoc = eoc(*prev.error, *cur.error);
        }
    }
    return table;
}

struct RhoSweepRecord {
    double rho = 0.0;
    double error = 0.0;       ///< ||y - ybar||_{L2(Gamma)}
    double h1_norm = 0.0;     ///< ||y||_{H1}
    double target_norm = 0.0; ///< ||ybar||_{L2(Gamma)}
    int iterations = 0;
};

/// Solves at one level for each rho (positive, descending).
[[nodiscard]] inline std::vector<RhoSweepRecord> rho_sweep(const OcpConfig& cfg, std::span<const double> rhos)
{
    cfg.validate();
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        if (!(rhos[i] > 0.0) || (i > 0 && rhos[i] >= rhos[i - 1])) {
            throw ConfigError("rho_sweep: rho values must be positive and strictly descending");
        }
    }
    const auto space = TensorSpace::at_level(cfg.d, cfg.level);
    const auto quad = gauss_rule(cfg.quad_order);
    const double tnorm = boundary_target_norm(space, cfg.target, quad, cfg.sampling);
    std::vector<RhoSweepRecord> out;
    for (const double rho : rhos) {
        OcpConfig c = cfg;
        c.rho = RhoRule{RhoKind::constant, rho};
        const auto sol = solve_ocp(c);
        RhoSweepRecord rec;
        rec.rho = rho;
        rec.error = boundary_l2_error(sol.coeffs, space, cfg.target, quad, cfg.sampling);
        rec.h1_norm = recover_control(space, sol.coeffs).dual_norm;
        rec.target_norm = tnorm;
        rec.iterations = sol.report.iterations;
        out.push_back(rec);
    }
    return out;
}

/// Least-squares slope of log(error) against log(rho).
[[nodiscard]] inline double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    detail::require_size(y.size(), x.size(), "loglog_slope");
    if (x.size() < 2) {
        throw ConfigError("loglog_slope: need at least two points");
    }
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Pre-saturation window of a sweep: rho <= rho_max and error at least
/// `margin` times the error of the smallest rho. Returns the fitted slope
/// and the number of points used.
struct SweepFit {
    double slope = 0.0;
    std::size_t points = 0;
};

[[nodiscard]] inline SweepFit fit_sweep_slope(std::span<const RhoSweepRecord> recs, double rho_max = 1.0 / 16.0,
                                              double margin = 10.0)
{
    if (recs.empty()) {
        throw ConfigError("fit_sweep_slope: empty sweep");
    }
    const double floor = recs.back().error;
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& r : recs) {
        if (r.rho <= rho_max && r.error >= margin * floor) {
            x.push_back(r.rho);
            y.push_back(r.error);
        }
    }
    return {loglog_slope(x, y), x.size()};
}

} // namespace bvtrack
