#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace bvtrack;
using oracle_test::vec;

namespace {

LinearOperator identity(std::size_t n)
{
    return {n, n, [](std::span<const double> x, std::span<double> y) { std::copy(x.begin(), x.end(), y.begin()); }};
}

Eigen::MatrixXd restrict_dense(const Eigen::MatrixXd& a, std::span<const std::size_t> r, std::span<const std::size_t> c)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < r.size(); ++i) {
        for (std::size_t j = 0; j < c.size(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                = a(static_cast<Eigen::Index>(r[i]), static_cast<Eigen::Index>(c[j]));
        }
    }
    return out;
}

double h1_distance(const TensorSpace& s, std::span<const double> a, std::span<const double> b)
{
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a[i] - b[i];
    }
    return std::sqrt(tensor::dot(d, build_h1_operator(s).apply(d)));
}

double rel_diff(std::span<const double> a, std::span<const double> b)
{
    return (vec(a) - vec(b)).norm() / vec(b).norm();
}

OcpConfig config(int d, int level, const Target& target, SolverPath path, RhoRule rho = {RhoKind::h, 0.0})
{
    OcpConfig c;
    c.d = d;
    c.level = level;
    c.target = target;
    c.path = path;
    c.rho = rho;
    return c;
}

} // namespace

TEST(Cg, ZeroRhs)
{
    SolverConfig cfg;
    const auto res = cg(identity(5), std::vector<double>(5, 0.0), cfg);
    EXPECT_EQ(res.report.iterations, 0);
    EXPECT_TRUE(res.report.converged);
    for (const double v : res.x) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Cg, IdentityInOneIteration)
{
    SolverConfig cfg;
    const std::vector<double> b{1.0, -2.0, 3.0, 0.5};
    const auto res = cg(identity(4), b, cfg);
    EXPECT_EQ(res.report.iterations, 1);
    EXPECT_TRUE(res.report.converged);
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_NEAR(res.x[i], b[i], 1e-15);
    }
}

TEST(Cg, FullSystemMatchesDenseLu)
{
    const TensorSpace s(2, 8);
    const double rho = s.h();
    const GradientSystemOperator op(s, rho);
    const auto rhs = assemble_boundary_rhs(Target::cosine(), s, gauss_rule(5));
    SolverConfig cfg;
    const auto res = cg(op, rhs, cfg);
    ASSERT_TRUE(res.report.converged);
    EXPECT_LE(res.report.final_rel_residual, cfg.rel_tol);
    const auto a = oracle::materialize(op);
    const auto x = oracle::dense_lu_solve(a, rhs);
    const Eigen::VectorXd e = vec(res.x) - vec(x);
    const double anorm = std::sqrt(e.dot(a * e));
    EXPECT_LE(anorm, 1e-8 * std::sqrt(vec(x).dot(a * vec(x))));
}

TEST(Cg, EnergyErrorMonotone)
{
    for (int d : {1, 2}) {
        const TensorSpace s(d, 8);
        const GradientSystemOperator op(s, 1e-2);
        const auto a = oracle::materialize(op);
        const auto rhs = assemble_boundary_rhs(Target::quadratic(d), s, gauss_rule(5));
        const Eigen::VectorXd x = vec(oracle::dense_lu_solve(a, rhs));
        SolverConfig cfg;
        cfg.rel_tol = 1e-12;
        const auto check = [&](const auto& precond) {
            std::vector<double> errs{std::sqrt(x.dot(a * x))};
            const auto observer = [&](int, std::span<const double> it) {
                const Eigen::VectorXd e = vec(it) - x;
                errs.push_back(std::sqrt(e.dot(a * e)));
            };
            (void)cg(op, rhs, cfg, precond, observer);
            EXPECT_GT(errs.size(), 3u);
            for (std::size_t i = 1; i < errs.size(); ++i) {
                EXPECT_LE(errs[i], errs[i - 1] * (1 + 1e-12) + 1e-14) << "d=" << d << " it=" << i;
            }
        };
        check(IdentityPreconditioner{});
        check(DiagonalPreconditioner(op.diagonal()));
    }
}

TEST(Cg, Failures)
{
    SolverConfig cfg;
    const LinearOperator neg{3, 3, [](std::span<const double> x, std::span<double> y) {
                                 for (std::size_t i = 0; i < x.size(); ++i) {
                                     y[i] = -x[i];
                                 }
                             }};
    EXPECT_THROW((void)cg(neg, std::vector<double>{1, 1, 1}, cfg), NotSpdError);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW((void)cg(identity(2), std::vector<double>{nan, 1.0}, cfg), DivergenceError);
    EXPECT_THROW((void)cg(identity(2), std::vector<double>{1.0}, cfg), DimensionError);

    const TensorSpace s(2, 16);
    const GradientSystemOperator op(s, 1e-3);
    cfg.max_iters = 2;
    const auto res = cg(op, assemble_boundary_rhs(Target::cosine(), s, gauss_rule(5)), cfg);
    EXPECT_FALSE(res.report.converged);
    EXPECT_EQ(res.report.iterations, 2);
    EXPECT_GT(res.report.final_rel_residual, cfg.rel_tol);
}

TEST(Cg, ConfigValidation)
{
    SolverConfig cfg;
    cfg.rel_tol = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.rel_tol = 1e-9;
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(DenseLu, Examples)
{
    EXPECT_EQ(oracle::dense_lu_solve(Eigen::MatrixXd::Identity(3, 3), std::vector<double>{1, 2, 3}),
              (std::vector<double>{1, 2, 3}));
    Eigen::MatrixXd a(2, 2);
    a << 2, 1, 1, 2;
    const auto x = oracle::dense_lu_solve(a, std::vector<double>{3, 3});
    EXPECT_NEAR(x[0], 1.0, 1e-15);
    EXPECT_NEAR(x[1], 1.0, 1e-15);

    std::mt19937_64 rng(9);
    Eigen::MatrixXd r(50, 50);
    for (Eigen::Index i = 0; i < 50; ++i) {
        for (Eigen::Index j = 0; j < 50; ++j) {
            r(i, j) = std::uniform_real_distribution<double>(-1, 1)(rng);
        }
    }
    const Eigen::MatrixXd spd = r * r.transpose() + 50 * Eigen::MatrixXd::Identity(50, 50);
    const auto b = oracle_test::random_vector(50, rng);
    const auto y = oracle::dense_lu_solve(spd, b);
    EXPECT_LE((spd * vec(y) - vec(b)).norm() / vec(b).norm(), 1e-11);

    EXPECT_THROW((void)oracle::dense_lu_solve(Eigen::MatrixXd::Zero(2, 2), std::vector<double>{1, 1}), SingularMatrixError);
}

TEST(Schur, MatchesDenseSchurComplement)
{
    const TensorSpace s(2, 8);
    const double rho = s.h();
    const auto p = partition_dofs(s);
    const auto ref = oracle_test::assemble_2d(s.basis());
    const auto bi = p.boundary_ids();
    const auto ii = p.interior_ids();
    const Eigen::MatrixXd layer = ref.h1 - ref.interior_h1;
    const Eigen::MatrixXd kii = restrict_dense(ref.interior_h1, ii, ii);
    const Eigen::MatrixXd kib = restrict_dense(ref.interior_h1, ii, bi);
    const Eigen::MatrixXd sref = restrict_dense(ref.boundary, bi, bi)
                                 + rho * (restrict_dense(layer, bi, bi) + restrict_dense(ref.interior_h1, bi, bi)
                                          - kib.transpose() * kii.ldlt().solve(kib));
    for (const auto mode : {InnerMode::fast_diagonalization, InnerMode::inner_pcg}) {
        SolverConfig cfg;
        cfg.inner_mode = mode;
        const auto schur = build_schur(s, rho, cfg);
        const auto sd = oracle::materialize(schur);
        EXPECT_LT((sd - sref).cwiseAbs().maxCoeff() / sref.cwiseAbs().maxCoeff(), 1e-10);
        if (mode == InnerMode::inner_pcg) {
            EXPECT_GT(schur.inner_iterations(), 0);
        }
    }
}

TEST(Schur, BoundedBelowByBoundaryMass)
{
    std::mt19937_64 rng(12);
    for (int d : {2, 3}) {
        const TensorSpace s(d, 8);
        const auto p = partition_dofs(s);
        const auto schur = build_schur(s, s.h(), SolverConfig{});
        const auto mbb = extract_block(build_boundary_mass(s), p, BlockSet::boundary, BlockSet::boundary);
        for (int k = 0; k < 10; ++k) {
            auto v = oracle_test::random_vector(schur.rows(), rng);
            const double mv = tensor::dot(v, mbb.apply(v));
            for (auto& x : v) {
                x /= std::sqrt(mv);
            }
            EXPECT_GE(tensor::dot(v, schur.apply(v)), 1.0 - 1e-12);
        }
    }
}

TEST(Schur, VanishingRhoGivesBoundaryMass)
{
    const TensorSpace s(2, 8);
    const auto p = partition_dofs(s);
    const auto schur = build_schur(s, 1e-16, SolverConfig{});
    const auto mbb = extract_block(build_boundary_mass(s), p, BlockSet::boundary, BlockSet::boundary);
    std::mt19937_64 rng(13);
    const auto v = oracle_test::random_vector(schur.rows(), rng);
    EXPECT_LE(rel_diff(schur.apply(v), mbb.apply(v)), 1e-12);
}

TEST(Schur, RejectsBadInput)
{
    EXPECT_THROW((void)build_schur(TensorSpace(2, 8), 0.0, SolverConfig{}), ConfigError);
    EXPECT_THROW((void)build_schur(TensorSpace(2, 8), -1.0, SolverConfig{}), ConfigError);
    EXPECT_THROW(SchurOperator(nullptr, 1.0, SolverConfig{}), ConfigError);
    const auto schur = build_schur(TensorSpace(2, 8), 0.1, SolverConfig{});
    EXPECT_THROW((void)schur.apply(std::vector<double>(3)), DimensionError);
}

TEST(Reconstruct, ZeroBoundaryGivesZero)
{
    const auto schur = build_schur(TensorSpace(3, 8), 0.1, SolverConfig{});
    for (const double v : reconstruct_interior(schur, std::vector<double>(schur.rows(), 0.0))) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Reconstruct, FullResidualAfterSchurSolve)
{
    const TensorSpace s(2, 8);
    const double rho = s.h();
    SolverConfig cfg;
    const auto blocks = std::make_shared<const SchurBlocks>(s);
    const auto schur = build_schur(blocks, rho, cfg);
    const auto rhs = assemble_boundary_rhs(Target::cosine(), s, gauss_rule(5));
    const auto yb = cg(schur, blocks->partition.restrict_to(BlockSet::boundary, rhs), cfg);
    const auto y = reconstruct_interior(schur, yb.x);
    const GradientSystemOperator op(s, rho);
    const auto r = op.apply(y);
    EXPECT_LE(rel_diff(r, rhs), 5e-8);
}

TEST(Reconstruct, OneDimensionMatchesDenseLu)
{
    const TensorSpace s(1, 8);
    const double rho = s.h();
    SolverConfig cfg;
    const auto blocks = std::make_shared<const SchurBlocks>(s);
    const auto schur = build_schur(blocks, rho, cfg);
    const auto rhs = assemble_boundary_rhs(Target::quadratic(1), s, gauss_rule(5));
    const auto yb = cg(schur, blocks->partition.restrict_to(BlockSet::boundary, rhs), cfg);
    const auto y = reconstruct_interior(schur, yb.x);
    const auto x = oracle::dense_lu_solve(oracle::materialize(GradientSystemOperator(s, rho)), rhs);
    EXPECT_LE((vec(y) - vec(x)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LumpedMass, OneDimension)
{
    const TensorSpace s(1, 8);
    const auto pre = lumped_mass_preconditioner(build_boundary_mass(s), partition_dofs(s));
    const auto inv = pre.inverse_diagonal();
    ASSERT_EQ(inv.size(), 2u);
    EXPECT_EQ(inv[0], 1.0);
    EXPECT_EQ(inv[1], 1.0);
}

TEST(LumpedMass, ScalesLikeH)
{
    double lo = 1e300;
    double hi = 0.0;
    for (int n : {8, 16, 32}) {
        const TensorSpace s(2, n);
        const auto pre = lumped_mass_preconditioner(build_boundary_mass(s), partition_dofs(s));
        double nlo = 1e300;
        double nhi = 0.0;
        for (const double inv : pre.inverse_diagonal()) {
            EXPECT_GT(inv, 0.0);
            nlo = std::min(nlo, 1.0 / inv / s.h());
            nhi = std::max(nhi, 1.0 / inv / s.h());
        }
        if (n == 8) {
            lo = nlo;
            hi = nhi;
        }
        EXPECT_NEAR(nlo, lo, 1e-12);
        EXPECT_NEAR(nhi, hi, 1e-12);
    }
    EXPECT_GE(lo, 1.0 - 1e-12);
    EXPECT_LE(hi, 3.0 + 1e-12);
}

TEST(LumpedMass, SpectrallyEquivalentToBoundaryMass)
{
    const TensorSpace s(2, 8);
    const auto p = partition_dofs(s);
    const auto pre = lumped_mass_preconditioner(build_boundary_mass(s), p);
    const auto mbb = oracle::materialize(extract_block(build_boundary_mass(s), p, BlockSet::boundary, BlockSet::boundary));
    Eigen::VectorXd lumped(mbb.rows());
    for (Eigen::Index i = 0; i < lumped.size(); ++i) {
        lumped(i) = 1.0 / pre.inverse_diagonal()[static_cast<std::size_t>(i)];
    }
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(mbb, Eigen::MatrixXd(lumped.asDiagonal()));
    EXPECT_GE(es.eigenvalues().minCoeff(), 1.0 / 3.0);
    EXPECT_LE(es.eigenvalues().maxCoeff(), 3.0);
}

TEST(FastDiag, Residuals)
{
    std::mt19937_64 rng(21);
    for (const auto& [d, tol] : {std::pair{1, 1e-12}, std::pair{2, 1e-12}, std::pair{3, 1e-11}}) {
        const TensorSpace s(d, 8);
        const auto p = partition_dofs(s);
        const auto kii = extract_block(build_interior_h1_operator(s), p, BlockSet::interior, BlockSet::interior);
        const auto fd = FastDiagSolver::for_interior_block(s);
        ASSERT_EQ(fd.size(), kii.rows());
        const auto rhs = oracle_test::random_vector(kii.rows(), rng);
        const auto x = fd.solve(rhs);
        EXPECT_LE(rel_diff(kii.apply(x), rhs), tol) << d;

        const std::vector<double> one(kii.rows(), 1.0);
        const auto y = fast_diag_solve(fd, kii.apply(one));
        for (const double v : y) {
            EXPECT_NEAR(v, 1.0, 1e-11);
        }
    }
}

TEST(FastDiag, MatchesDenseSolveFromFactors)
{
    const TensorSpace s(3, 8);
    const auto mi = assemble_mass_1d_interior(s.basis()).restricted(1, 6);
    const auto ki = assemble_stiffness_1d_interior(s.basis()).restricted(1, 6);
    const auto fd = fast_diag_build(3, ki, mi);
    const auto m = oracle_test::dense(mi);
    const auto k = oracle_test::dense(ki);
    const Eigen::MatrixXd a = oracle_test::kron_dims({m, m, m}) + oracle_test::kron_dims({k, m, m})
                              + oracle_test::kron_dims({m, k, m}) + oracle_test::kron_dims({m, m, k});
    std::mt19937_64 rng(22);
    const auto rhs = oracle_test::random_vector(fd.size(), rng);
    const Eigen::VectorXd x = a.ldlt().solve(vec(rhs));
    EXPECT_LE((vec(fd.solve(rhs)) - x).norm() / x.norm(), 1e-12);
}

TEST(SpectralEquivalence, LevelStableBounds)
{
    double prev = 0.0;
    for (int n : {8, 16, 32}) {
        const TensorSpace s(2, n);
        const auto p = partition_dofs(s);
        const auto sd = oracle::materialize(build_schur(s, s.h(), SolverConfig{}));
        const auto mbb = oracle::materialize(extract_block(build_boundary_mass(s), p, BlockSet::boundary, BlockSet::boundary));
        const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sd, mbb);
        EXPECT_GE(es.eigenvalues().minCoeff(), 1.0 - 1e-9) << n;
        const double lmax = es.eigenvalues().maxCoeff();
        if (prev > 0.0) {
            EXPECT_LE(lmax, 1.1 * prev + 0.5) << n;
        }
        prev = lmax;
    }
}

TEST(SpectralEquivalence, LambdaMaxSaturates)
{
    std::vector<double> lmax;
    for (int n : {16, 32, 64, 128}) {
        const TensorSpace s(2, n);
        const auto p = partition_dofs(s);
        const auto sd = oracle::materialize(build_schur(s, s.h(), SolverConfig{}));
        const auto mbb = oracle::materialize(extract_block(build_boundary_mass(s), p, BlockSet::boundary, BlockSet::boundary));
        const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sd, mbb);
        EXPECT_GE(es.eigenvalues().minCoeff(), 1.0 - 1e-9) << n;
        lmax.push_back(es.eigenvalues().maxCoeff());
    }
    for (std::size_t i = 2; i < lmax.size(); ++i) {
        EXPECT_GE(lmax[i], lmax[i - 1]);
        EXPECT_LE(lmax[i] - lmax[i - 1], 0.5 * (lmax[i - 1] - lmax[i - 2]));
    }
    EXPECT_LE(lmax.back(), 20.0);
}

TEST(PathEquivalence, SchurFullAndDenseAgree)
{
    for (int d : {1, 2}) {
        for (int level : {2, 3}) {
            for (const auto& target : {Target::cosine(), Target::quadratic(d)}) {
                const auto s = TensorSpace::at_level(d, level);
                const auto rhs = assemble_boundary_rhs(target, s, gauss_rule(5));
                const auto lu = oracle::dense_lu_solve(oracle::materialize(GradientSystemOperator(s, s.h())), rhs);
                std::vector<std::vector<double>> sols;
                for (const auto path : all_paths) {
                    sols.push_back(solve_ocp(config(d, level, target, path)).coeffs);
                }
                sols.push_back(lu);
                for (std::size_t i = 0; i < sols.size(); ++i) {
                    for (std::size_t j = i + 1; j < sols.size(); ++j) {
                        EXPECT_LE(h1_distance(s, sols[i], sols[j]), 1e-7) << "d=" << d << " level=" << level;
                    }
                }
            }
        }
    }
}

TEST(PathEquivalence, InnerModeInvariance)
{
    for (const auto& [d, level] : {std::pair{2, 3}, std::pair{3, 2}}) {
        auto c = config(d, level, Target::cosine(), SolverPath::schur_cg, {RhoKind::h2, 0.0});
        const auto exact = solve_ocp(c);
        c.solver.inner_mode = InnerMode::inner_pcg;
        c.solver.inner_rel_tol = 1e-10;
        const auto inexact = solve_ocp(c);
        EXPECT_GT(inexact.report.inner_iterations_total, 0);
        EXPECT_LE(rel_diff(inexact.coeffs, exact.coeffs), 1e-6);
    }
}

TEST(PathEquivalence, FullPathPreconditioners)
{
    auto c = config(3, 2, Target::quadratic(3), SolverPath::full_pcg, {RhoKind::h32, 0.0});
    const auto gmg = solve_ocp(c);
    for (const auto kind : {PreconditionerKind::none, PreconditionerKind::jacobi}) {
        c.solver.preconditioner = kind;
        EXPECT_LE(rel_diff(solve_ocp(c).coeffs, gmg.coeffs), 1e-7);
    }
    c.solver.preconditioner = PreconditionerKind::lumped_boundary_mass;
    EXPECT_THROW((void)solve_ocp(c), ConfigError);
}

TEST(SolveReport, ConvergedImpliesTolerance)
{
    for (const auto path : all_paths) {
        const auto sol = solve_ocp(config(3, 2, Target::cosine(), path, {RhoKind::h2, 0.0}));
        EXPECT_TRUE(sol.report.converged);
        EXPECT_LE(sol.report.final_rel_residual, 1e-9);
        EXPECT_GE(sol.report.wall_time, 0.0);
    }
}

TEST(SolveReport, NonConvergenceRaises)
{
    auto c = config(3, 3, Target::cosine(), SolverPath::schur_cg, {RhoKind::h2, 0.0});
    c.solver.max_iters = 2;
    try {
        (void)solve_ocp(c);
        FAIL() << "expected SolverFailure";
    } catch (const SolverFailure& e) {
        EXPECT_FALSE(e.report().converged);
        EXPECT_EQ(e.report().iterations, 2);
    }
}
