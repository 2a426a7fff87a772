#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "bvtrack/error.hpp"
#include "bvtrack/fast_diag.hpp"
#include "bvtrack/krylov.hpp"
#include "bvtrack/mesh1d.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack {

[[nodiscard]] inline Sparse1D to_sparse(const Tri1D& t)
{
    Sparse1D s;
    s.rows = s.cols = t.size();
    s.row_entries.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = i == 0 ? 0 : i - 1; j <= std::min(i + 1, t.size() - 1); ++j) {
            const double v = t.at(i, j);
            if (v != 0.0) {
                s.row_entries[i].push_back({j, v});
            }
        }
    }
    return s;
}

/// Coarse-to-fine interpolation P(i, j) = phi^coarse_j(T(x^fine_i)), where
/// T is the identity for nested transfer and the affine map of
/// (h_f, 1-h_f) onto (h_c, 1-h_c) for interior-aligned transfer. Both keep
/// constants: P * 1 = 1.
[[nodiscard]] inline Sparse1D prolongation_1d(const Modified1DBasis& coarse, const Modified1DBasis& fine,
                                              GmgTransfer transfer = GmgTransfer::interior_aligned)
{
    if (fine.intervals() != 2 * coarse.intervals()) {
        throw ConfigError("prolongation_1d: fine mesh must halve the coarse mesh size");
    }
    const double hc = coarse.h();
    const double hf = fine.h();
    Sparse1D p;
    p.rows = static_cast<std::size_t>(fine.size());
    p.cols = static_cast<std::size_t>(coarse.size());
    p.row_entries.resize(p.rows);
    for (int i = 0; i < fine.size(); ++i) {
        double x = fine.node(i);
        if (transfer == GmgTransfer::interior_aligned) {
            x = hc + (x - hf) * (1.0 - 2.0 * hc) / (1.0 - 2.0 * hf);
        }
        for (int j = 0; j < coarse.size(); ++j) {
            const double v = coarse.value(j, x);
            if (std::abs(v) > 1e-14) {
                p.row_entries[static_cast<std::size_t>(i)].push_back({static_cast<std::size_t>(j), v});
            }
        }
    }
    return p;
}

/// P^T F P for square F (fine) and P (fine x coarse).
[[nodiscard]] inline Sparse1D galerkin_1d(const Sparse1D& f, const Sparse1D& p)
{
    detail::require_size(f.rows, p.rows, "galerkin_1d");
    detail::require_size(f.cols, p.rows, "galerkin_1d");
    const std::size_t nc = p.cols;
    std::vector<double> g(nc * nc, 0.0);
    for (std::size_t i = 0; i < f.rows; ++i) {
        for (const auto& fe : f.row_entries[i]) {
            for (const auto& a : p.row_entries[i]) {
                for (const auto& b : p.row_entries[fe.col]) {
                    g[a.col * nc + b.col] += a.value * fe.value * b.value;
                }
            }
        }
    }
    Sparse1D out;
    out.rows = out.cols = nc;
    out.row_entries.resize(nc);
    for (std::size_t a = 0; a < nc; ++a) {
        for (std::size_t b = 0; b < nc; ++b) {
            if (g[a * nc + b] != 0.0) {
                out.row_entries[a].push_back({b, g[a * nc + b]});
            }
        }
    }
    return out;
}

struct SparseKronTerm {
    double weight = 1.0;
    std::vector<Sparse1D> factors;
};

/// Sum of weighted Kronecker products of sparse 1D factors.
class SparseKronSum {
public:
    SparseKronSum(TensorShape shape, std::vector<SparseKronTerm> terms)
        : shape_(shape)
        , terms_(std::move(terms))
    {
    }

    [[nodiscard]] const TensorShape& shape() const noexcept { return shape_; }
    [[nodiscard]] const std::vector<SparseKronTerm>& terms() const noexcept { return terms_; }
    [[nodiscard]] std::size_t rows() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return shape_.size(); }

    void apply(std::span<const double> in, std::span<double> out) const
    {
        detail::require_size(in.size(), rows(), "SparseKronSum::apply");
        detail::require_size(out.size(), rows(), "SparseKronSum::apply");
        std::fill(out.begin(), out.end(), 0.0);
        std::vector<double> a;
        std::vector<double> b;
        for (const auto& t : terms_) {
            b.assign(in.begin(), in.end());
            for (int k = 0; k < shape_.dim; ++k) {
                tensor::apply_sparse_along(t.factors[static_cast<std::size_t>(k)], k, shape_, b, a);
                std::swap(a, b);
            }
            for (std::size_t i = 0; i < b.size(); ++i) {
                out[i] += t.weight * b[i];
            }
        }
    }

    [[nodiscard]] std::vector<double> diagonal() const
    {
        std::vector<double> diag(rows(), 0.0);
        for (const auto& t : terms_) {
            std::vector<std::vector<double>> d1(static_cast<std::size_t>(shape_.dim));
            for (int k = 0; k < shape_.dim; ++k) {
                const auto& f = t.factors[static_cast<std::size_t>(k)];
                auto& dk = d1[static_cast<std::size_t>(k)];
                dk.assign(f.rows, 0.0);
                for (std::size_t i = 0; i < f.rows; ++i) {
                    for (const auto& e : f.row_entries[i]) {
                        if (e.col == i) {
                            dk[i] = e.value;
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < diag.size(); ++i) {
                std::size_t rest = i;
                double p = t.weight;
                for (int k = 0; k < shape_.dim; ++k) {
                    const std::size_t e = shape_.extent[static_cast<std::size_t>(k)];
                    p *= d1[static_cast<std::size_t>(k)][rest % e];
                    rest /= e;
                }
                diag[i] += p;
            }
        }
        return diag;
    }

    /// P^T (this) P with P = p x p x ... (one factor per dimension).
    [[nodiscard]] SparseKronSum coarsened(const Sparse1D& p) const
    {
        std::vector<SparseKronTerm> terms;
        for (const auto& t : terms_) {
            SparseKronTerm c{t.weight, {}};
            for (const auto& f : t.factors) {
                c.factors.push_back(galerkin_1d(f, p));
            }
            terms.push_back(std::move(c));
        }
        return {TensorShape::cube(shape_.dim, p.cols), std::move(terms)};
    }

private:
    TensorShape shape_;
    std::vector<SparseKronTerm> terms_;
};

/// 1D building blocks of M_Gamma + rho A_h on one level: mass, stiffness
/// and the point-trace factors at x = 0 and x = 1.
struct LevelFactors {
    Sparse1D mass;
    Sparse1D stiffness;
    Sparse1D trace_lo;
    Sparse1D trace_hi;

    [[nodiscard]] static LevelFactors of(const Modified1DBasis& basis)
    {
        LevelFactors f;
        f.mass = to_sparse(assemble_mass_1d(basis));
        f.stiffness = to_sparse(assemble_stiffness_1d(basis));
        const auto m = static_cast<std::size_t>(basis.size());
        for (auto* t : {&f.trace_lo, &f.trace_hi}) {
            t->rows = t->cols = m;
            t->row_entries.resize(m);
        }
        f.trace_lo.row_entries.front().push_back({0, 1.0});
        f.trace_hi.row_entries.back().push_back({m - 1, 1.0});
        return f;
    }

    [[nodiscard]] LevelFactors coarsened(const Sparse1D& p) const
    {
        return {galerkin_1d(mass, p), galerkin_1d(stiffness, p), galerkin_1d(trace_lo, p), galerkin_1d(trace_hi, p)};
    }

    [[nodiscard]] std::size_t size() const noexcept { return mass.rows; }
};

/// M_Gamma + rho A_h as a sparse Kronecker sum; each face contributes the
/// trace factor in its pinned dimension.
[[nodiscard]] inline SparseKronSum gradient_system_terms(int d, double rho, const LevelFactors& f)
{
    std::vector<SparseKronTerm> terms;
    for (int k = 0; k <= d; ++k) {
        SparseKronTerm t{rho, {}};
        for (int j = 0; j < d; ++j) {
            t.factors.push_back(j == k ? f.stiffness : f.mass);
        }
        terms.push_back(std::move(t));
    }
    for (int k = 0; k < d; ++k) {
        for (const auto* trace : {&f.trace_lo, &f.trace_hi}) {
            SparseKronTerm t{1.0, {}};
            for (int j = 0; j < d; ++j) {
                t.factors.push_back(j == k ? *trace : f.mass);
            }
            terms.push_back(std::move(t));
        }
    }
    return {TensorShape::cube(d, f.size()), std::move(terms)};
}

[[nodiscard]] inline SparseKronSum gradient_system_terms(const TensorSpace& space, double rho)
{
    return gradient_system_terms(space.dim(), rho, LevelFactors::of(space.basis()));
}

namespace detail {

inline double sparse_at(const Sparse1D& a, std::size_t i, std::size_t j)
{
    for (const auto& e : a.row_entries[i]) {
        if (e.col == j) {
            return e.value;
        }
    }
    return 0.0;
}

inline Eigen::MatrixXd dense_range(const Sparse1D& a, std::size_t first, std::size_t last)
{
    const auto n = static_cast<Eigen::Index>(last - first);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = first; i < last; ++i) {
        for (const auto& e : a.row_entries[i]) {
            if (e.col >= first && e.col < last) {
                out(static_cast<Eigen::Index>(i - first), static_cast<Eigen::Index>(e.col - first)) = e.value;
            }
        }
    }
    return out;
}

// Dofs of one face that lie on no edge, with the exact inverse of the
// operator restricted to them.
struct FaceBlock {
    std::vector<std::size_t> dofs;
    FastDiagSolver solver;
};

// The restriction of M_Gamma + rho A to the edge-free dofs of face (k, s)
// is  c_m (M x .. x M) + c_k sum_j (M x .. K_j .. x M)  over the
// tangential dimensions, with factors restricted to indices 1..m-2.
inline std::vector<FaceBlock> face_blocks(int d, double rho, const LevelFactors& f)
{
    std::vector<FaceBlock> out;
    const std::size_t m = f.size();
    if (d < 2 || m < 3) {
        return out;
    }
    for (const auto* t : {&f.trace_lo, &f.trace_hi}) {
        for (std::size_t i = 1; i + 1 < m; ++i) {
            for (const auto& e : t->row_entries[i]) {
                if (e.value != 0.0) {
                    return out; // trace leaks into the face interior; keep pointwise smoothing
                }
            }
        }
    }
    const auto mr = dense_range(f.mass, 1, m - 1);
    const auto kr = dense_range(f.stiffness, 1, m - 1);
    const auto slice = TensorShape::cube(d - 1, m - 2);
    for (int k = 0; k < d; ++k) {
        for (std::size_t s : {std::size_t{0}, m - 1}) {
            const double c_mass = rho * (sparse_at(f.stiffness, s, s) + sparse_at(f.mass, s, s))
                                  + sparse_at(f.trace_lo, s, s) + sparse_at(f.trace_hi, s, s);
            const double c_stiff = rho * sparse_at(f.mass, s, s);
            FaceBlock b{{}, FastDiagSolver(d - 1, kr, mr, c_mass, c_stiff)};
            b.dofs.reserve(slice.size());
            for (std::size_t r = 0; r < slice.size(); ++r) {
                std::size_t rest = r;
                std::size_t flat = 0;
                std::size_t stride = 1;
                for (int j = 0; j < d; ++j) {
                    std::size_t idx = s;
                    if (j != k) {
                        idx = 1 + rest % (m - 2);
                        rest /= m - 2;
                    }
                    flat += idx * stride;
                    stride *= m;
                }
                b.dofs.push_back(flat);
            }
            out.push_back(std::move(b));
        }
    }
    return out;
}

} // namespace detail

/// Symmetric V-cycle for  M_Gamma + rho A_h  on uniformly refined tensor
/// meshes: damped (block) Jacobi smoothing, prolongation per GmgTransfer,
/// restriction by the transpose, Galerkin coarse operators (built factor by
/// factor) and a dense Cholesky solve on the coarsest level. A single-level
/// hierarchy on n = 4 is plain damped Jacobi.
class GmgVCycle {
public:
    /// interval_counts lists the mesh sizes from coarsest to finest.
    GmgVCycle(int d, const std::vector<int>& interval_counts, double rho, GmgOptions opts = {})
        : opts_(opts)
    {
        if (interval_counts.empty()) {
            throw ConfigError("GmgVCycle: empty level list");
        }
        for (std::size_t l = 1; l < interval_counts.size(); ++l) {
            if (interval_counts[l] != 2 * interval_counts[l - 1]) {
                throw ConfigError("GmgVCycle: levels are not nested by uniform refinement");
            }
        }
        if (!(opts_.damping > 0.0 && opts_.damping <= 1.0) || opts_.pre_smooth < 0 || opts_.post_smooth < 0) {
            throw ConfigError("GmgVCycle: invalid smoother settings");
        }
        if (!(rho > 0.0) || !std::isfinite(rho)) {
            throw ConfigError("GmgVCycle: rho must be positive");
        }
        std::vector<Modified1DBasis> bases;
        for (int n : interval_counts) {
            bases.emplace_back(n);
        }
        std::vector<LevelFactors> factors{LevelFactors::of(bases.back())};
        std::vector<Sparse1D> prolong(bases.size());
        for (std::size_t l = bases.size() - 1; l > 0; --l) {
            prolong[l] = prolongation_1d(bases[l - 1], bases[l], opts_.transfer);
            factors.insert(factors.begin(), factors.front().coarsened(prolong[l]));
        }
        for (std::size_t l = 0; l < bases.size(); ++l) {
            Level lv{gradient_system_terms(d, rho, factors[l]), {}, prolong[l], prolong[l].transposed(), {}};
            lv.inv_diag = lv.op.diagonal();
            for (auto& v : lv.inv_diag) {
                if (!(v > 0.0)) {
                    throw NumericError("GmgVCycle: nonpositive operator diagonal");
                }
                v = 1.0 / v;
            }
            if (opts_.smoother == GmgSmoother::face_block_jacobi) {
                lv.blocks = detail::face_blocks(d, rho, factors[l]);
            }
            levels_.push_back(std::move(lv));
        }
        if (levels_.size() > 1) {
            factor_coarsest();
        }
    }

    /// Hierarchy from n = 4 up to the given space.
    [[nodiscard]] static GmgVCycle for_space(const TensorSpace& fine, double rho, GmgOptions opts = {})
    {
        std::vector<int> counts;
        int n = fine.intervals();
        while (n >= 4) {
            counts.insert(counts.begin(), n);
            if (n % 2 != 0) {
                break;
            }
            n /= 2;
        }
        return {fine.dim(), counts, rho, opts};
    }

    [[nodiscard]] std::size_t levels() const noexcept { return levels_.size(); }
    [[nodiscard]] std::size_t rows() const noexcept { return levels_.back().op.rows(); }
    [[nodiscard]] std::size_t cols() const noexcept { return rows(); }
    /// Operator of level l (0 = coarsest).
    [[nodiscard]] const SparseKronSum& level_operator(std::size_t l) const { return levels_.at(l).op; }

    /// Coarse-to-fine transfer from level l-1 to level l.
    [[nodiscard]] std::vector<double> prolongate(std::size_t l, std::span<const double> coarse) const
    {
        return transfer(levels_.at(l).prolong, levels_.at(l - 1).op.shape(), coarse);
    }

    /// Fine-to-coarse transfer from level l to level l-1.
    [[nodiscard]] std::vector<double> restrict_to_coarse(std::size_t l, std::span<const double> fine) const
    {
        return transfer(levels_.at(l).restrict, levels_.at(l).op.shape(), fine);
    }

    /// z = B r, one V-cycle from a zero initial guess.
    void apply(std::span<const double> r, std::span<double> z) const
    {
        detail::require_size(r.size(), rows(), "GmgVCycle::apply");
        detail::require_size(z.size(), rows(), "GmgVCycle::apply");
        std::vector<double> x(r.size(), 0.0);
        cycle(levels_.size() - 1, r, x);
        std::copy(x.begin(), x.end(), z.begin());
    }

private:
    struct Level {
        SparseKronSum op;
        std::vector<double> inv_diag;
        Sparse1D prolong;  // from the next coarser level
        Sparse1D restrict; // to the next coarser level
        std::vector<detail::FaceBlock> blocks;
    };

    void factor_coarsest()
    {
        const auto& op = levels_.front().op;
        if (op.rows() > 4096) {
            throw ConfigError("GmgVCycle: coarsest level too large for a direct solve");
        }
        const auto n = static_cast<Eigen::Index>(op.rows());
        Eigen::MatrixXd a(n, n);
        std::vector<double> e(op.rows(), 0.0);
        std::vector<double> col(op.rows());
        for (Eigen::Index j = 0; j < n; ++j) {
            e[static_cast<std::size_t>(j)] = 1.0;
            op.apply(e, col);
            e[static_cast<std::size_t>(j)] = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                a(i, j) = col[static_cast<std::size_t>(i)];
            }
        }
        coarse_.compute(a);
        if (coarse_.info() != Eigen::Success) {
            throw NumericError("GmgVCycle: coarse operator is not SPD");
        }
    }

    static std::vector<double> transfer(const Sparse1D& a, TensorShape shape, std::span<const double> in)
    {
        std::vector<double> cur(in.begin(), in.end());
        std::vector<double> out;
        for (int k = 0; k < shape.dim; ++k) {
            shape = tensor::apply_sparse_along(a, k, shape, cur, out);
            std::swap(cur, out);
        }
        return cur;
    }

    // z = D^{-1} r with D the (block) diagonal of the level operator.
    static void precondition(const Level& lv, std::span<const double> r, std::vector<double>& z)
    {
        for (std::size_t i = 0; i < r.size(); ++i) {
            z[i] = lv.inv_diag[i] * r[i];
        }
        std::vector<double> rb;
        std::vector<double> zb;
        for (const auto& b : lv.blocks) {
            rb.resize(b.dofs.size());
            zb.resize(b.dofs.size());
            for (std::size_t i = 0; i < rb.size(); ++i) {
                rb[i] = r[b.dofs[i]];
            }
            b.solver.solve(rb, zb);
            for (std::size_t i = 0; i < zb.size(); ++i) {
                z[b.dofs[i]] = zb[i];
            }
        }
    }

    void smooth(const Level& lv, std::span<const double> b, std::vector<double>& x, int sweeps) const
    {
        std::vector<double> res(x.size());
        std::vector<double> z(x.size());
        for (int s = 0; s < sweeps; ++s) {
            lv.op.apply(x, res);
            for (std::size_t i = 0; i < x.size(); ++i) {
                res[i] = b[i] - res[i];
            }
            precondition(lv, res, z);
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] += opts_.damping * z[i];
            }
        }
    }

    void cycle(std::size_t l, std::span<const double> b, std::vector<double>& x) const
    {
        if (l == 0 && levels_.size() > 1) {
            const Eigen::Map<const Eigen::VectorXd> bb(b.data(), static_cast<Eigen::Index>(b.size()));
            const Eigen::VectorXd sol = coarse_.solve(bb);
            x.assign(sol.data(), sol.data() + sol.size());
            return;
        }
        const Level& lv = levels_[l];
        smooth(lv, b, x, opts_.pre_smooth);
        if (l > 0) {
            std::vector<double> res(x.size());
            lv.op.apply(x, res);
            for (std::size_t i = 0; i < res.size(); ++i) {
                res[i] = b[i] - res[i];
            }
            const auto rc = restrict_to_coarse(l, res);
            std::vector<double> xc(rc.size(), 0.0);
            cycle(l - 1, rc, xc);
            const auto corr = prolongate(l, xc);
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] += corr[i];
            }
        }
        smooth(lv, b, x, opts_.post_smooth);
    }

    GmgOptions opts_;
    std::vector<Level> levels_;
    Eigen::LLT<Eigen::MatrixXd> coarse_;
};

} // namespace bvtrack
