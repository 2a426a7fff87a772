#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bvtrack/error.hpp"
#include "bvtrack/mesh1d.hpp"
#include "bvtrack/quadrature.hpp"

namespace bvtrack {

inline constexpr int max_dim = 3;

/// Extents of a d-way tensor stored with dimension 0 fastest.
struct TensorShape {
    int dim = 1;
    std::array<std::size_t, max_dim> extent{1, 1, 1};

    [[nodiscard]] static TensorShape cube(int d, std::size_t m)
    {
        TensorShape s;
        s.dim = d;
        for (int k = 0; k < d; ++k) {
            s.extent[static_cast<std::size_t>(k)] = m;
        }
        return s;
    }

    [[nodiscard]] std::size_t size() const noexcept
    {
        std::size_t n = 1;
        for (int k = 0; k < dim; ++k) {
            n *= extent[static_cast<std::size_t>(k)];
        }
        return n;
    }

    [[nodiscard]] std::size_t stride(int k) const noexcept
    {
        std::size_t s = 1;
        for (int j = 0; j < k; ++j) {
            s *= extent[static_cast<std::size_t>(j)];
        }
        return s;
    }
};

/// Small dense row-major matrix acting along one tensor dimension.
struct Matrix1D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix1D() = default;
    Matrix1D(std::size_t r, std::size_t c)
        : rows(r)
        , cols(c)
        , data(r * c, 0.0)
    {
    }

    [[nodiscard]] double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    [[nodiscard]] Matrix1D transposed() const
    {
        Matrix1D t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }
};

/// Sparse matrix acting along one dimension (used for grid transfer).
struct Sparse1D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    struct Entry {
        std::size_t col;
        double value;
    };
    std::vector<std::vector<Entry>> row_entries;

    [[nodiscard]] Sparse1D transposed() const
    {
        Sparse1D t;
        t.rows = cols;
        t.cols = rows;
        t.row_entries.resize(cols);
        for (std::size_t i = 0; i < rows; ++i) {
            for (const auto& e : row_entries[i]) {
                t.row_entries[e.col].push_back({i, e.value});
            }
        }
        return t;
    }
};

namespace tensor {

// Visits every 1D fibre along dimension k: callback(base, stride).
template <class F>
inline void for_each_fibre(const TensorShape& shape, int k, F&& f)
{
    const std::size_t s = shape.stride(k);
    const std::size_t len = shape.extent[static_cast<std::size_t>(k)];
    const std::size_t outer = shape.size() / (s * len);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < s; ++i) {
            f(o * len * s + i, s);
        }
    }
}

/// out = (I x .. x T x .. x I) in, T acting on dimension k.
inline void apply_tri_along(const Tri1D& t, int k, const TensorShape& shape, std::span<const double> in,
                            std::span<double> out)
{
    const std::size_t len = shape.extent[static_cast<std::size_t>(k)];
    detail::require_size(t.size(), len, "apply_tri_along");
    const std::size_t s = shape.stride(k);
    const std::size_t outer = shape.size() / (s * len);
    const double* d = t.diag.data();
    const double* e = t.sub.data();
    if (len == 1) {
        for (std::size_t i = 0; i < shape.size(); ++i) {
            out[i] = d[0] * in[i];
        }
        return;
    }
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t block = o * len * s;
        const double* x = in.data() + block;
        double* y = out.data() + block;
        // row 0
        for (std::size_t i = 0; i < s; ++i) {
            y[i] = d[0] * x[i] + e[0] * x[s + i];
        }
        for (std::size_t j = 1; j + 1 < len; ++j) {
            const double lo = e[j - 1];
            const double di = d[j];
            const double up = e[j];
            const double* xm = x + (j - 1) * s;
            const double* x0 = x + j * s;
            const double* xp = x + (j + 1) * s;
            double* yj = y + j * s;
            for (std::size_t i = 0; i < s; ++i) {
                yj[i] = lo * xm[i] + di * x0[i] + up * xp[i];
            }
        }
        const std::size_t j = len - 1;
        for (std::size_t i = 0; i < s; ++i) {
            y[j * s + i] = e[j - 1] * x[(j - 1) * s + i] + d[j] * x[j * s + i];
        }
    }
}

/// In-place tridiagonal solve along dimension k (Thomas per fibre).
inline void solve_tri_along(const Tri1D& t, int k, const TensorShape& shape, std::span<double> data)
{
    const std::size_t len = shape.extent[static_cast<std::size_t>(k)];
    detail::require_size(t.size(), len, "solve_tri_along");
    // factor once
    std::vector<double> c(len, 0.0);
    std::vector<double> piv(len, 0.0);
    piv[0] = t.diag[0];
    for (std::size_t i = 1; i < len; ++i) {
        c[i - 1] = t.sub[i - 1] / piv[i - 1];
        piv[i] = t.diag[i] - t.sub[i - 1] * c[i - 1];
    }
    for (double p : piv) {
        if (p == 0.0) {
            throw SingularMatrixError("solve_tri_along: zero pivot");
        }
    }
    for_each_fibre(shape, k, [&](std::size_t base, std::size_t s) {
        double* x = data.data() + base;
        x[0] /= piv[0];
        for (std::size_t i = 1; i < len; ++i) {
            x[i * s] = (x[i * s] - t.sub[i - 1] * x[(i - 1) * s]) / piv[i];
        }
        for (std::size_t i = len - 1; i-- > 0;) {
            x[i * s] -= c[i] * x[(i + 1) * s];
        }
    });
}

/// Applies a dense matrix along dimension k; the extent of k changes from
/// a.cols to a.rows. Returns the new shape.
inline TensorShape apply_matrix_along(const Matrix1D& a, int k, const TensorShape& shape, std::span<const double> in,
                                      std::vector<double>& out)
{
    detail::require_size(shape.extent[static_cast<std::size_t>(k)], a.cols, "apply_matrix_along");
    TensorShape result = shape;
    result.extent[static_cast<std::size_t>(k)] = a.rows;
    out.assign(result.size(), 0.0);
    const std::size_t s = shape.stride(k);
    const std::size_t outer = shape.size() / (s * a.cols);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* x = in.data() + o * a.cols * s;
        double* y = out.data() + o * a.rows * s;
        for (std::size_t r = 0; r < a.rows; ++r) {
            double* yr = y + r * s;
            const double* arow = a.data.data() + r * a.cols;
            if (s == 1) {
                double acc = 0.0;
                for (std::size_t c = 0; c < a.cols; ++c) {
                    acc += arow[c] * x[c];
                }
                yr[0] = acc;
                continue;
            }
            for (std::size_t c = 0; c < a.cols; ++c) {
                const double v = arow[c];
                if (v == 0.0) {
                    continue;
                }
                const double* xc = x + c * s;
                for (std::size_t i = 0; i < s; ++i) {
                    yr[i] += v * xc[i];
                }
            }
        }
    }
    return result;
}

/// Sparse counterpart of apply_matrix_along.
inline TensorShape apply_sparse_along(const Sparse1D& a, int k, const TensorShape& shape, std::span<const double> in,
                                      std::vector<double>& out)
{
    detail::require_size(shape.extent[static_cast<std::size_t>(k)], a.cols, "apply_sparse_along");
    TensorShape result = shape;
    result.extent[static_cast<std::size_t>(k)] = a.rows;
    out.assign(result.size(), 0.0);
    const std::size_t s = shape.stride(k);
    const std::size_t outer = shape.size() / (s * a.cols);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* x = in.data() + o * a.cols * s;
        double* y = out.data() + o * a.rows * s;
        for (std::size_t r = 0; r < a.rows; ++r) {
            double* yr = y + r * s;
            for (const auto& e : a.row_entries[r]) {
                const double* xc = x + e.col * s;
                for (std::size_t i = 0; i < s; ++i) {
                    yr[i] += e.value * xc[i];
                }
            }
        }
    }
    return result;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace tensor

/// Y_h: d-fold tensor product of one modified 1D space.
class TensorSpace {
public:
    TensorSpace(int d, int n)
        : d_(d)
        , basis_(n)
    {
        if (d < 1 || d > max_dim) {
            throw ConfigError("TensorSpace: dimension must be 1, 2 or 3, got " + std::to_string(d));
        }
    }

    /// Level l uses n = 2^(l+1) intervals per direction.
    [[nodiscard]] static TensorSpace at_level(int d, int level)
    {
        if (level < 1 || level > 12) {
            throw ConfigError("TensorSpace: level must be in 1..12, got " + std::to_string(level));
        }
        return {d, 1 << (level + 1)};
    }

    [[nodiscard]] int dim() const noexcept { return d_; }
    [[nodiscard]] int m() const noexcept { return basis_.size(); }
    [[nodiscard]] int intervals() const noexcept { return basis_.intervals(); }
    [[nodiscard]] double h() const noexcept { return basis_.h(); }
    [[nodiscard]] const Modified1DBasis& basis() const noexcept { return basis_; }
    [[nodiscard]] TensorShape shape() const noexcept { return TensorShape::cube(d_, static_cast<std::size_t>(m())); }
    [[nodiscard]] std::size_t total_dofs() const noexcept { return shape().size(); }

    [[nodiscard]] std::array<int, max_dim> multi_index(std::size_t flat) const noexcept
    {
        std::array<int, max_dim> idx{0, 0, 0};
        const auto mm = static_cast<std::size_t>(m());
        for (int k = 0; k < d_; ++k) {
            idx[static_cast<std::size_t>(k)] = static_cast<int>(flat % mm);
            flat /= mm;
        }
        return idx;
    }

    [[nodiscard]] std::size_t flat_index(const std::array<int, max_dim>& idx) const noexcept
    {
        std::size_t flat = 0;
        for (int k = d_ - 1; k >= 0; --k) {
            flat = flat * static_cast<std::size_t>(m()) + static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]);
        }
        return flat;
    }

private:
    int d_;
    Modified1DBasis basis_;
};

/// Number of strict-interior dofs, (m-2)^d.
[[nodiscard]] inline std::size_t interior_dof_count(const TensorSpace& space)
{
    std::size_t n = 1;
    for (int k = 0; k < space.dim(); ++k) {
        n *= static_cast<std::size_t>(std::max(space.m() - 2, 0));
    }
    return n;
}

/// One weighted Kronecker product; factors[k] acts on dimension k.
struct KronTerm {
    double weight = 1.0;
    std::vector<Tri1D> factors;
};

/// Symmetric operator sum_t w_t (F_t0 x F_t1 x ...) applied by
/// dimension-wise contractions, never materialised.
class KronSumOperator {
public:
    KronSumOperator(TensorShape shape, std::vector<KronTerm> terms)
        : shape_(shape)
        , terms_(std::move(terms))
    {
        for (const auto& t : terms_) {
            detail::require_size(t.factors.size(), static_cast<std::size_t>(shape_.dim), "KronSumOperator term");
            for (int k = 0; k < shape_.dim; ++k) {
                detail::require_size(t.factors[static_cast<std::size_t>(k)].size(),
                                     shape_.extent[static_cast<std::size_t>(k)], "KronSumOperator factor");
            }
        }
    }

    [[nodiscard]] const TensorShape& shape() const noexcept { return shape_; }
    [[nodiscard]] const std::vector<KronTerm>& terms() const noexcept { return terms_; }
    [[nodiscard]] std::size_t rows() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return shape_.size(); }

    void apply(std::span<const double> in, std::span<double> out) const
    {
        const std::size_t n = size();
        detail::require_size(in.size(), n, "KronSumOperator::apply");
        detail::require_size(out.size(), n, "KronSumOperator::apply");
        std::fill(out.begin(), out.end(), 0.0);
        thread_local std::vector<double> a;
        thread_local std::vector<double> b;
        a.resize(n);
        b.resize(n);
        for (const auto& term : terms_) {
            std::span<const double> src = in;
            for (int k = 0; k < shape_.dim; ++k) {
                tensor::apply_tri_along(term.factors[static_cast<std::size_t>(k)], k, shape_, src, a);
                std::swap(a, b);
                src = b;
            }
            for (std::size_t i = 0; i < n; ++i) {
                out[i] += term.weight * b[i];
            }
        }
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> in) const
    {
        std::vector<double> out(size());
        apply(in, out);
        return out;
    }

    [[nodiscard]] std::vector<double> diagonal() const
    {
        std::vector<double> diag(size(), 0.0);
        for (const auto& term : terms_) {
            for (std::size_t i = 0; i < diag.size(); ++i) {
                std::size_t rest = i;
                double p = term.weight;
                for (int k = 0; k < shape_.dim; ++k) {
                    const std::size_t e = shape_.extent[static_cast<std::size_t>(k)];
                    p *= term.factors[static_cast<std::size_t>(k)].diag[rest % e];
                    rest /= e;
                }
                diag[i] += p;
            }
        }
        return diag;
    }

private:
    TensorShape shape_;
    std::vector<KronTerm> terms_;
};

namespace detail {

inline KronSumOperator h1_from_factors(int d, const TensorShape& shape, const Tri1D& mass, const Tri1D& stiffness)
{
    std::vector<KronTerm> terms;
    for (int k = 0; k < d; ++k) {
        KronTerm t;
        for (int j = 0; j < d; ++j) {
            t.factors.push_back(j == k ? stiffness : mass);
        }
        terms.push_back(std::move(t));
    }
    KronTerm zero_order;
    zero_order.factors.assign(static_cast<std::size_t>(d), mass);
    terms.push_back(std::move(zero_order));
    return {shape, std::move(terms)};
}

} // namespace detail

/// A_h: Gram matrix of <.,.>_{H1(Omega)} = (grad, grad) + (., .).
[[nodiscard]] inline KronSumOperator build_h1_operator(const TensorSpace& space)
{
    return detail::h1_from_factors(space.dim(), space.shape(), assemble_mass_1d(space.basis()),
                                   assemble_stiffness_1d(space.basis()));
}

/// H1 Gram matrix over the interior box (h, 1-h)^d.
[[nodiscard]] inline KronSumOperator build_interior_h1_operator(const TensorSpace& space)
{
    return detail::h1_from_factors(space.dim(), space.shape(), assemble_mass_1d_interior(space.basis()),
                                   assemble_stiffness_1d_interior(space.basis()));
}

/// One face of the cube: dimension `fixed_dim` pinned to 0 or 1, which
/// selects basis index 0 or m-1 in that dimension.
struct BoundaryFace {
    int fixed_dim = 0;
    int fixed_index = 0;
    std::vector<Tri1D> factors;            ///< d-1 mass factors, remaining dims ascending
    std::vector<std::size_t> dof_indices;  ///< global dof of every slice entry
};

/// Gram matrix of <.,.>_{L2(Gamma)}: sum over the 2d faces.
class BoundaryMassOperator {
public:
    explicit BoundaryMassOperator(const TensorSpace& space)
        : d_(space.dim())
        , m_(space.m())
        , h_(space.h())
    {
        const Tri1D mass = assemble_mass_1d(space.basis());
        for (int k = 0; k < d_; ++k) {
            for (int idx : {0, m_ - 1}) {
                BoundaryFace f;
                f.fixed_dim = k;
                f.fixed_index = idx;
                f.factors.assign(static_cast<std::size_t>(d_ - 1), mass);
                const auto slice = slice_shape();
                f.dof_indices.resize(slice.size());
                for (std::size_t r = 0; r < slice.size(); ++r) {
                    std::array<int, max_dim> full{0, 0, 0};
                    std::size_t rest = r;
                    for (int dd = 0; dd < d_; ++dd) {
                        if (dd == k) {
                            full[static_cast<std::size_t>(dd)] = idx;
                            continue;
                        }
                        full[static_cast<std::size_t>(dd)] = static_cast<int>(rest % static_cast<std::size_t>(m_));
                        rest /= static_cast<std::size_t>(m_);
                    }
                    f.dof_indices[r] = space.flat_index(full);
                }
                faces_.push_back(std::move(f));
            }
        }
    }

    [[nodiscard]] int dim() const noexcept { return d_; }
    [[nodiscard]] double h() const noexcept { return h_; }
    [[nodiscard]] std::size_t size() const noexcept { return TensorShape::cube(d_, static_cast<std::size_t>(m_)).size(); }
    [[nodiscard]] std::size_t rows() const noexcept { return size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return size(); }
    [[nodiscard]] const std::vector<BoundaryFace>& faces() const noexcept { return faces_; }

    /// Shape of a face slice: (d-1) dims of extent m (a scalar for d = 1).
    [[nodiscard]] TensorShape slice_shape() const noexcept
    {
        if (d_ == 1) {
            return TensorShape::cube(1, 1);
        }
        return TensorShape::cube(d_ - 1, static_cast<std::size_t>(m_));
    }

    /// Applies the (d-1)-dimensional face mass to a slice in place.
    void apply_face_mass(const BoundaryFace& f, std::vector<double>& slice) const
    {
        if (d_ == 1) {
            return;
        }
        const auto shape = slice_shape();
        std::vector<double> tmp(slice.size());
        for (int k = 0; k < d_ - 1; ++k) {
            tensor::apply_tri_along(f.factors[static_cast<std::size_t>(k)], k, shape, slice, tmp);
            std::swap(slice, tmp);
        }
    }

    void apply(std::span<const double> in, std::span<double> out) const
    {
        detail::require_size(in.size(), size(), "BoundaryMassOperator::apply");
        detail::require_size(out.size(), size(), "BoundaryMassOperator::apply");
        std::fill(out.begin(), out.end(), 0.0);
        std::vector<double> slice;
        for (const auto& f : faces_) {
            slice.resize(f.dof_indices.size());
            for (std::size_t r = 0; r < slice.size(); ++r) {
                slice[r] = in[f.dof_indices[r]];
            }
            apply_face_mass(f, slice);
            for (std::size_t r = 0; r < slice.size(); ++r) {
                out[f.dof_indices[r]] += slice[r];
            }
        }
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> in) const
    {
        std::vector<double> out(size());
        apply(in, out);
        return out;
    }

    [[nodiscard]] std::vector<double> diagonal() const
    {
        std::vector<double> diag(size(), 0.0);
        const auto shape = slice_shape();
        for (const auto& f : faces_) {
            for (std::size_t r = 0; r < f.dof_indices.size(); ++r) {
                double p = 1.0;
                std::size_t rest = r;
                for (int k = 0; k < d_ - 1; ++k) {
                    const std::size_t e = shape.extent[static_cast<std::size_t>(k)];
                    p *= f.factors[static_cast<std::size_t>(k)].diag[rest % e];
                    rest /= e;
                }
                diag[f.dof_indices[r]] += p;
            }
        }
        return diag;
    }

private:
    int d_;
    int m_;
    double h_;
    std::vector<BoundaryFace> faces_;
};

[[nodiscard]] inline BoundaryMassOperator build_boundary_mass(const TensorSpace& space) { return BoundaryMassOperator(space); }

enum class BlockSet { interior, boundary };

/// Split of the dofs into strict-interior (all indices in 1..m-2, 0-based)
/// and near-boundary (some index equal to 0 or m-1).
class DofPartition {
public:
    explicit DofPartition(const TensorSpace& space)
        : total_(space.total_dofs())
    {
        if (space.m() < 3) {
            throw ConfigError("DofPartition: need m >= 3 for a non-empty interior");
        }
        position_.resize(total_);
        interior_flag_.resize(total_);
        const int m = space.m();
        for (std::size_t g = 0; g < total_; ++g) {
            const auto idx = space.multi_index(g);
            bool interior = true;
            for (int k = 0; k < space.dim(); ++k) {
                const int i = idx[static_cast<std::size_t>(k)];
                if (i == 0 || i == m - 1) {
                    interior = false;
                }
            }
            interior_flag_[g] = interior ? 1 : 0;
            if (interior) {
                position_[g] = interior_.size();
                interior_.push_back(g);
            } else {
                position_[g] = boundary_.size();
                boundary_.push_back(g);
            }
        }
    }

    [[nodiscard]] std::size_t total() const noexcept { return total_; }
    [[nodiscard]] std::span<const std::size_t> interior_ids() const noexcept { return interior_; }
    [[nodiscard]] std::span<const std::size_t> boundary_ids() const noexcept { return boundary_; }
    [[nodiscard]] std::span<const std::size_t> ids(BlockSet s) const noexcept
    {
        return s == BlockSet::interior ? interior_ids() : boundary_ids();
    }
    [[nodiscard]] bool is_interior(std::size_t g) const { return interior_flag_.at(g) != 0; }
    /// Packed position of global dof g within its own block.
    [[nodiscard]] std::size_t position(std::size_t g) const { return position_.at(g); }

    [[nodiscard]] std::vector<double> restrict_to(BlockSet s, std::span<const double> full) const
    {
        detail::require_size(full.size(), total_, "DofPartition::restrict_to");
        const auto id = ids(s);
        std::vector<double> packed(id.size());
        for (std::size_t p = 0; p < id.size(); ++p) {
            packed[p] = full[id[p]];
        }
        return packed;
    }

    /// full[ids[p]] = packed[p]; other entries untouched.
    void embed(BlockSet s, std::span<const double> packed, std::span<double> full) const
    {
        const auto id = ids(s);
        detail::require_size(packed.size(), id.size(), "DofPartition::embed");
        detail::require_size(full.size(), total_, "DofPartition::embed");
        for (std::size_t p = 0; p < id.size(); ++p) {
            full[id[p]] = packed[p];
        }
    }

    [[nodiscard]] std::vector<double> embed(BlockSet s, std::span<const double> packed) const
    {
        std::vector<double> full(total_, 0.0);
        embed(s, packed, full);
        return full;
    }

private:
    std::size_t total_;
    std::vector<std::size_t> interior_;
    std::vector<std::size_t> boundary_;
    std::vector<std::size_t> position_;
    std::vector<unsigned char> interior_flag_;
};

[[nodiscard]] inline DofPartition partition_dofs(const TensorSpace& space) { return DofPartition(space); }

/// Type-erased linear map between packed vectors.
class LinearOperator {
public:
    using ApplyFn = std::function<void(std::span<const double>, std::span<double>)>;

    LinearOperator(std::size_t rows, std::size_t cols, ApplyFn fn)
        : rows_(rows)
        , cols_(cols)
        , fn_(std::move(fn))
    {
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    void apply(std::span<const double> in, std::span<double> out) const
    {
        detail::require_size(in.size(), cols_, "LinearOperator::apply");
        detail::require_size(out.size(), rows_, "LinearOperator::apply");
        fn_(in, out);
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> in) const
    {
        std::vector<double> out(rows_);
        apply(in, out);
        return out;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    ApplyFn fn_;
};

template <class Op>
concept LinearMap = requires(const Op& op, std::span<const double> x, std::span<double> y) {
    { op.rows() } -> std::convertible_to<std::size_t>;
    { op.cols() } -> std::convertible_to<std::size_t>;
    op.apply(x, y);
};

/// Wraps any LinearMap by value.
template <LinearMap Op>
[[nodiscard]] LinearOperator erase(Op op)
{
    const auto r = op.rows();
    const auto c = op.cols();
    return {r, c, [op = std::move(op)](std::span<const double> x, std::span<double> y) { op.apply(x, y); }};
}

/// a - b (used for the boundary-layer H1 operator, A_h minus the interior one).
template <LinearMap A, LinearMap B>
[[nodiscard]] LinearOperator difference(A a, B b)
{
    detail::require_size(a.rows(), b.rows(), "difference");
    const auto n = a.rows();
    return {n, a.cols(), [a = std::move(a), b = std::move(b)](std::span<const double> x, std::span<double> y) {
                std::vector<double> t(y.size());
                a.apply(x, y);
                b.apply(x, t);
                for (std::size_t i = 0; i < y.size(); ++i) {
                    y[i] -= t[i];
                }
            }};
}

/// Block (rows, cols) of a full-space operator, acting on packed vectors
/// by embed, apply, restrict.
template <LinearMap Op>
[[nodiscard]] LinearOperator extract_block(Op op, DofPartition partition, BlockSet rows, BlockSet cols)
{
    detail::require_size(op.rows(), partition.total(), "extract_block");
    const auto nr = partition.ids(rows).size();
    const auto nc = partition.ids(cols).size();
    return {nr, nc,
            [op = std::move(op), p = std::move(partition), rows, cols](std::span<const double> x, std::span<double> y) {
                const auto full_in = p.embed(cols, x);
                std::vector<double> full_out(p.total());
                op.apply(full_in, full_out);
                const auto r = p.ids(rows);
                for (std::size_t i = 0; i < r.size(); ++i) {
                    y[i] = full_out[r[i]];
                }
            }};
}

namespace detail {

// Quadrature points of every element in [0,1] with weights scaled by h,
// and the dense (points x m) matrix of basis values.
struct GridSampling {
    std::vector<double> points;
    std::vector<double> weights;
    Matrix1D values; // values(q, i) = phi_i(points[q])
};

inline GridSampling grid_sampling(const Modified1DBasis& basis, const QuadratureRule& quad)
{
    GridSampling g;
    const double h = basis.h();
    const auto m = static_cast<std::size_t>(basis.size());
    const std::size_t npts = static_cast<std::size_t>(basis.intervals()) * quad.size();
    g.points.reserve(npts);
    g.weights.reserve(npts);
    g.values = Matrix1D(npts, m);
    std::size_t q_flat = 0;
    for (int e = 0; e < basis.intervals(); ++e) {
        const double left = basis.mesh().node(e);
        for (std::size_t q = 0; q < quad.size(); ++q, ++q_flat) {
            g.points.push_back(left + quad.points[q] * h);
            g.weights.push_back(quad.weights[q] * h);
            const auto s = basis.local(e, quad.points[q]);
            for (int k = 0; k < s.count; ++k) {
                g.values(q_flat, static_cast<std::size_t>(s.index[static_cast<std::size_t>(k)])) =
                    s.value[static_cast<std::size_t>(k)];
            }
        }
    }
    return g;
}

// Moments  b_I = sum_q w_q f(x_q) prod_k phi_{i_k}(x_{q_k})  over a
// `dims`-dimensional tensor grid; `f` receives the grid coordinates.
inline std::vector<double> tensor_moments(int dims, const GridSampling& g,
                                          const std::function<double(std::span<const double>)>& f)
{
    if (dims == 0) {
        return {f({})};
    }
    const std::size_t npts = g.points.size();
    const auto grid = TensorShape::cube(dims, npts);
    std::vector<double> vals(grid.size());
    std::array<double, max_dim> x{};
    for (std::size_t r = 0; r < vals.size(); ++r) {
        std::size_t rest = r;
        double w = 1.0;
        for (int k = 0; k < dims; ++k) {
            const std::size_t q = rest % npts;
            rest /= npts;
            x[static_cast<std::size_t>(k)] = g.points[q];
            w *= g.weights[q];
        }
        vals[r] = w * f(std::span<const double>(x.data(), static_cast<std::size_t>(dims)));
    }
    const Matrix1D vt = g.values.transposed();
    TensorShape shape = grid;
    std::vector<double> out;
    for (int k = 0; k < dims; ++k) {
        shape = tensor::apply_matrix_along(vt, k, shape, vals, out);
        std::swap(vals, out);
    }
    return vals;
}

// Values of a tensor coefficient field at every grid point.
inline std::vector<double> tensor_grid_values(int dims, const GridSampling& g, std::span<const double> coeffs)
{
    if (dims == 0) {
        return {coeffs[0]};
    }
    TensorShape shape = TensorShape::cube(dims, g.values.cols);
    std::vector<double> vals(coeffs.begin(), coeffs.end());
    std::vector<double> out;
    for (int k = 0; k < dims; ++k) {
        shape = tensor::apply_matrix_along(g.values, k, shape, vals, out);
        std::swap(vals, out);
    }
    return vals;
}

} // namespace detail

/// Tensor L2 projection P_h = Q_h x ... x Q_h: quadrature moments, then one
/// tridiagonal mass solve per dimension.
[[nodiscard]] inline std::vector<double> project_Ph(const std::function<double(std::span<const double>)>& target,
                                                     const TensorSpace& space, const QuadratureRule& quad)
{
    if (quad.size() < 4) {
        throw ConfigError("project_Ph: quadrature with at least 4 points required");
    }
    const auto g = detail::grid_sampling(space.basis(), quad);
    auto b = detail::tensor_moments(space.dim(), g, target);
    const Tri1D mass = assemble_mass_1d(space.basis());
    const auto shape = space.shape();
    for (int k = 0; k < space.dim(); ++k) {
        tensor::solve_tri_along(mass, k, shape, b);
    }
    return b;
}

} // namespace bvtrack
