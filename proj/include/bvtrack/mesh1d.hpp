#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bvtrack/error.hpp"
#include "bvtrack/quadrature.hpp"

namespace bvtrack {

/// Uniform partition of (0,1) into n intervals.
class Mesh1D {
public:
    explicit Mesh1D(int n)
        : n_(n)
    {
        if (n < 4) {
            throw InvalidMeshError("Mesh1D: need n >= 4 intervals, got " + std::to_string(n));
        }
        h_ = 1.0 / n;
        nodes_.resize(static_cast<std::size_t>(n) + 1);
        for (int i = 0; i <= n; ++i) {
            nodes_[static_cast<std::size_t>(i)] = static_cast<double>(i) / n;
        }
    }

    [[nodiscard]] int intervals() const noexcept { return n_; }
    [[nodiscard]] double h() const noexcept { return h_; }
    [[nodiscard]] std::span<const double> nodes() const noexcept { return nodes_; }
    [[nodiscard]] double node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }

private:
    int n_;
    double h_;
    std::vector<double> nodes_;
};

[[nodiscard]] inline Mesh1D build_mesh(int n) { return Mesh1D(n); }

/// Shape functions active on one element: up to two basis indices with
/// their values and (constant) slopes.
struct LocalShape {
    int count = 0;
    std::array<int, 2> index{};
    std::array<double, 2> value{};
    std::array<double, 2> slope{};
};

/// Piecewise-linear space on a uniform mesh whose first and last basis
/// functions are flat on the end intervals, so every function has zero
/// derivative at x = 0 and x = 1. Basis index i (0-based) belongs to node
/// x_{i+1}; there are n-1 functions.
class Modified1DBasis {
public:
    explicit Modified1DBasis(Mesh1D mesh)
        : mesh_(std::move(mesh))
    {
    }

    explicit Modified1DBasis(int n)
        : Modified1DBasis(Mesh1D(n))
    {
    }

    [[nodiscard]] const Mesh1D& mesh() const noexcept { return mesh_; }
    [[nodiscard]] int size() const noexcept { return mesh_.intervals() - 1; }
    [[nodiscard]] int intervals() const noexcept { return mesh_.intervals(); }
    [[nodiscard]] double h() const noexcept { return mesh_.h(); }
    [[nodiscard]] double node(int i) const { return mesh_.node(i + 1); }

    /// Element index in 0..n-1 containing x (x = 1 belongs to the last one).
    [[nodiscard]] int element_of(double x) const noexcept
    {
        const int n = intervals();
        int e = static_cast<int>(std::floor(x * n));
        if (e < 0) {
            e = 0;
        }
        if (e > n - 1) {
            e = n - 1;
        }
        return e;
    }

    /// Active shape functions on element e at local coordinate t in [0,1].
    [[nodiscard]] LocalShape local(int e, double t) const noexcept
    {
        LocalShape s;
        const int n = intervals();
        if (e == 0 || e == n - 1) {
            s.count = 1;
            s.index[0] = e == 0 ? 0 : size() - 1;
            s.value[0] = 1.0;
            s.slope[0] = 0.0;
            return s;
        }
        const double inv_h = 1.0 / h();
        s.count = 2;
        s.index = {e - 1, e};
        s.value = {1.0 - t, t};
        s.slope = {-inv_h, inv_h};
        return s;
    }

    [[nodiscard]] double value(int i, double x) const noexcept
    {
        const int e = element_of(x);
        const auto s = local(e, (x - mesh_.node(e)) / h());
        for (int k = 0; k < s.count; ++k) {
            if (s.index[static_cast<std::size_t>(k)] == i) {
                return s.value[static_cast<std::size_t>(k)];
            }
        }
        return 0.0;
    }

    [[nodiscard]] double derivative(int i, double x) const noexcept
    {
        const int e = element_of(x);
        const auto s = local(e, (x - mesh_.node(e)) / h());
        for (int k = 0; k < s.count; ++k) {
            if (s.index[static_cast<std::size_t>(k)] == i) {
                return s.slope[static_cast<std::size_t>(k)];
            }
        }
        return 0.0;
    }

    /// Value of sum_i c_i phi_i at x.
    [[nodiscard]] double evaluate(std::span<const double> c, double x) const
    {
        detail::require_size(c.size(), static_cast<std::size_t>(size()), "Modified1DBasis::evaluate");
        const int e = element_of(x);
        const auto s = local(e, (x - mesh_.node(e)) / h());
        double v = 0.0;
        for (int k = 0; k < s.count; ++k) {
            v += c[static_cast<std::size_t>(s.index[static_cast<std::size_t>(k)])] * s.value[static_cast<std::size_t>(k)];
        }
        return v;
    }

    [[nodiscard]] double evaluate_derivative(std::span<const double> c, double x) const
    {
        detail::require_size(c.size(), static_cast<std::size_t>(size()), "Modified1DBasis::evaluate_derivative");
        const int e = element_of(x);
        const auto s = local(e, (x - mesh_.node(e)) / h());
        double v = 0.0;
        for (int k = 0; k < s.count; ++k) {
            v += c[static_cast<std::size_t>(s.index[static_cast<std::size_t>(k)])] * s.slope[static_cast<std::size_t>(k)];
        }
        return v;
    }

private:
    Mesh1D mesh_;
};

enum class FactorKind {
    mass_full,
    stiffness_full,
    mass_interior_domain,
    stiffness_interior_domain,
    boundary_trace, ///< point evaluation at x = 0 and x = 1
    restricted,     ///< sub-block of another factor
};

/// Symmetric tridiagonal matrix: diag has m entries, sub has m-1.
struct Tri1D {
    FactorKind kind = FactorKind::mass_full;
    std::vector<double> diag;
    std::vector<double> sub;

    [[nodiscard]] std::size_t size() const noexcept { return diag.size(); }

    [[nodiscard]] double at(std::size_t i, std::size_t j) const
    {
        if (i == j) {
            return diag.at(i);
        }
        if (i + 1 == j) {
            return sub.at(i);
        }
        if (j + 1 == i) {
            return sub.at(j);
        }
        return 0.0;
    }

    /// out = T in
    void apply(std::span<const double> in, std::span<double> out) const
    {
        const std::size_t m = size();
        detail::require_size(in.size(), m, "Tri1D::apply");
        detail::require_size(out.size(), m, "Tri1D::apply");
        for (std::size_t i = 0; i < m; ++i) {
            double v = diag[i] * in[i];
            if (i > 0) {
                v += sub[i - 1] * in[i - 1];
            }
            if (i + 1 < m) {
                v += sub[i] * in[i + 1];
            }
            out[i] = v;
        }
    }

    [[nodiscard]] std::vector<double> row_sums() const
    {
        std::vector<double> ones(size(), 1.0);
        std::vector<double> out(size());
        apply(ones, out);
        return out;
    }

    /// Thomas algorithm; throws SingularMatrixError on a zero pivot.
    [[nodiscard]] std::vector<double> solve(std::span<const double> rhs) const
    {
        const std::size_t m = size();
        detail::require_size(rhs.size(), m, "Tri1D::solve");
        std::vector<double> c(m, 0.0);
        std::vector<double> x(rhs.begin(), rhs.end());
        double pivot = diag[0];
        if (pivot == 0.0) {
            throw SingularMatrixError("Tri1D::solve: zero pivot");
        }
        x[0] /= pivot;
        for (std::size_t i = 1; i < m; ++i) {
            c[i - 1] = sub[i - 1] / pivot;
            pivot = diag[i] - sub[i - 1] * c[i - 1];
            if (pivot == 0.0) {
                throw SingularMatrixError("Tri1D::solve: zero pivot");
            }
            x[i] = (x[i] - sub[i - 1] * x[i - 1]) / pivot;
        }
        for (std::size_t i = m - 1; i-- > 0;) {
            x[i] -= c[i] * x[i + 1];
        }
        return x;
    }

    /// Principal sub-block on indices [first, last).
    [[nodiscard]] Tri1D restricted(std::size_t first, std::size_t last) const
    {
        if (first >= last || last > size()) {
            throw DimensionError("Tri1D::restricted: bad range");
        }
        Tri1D r;
        r.kind = FactorKind::restricted;
        r.diag.assign(diag.begin() + static_cast<std::ptrdiff_t>(first), diag.begin() + static_cast<std::ptrdiff_t>(last));
        r.sub.assign(sub.begin() + static_cast<std::ptrdiff_t>(first), sub.begin() + static_cast<std::ptrdiff_t>(last - 1));
        return r;
    }
};

namespace detail {

// Gram matrix over elements [first_el, last_el] from the closed-form
// element integrals of the active shape functions.
inline Tri1D assemble_gram(const Modified1DBasis& basis, FactorKind kind, bool derivatives, int first_el, int last_el)
{
    const auto m = static_cast<std::size_t>(basis.size());
    const double h = basis.h();
    Tri1D t;
    t.kind = kind;
    t.diag.assign(m, 0.0);
    t.sub.assign(m - 1, 0.0);
    for (int e = first_el; e <= last_el; ++e) {
        const auto s = basis.local(e, 0.0);
        if (s.count == 1) {
            // flat end function: integral of 1 * 1, zero slope
            if (!derivatives) {
                t.diag[static_cast<std::size_t>(s.index[0])] += h;
            }
            continue;
        }
        const auto a = static_cast<std::size_t>(s.index[0]);
        const auto b = static_cast<std::size_t>(s.index[1]);
        if (derivatives) {
            t.diag[a] += 1.0 / h;
            t.diag[b] += 1.0 / h;
            t.sub[a] += -1.0 / h;
        } else {
            t.diag[a] += h / 3.0;
            t.diag[b] += h / 3.0;
            t.sub[a] += h / 6.0;
        }
    }
    return t;
}

} // namespace detail

/// Gram matrix of the basis in L2(0,1).
[[nodiscard]] inline Tri1D assemble_mass_1d(const Modified1DBasis& basis)
{
    return detail::assemble_gram(basis, FactorKind::mass_full, false, 0, basis.intervals() - 1);
}

/// Gram matrix of the derivatives in L2(0,1); constants span its kernel.
[[nodiscard]] inline Tri1D assemble_stiffness_1d(const Modified1DBasis& basis)
{
    return detail::assemble_gram(basis, FactorKind::stiffness_full, true, 0, basis.intervals() - 1);
}

/// Mass matrix over (x_1, x_{n-1}) only.
[[nodiscard]] inline Tri1D assemble_mass_1d_interior(const Modified1DBasis& basis)
{
    return detail::assemble_gram(basis, FactorKind::mass_interior_domain, false, 1, basis.intervals() - 2);
}

/// Stiffness matrix over (x_1, x_{n-1}). Numerically identical to the
/// full-interval stiffness since the end functions are flat there.
[[nodiscard]] inline Tri1D assemble_stiffness_1d_interior(const Modified1DBasis& basis)
{
    return detail::assemble_gram(basis, FactorKind::stiffness_interior_domain, true, 1, basis.intervals() - 2);
}

/// Trace factor: point evaluation at both end points (phi_1(0) = phi_m(1) = 1).
[[nodiscard]] inline Tri1D boundary_trace_1d(const Modified1DBasis& basis)
{
    const auto m = static_cast<std::size_t>(basis.size());
    Tri1D t;
    t.kind = FactorKind::boundary_trace;
    t.diag.assign(m, 0.0);
    t.sub.assign(m - 1, 0.0);
    t.diag.front() = 1.0;
    t.diag.back() = 1.0;
    return t;
}

/// Nodal interpolant: c_i = y(x_i) for the n-1 interior nodes.
[[nodiscard]] inline std::vector<double> interp_Ih(const Modified1DBasis& basis, std::span<const double> samples)
{
    detail::require_size(samples.size(), static_cast<std::size_t>(basis.size()), "interp_Ih");
    return {samples.begin(), samples.end()};
}

[[nodiscard]] inline std::vector<double> interp_Ih(const Modified1DBasis& basis, const std::function<double(double)>& y)
{
    std::vector<double> c(static_cast<std::size_t>(basis.size()));
    for (int i = 0; i < basis.size(); ++i) {
        c[static_cast<std::size_t>(i)] = y(basis.node(i));
    }
    return c;
}

/// b_i = int_0^1 y phi_i dx with `quad` on every element.
[[nodiscard]] inline std::vector<double> load_vector_1d(const Modified1DBasis& basis,
                                                         const std::function<double(double)>& y,
                                                         const QuadratureRule& quad)
{
    std::vector<double> b(static_cast<std::size_t>(basis.size()), 0.0);
    const double h = basis.h();
    for (int e = 0; e < basis.intervals(); ++e) {
        const double left = basis.mesh().node(e);
        for (std::size_t q = 0; q < quad.size(); ++q) {
            const double t = quad.points[q];
            const double fw = y(left + t * h) * quad.weights[q] * h;
            const auto s = basis.local(e, t);
            for (int k = 0; k < s.count; ++k) {
                b[static_cast<std::size_t>(s.index[static_cast<std::size_t>(k)])] += fw * s.value[static_cast<std::size_t>(k)];
            }
        }
    }
    return b;
}

/// L2(0,1) projection onto the modified space.
[[nodiscard]] inline std::vector<double> project_Qh(const std::function<double(double)>& y,
                                                     const Modified1DBasis& basis,
                                                     const QuadratureRule& quad)
{
    if (quad.size() < 4) {
        throw ConfigError("project_Qh: quadrature with at least 4 points required");
    }
    const auto b = load_vector_1d(basis, y, quad);
    return assemble_mass_1d(basis).solve(b);
}

/// ||y - u_h||_{L2(0,1)} by element-wise quadrature.
[[nodiscard]] inline double l2_error_1d(const Modified1DBasis& basis, std::span<const double> coeffs,
                                        const std::function<double(double)>& y, const QuadratureRule& quad)
{
    double sum = 0.0;
    const double h = basis.h();
    for (int e = 0; e < basis.intervals(); ++e) {
        const double left = basis.mesh().node(e);
        for (std::size_t q = 0; q < quad.size(); ++q) {
            const double x = left + quad.points[q] * h;
            const double d = y(x) - basis.evaluate(coeffs, x);
            sum += quad.weights[q] * h * d * d;
        }
    }
    return std::sqrt(sum);
}

/// ||dy - u_h'||_{L2(0,1)} by element-wise quadrature.
[[nodiscard]] inline double h1_semi_error_1d(const Modified1DBasis& basis, std::span<const double> coeffs,
                                             const std::function<double(double)>& dy, const QuadratureRule& quad)
{
    double sum = 0.0;
    const double h = basis.h();
    for (int e = 0; e < basis.intervals(); ++e) {
        const double left = basis.mesh().node(e);
        for (std::size_t q = 0; q < quad.size(); ++q) {
            // stay strictly inside the element so the slope is the element's
            const double x = left + quad.points[q] * h;
            const auto s = basis.local(e, quad.points[q]);
            double du = 0.0;
            for (int k = 0; k < s.count; ++k) {
                du += coeffs[static_cast<std::size_t>(s.index[static_cast<std::size_t>(k)])] * s.slope[static_cast<std::size_t>(k)];
            }
            const double d = dy(x) - du;
            sum += quad.weights[q] * h * d * d;
        }
    }
    return std::sqrt(sum);
}

/// sqrt(c^T T c) for a symmetric tridiagonal Gram matrix T.
[[nodiscard]] inline double gram_norm(const Tri1D& gram, std::span<const double> c)
{
    std::vector<double> tc(c.size());
    gram.apply(c, tc);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        s += c[i] * tc[i];
    }
    return std::sqrt(std::max(s, 0.0));
}

} // namespace bvtrack
