#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bvtrack/error.hpp"
#include "bvtrack/mesh1d.hpp"
#include "bvtrack/ocp.hpp"
#include "bvtrack/quadrature.hpp"
#include "bvtrack/tensor.hpp"

namespace bvtrack {

/// Smooth 1D function with y'(0) = y'(1) = 0 and its first two derivatives.
struct TestFunction {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;
};

[[nodiscard]] inline std::vector<TestFunction> default_test_functions()
{
    using std::numbers::pi;
    return {
        {"cos(pi x)", [](double x) { return std::cos(pi * x); }, [](double x) { return -pi * std::sin(pi * x); },
         [](double x) { return -pi * pi * std::cos(pi * x); }},
        {"cos(2 pi x)", [](double x) { return std::cos(2 * pi * x); },
         [](double x) { return -2 * pi * std::sin(2 * pi * x); },
         [](double x) { return -4 * pi * pi * std::cos(2 * pi * x); }},
        {"x^2(3-2x)", [](double x) { return x * x * (3 - 2 * x); }, [](double x) { return 6 * x - 6 * x * x; },
         [](double x) { return 6 - 12 * x; }},
    };
}

/// One estimate  lhs <= C * scale(h) * rhs_norm  checked over functions x sizes.
struct EstimateResult {
    std::string name;
    double proven = 0.0;   ///< the stated constant C
    double observed = 0.0; ///< max of lhs / (scale * rhs_norm)
    bool passed = true;
    std::string violation; ///< first failing (function, n, lhs, bound)
};

struct OrderResult {
    std::string name;
    double required = 0.0;
    double observed = 0.0; ///< smallest order between consecutive sizes
    bool passed = true;
};

struct AppendixReport {
    std::vector<EstimateResult> estimates;
    std::vector<OrderResult> orders;

    [[nodiscard]] bool passed() const
    {
        return std::ranges::all_of(estimates, [](const auto& e) { return e.passed; })
               && std::ranges::all_of(orders, [](const auto& o) { return o.passed; });
    }
};

struct AppendixOptions {
    std::vector<int> sizes{8, 16, 32, 64};
    std::vector<TestFunction> functions = default_test_functions();
    /// Multiplies every proven constant; values below 1 inject violations.
    double shrink = 1.0;
    int quad_order = 8;
};

namespace detail {

class EstimateCheck {
public:
    EstimateCheck(std::string name, double proven, double shrink)
        : r_{std::move(name), proven, 0.0, true, {}}
        , shrink_(shrink)
    {
    }

    // lhs <= proven * base
    void add(const std::string& fn, int n, double lhs, double base)
    {
        if (base > 0.0) {
            r_.observed = std::max(r_.observed, lhs / base);
        }
        const double bound = r_.proven * shrink_ * base;
        if (lhs > bound * (1.0 + 1e-12) + 1e-15 && r_.passed) {
            r_.passed = false;
            r_.violation = "(" + fn + ", n=" + std::to_string(n) + ", observed=" + std::to_string(lhs)
                           + ", bound=" + std::to_string(bound) + ")";
        }
    }

    [[nodiscard]] EstimateResult result() const { return r_; }

private:
    EstimateResult r_;
    double shrink_;
};

class OrderCheck {
public:
    OrderCheck(std::string name, double required)
        : r_{std::move(name), required, std::numeric_limits<double>::infinity(), true}
    {
    }

    void add_series(std::span<const double> errors)
    {
        for (std::size_t i = 1; i < errors.size(); ++i) {
            r_.observed = std::min(r_.observed, std::log2(errors[i - 1] / errors[i]));
        }
    }

    [[nodiscard]] OrderResult result() const
    {
        auto r = r_;
        r.passed = r.observed >= r.required;
        return r;
    }

private:
    OrderResult r_;
};

inline double l2_norm_01(const std::function<double(double)>& g, const QuadratureRule& quad)
{
    return std::sqrt(integrate_composite([&](double x) { return g(x) * g(x); }, quad, 256));
}

} // namespace detail

/// Checks the interpolation, projection and boundary approximation
/// estimates with their stated constants, plus observed convergence orders.
[[nodiscard]] inline AppendixReport verify_appendix(const AppendixOptions& opt = {})
{
    if (opt.sizes.size() < 2) {
        throw ConfigError("verify_appendix: need at least two mesh sizes");
    }
    for (std::size_t i = 0; i < opt.sizes.size(); ++i) {
        if (opt.sizes[i] < 4 || (i > 0 && opt.sizes[i] != 2 * opt.sizes[i - 1])) {
            throw ConfigError("verify_appendix: sizes must be >= 4 and double from one to the next");
        }
    }
    if (!(opt.shrink > 0.0)) {
        throw ConfigError("verify_appendix: shrink factor must be positive");
    }
    const auto quad = gauss_rule(opt.quad_order);
    const double s = opt.shrink;

    detail::EstimateCheck i_l2h2("I_h  L2 error  <= C h^2 |y|_H2", 0.5, s);
    detail::EstimateCheck i_l2h1("I_h  L2 error  <= C h |y|_H1", std::sqrt(2.0), s);
    detail::EstimateCheck i_h1h2("I_h  H1 error  <= C h |y|_H2", 1.0 / std::sqrt(2.0), s);
    detail::EstimateCheck i_stab("I_h  H1 stability |I_h y|_H1 <= C |y|_H1", 1.0, s);
    detail::EstimateCheck q_l2h2("Q_h  L2 error  <= C h^2 |y|_H2", 0.5, s);
    detail::EstimateCheck q_h1h2("Q_h  H1 error  <= C h |y|_H2", 0.5 * (std::sqrt(2.0) + 4.0 * std::sqrt(3.0)), s);
    detail::EstimateCheck q_stab("Q_h  H1 stability |Q_h y|_H1 <= C |y|_H1", 1.0 + 4.0 * std::sqrt(6.0), s);
    detail::EstimateCheck p_bdry("P_h  boundary L2 error <= C h^2 |y|_H2(Gamma)", 1.0, s);

    detail::OrderCheck q_l2_order("Q_h  L2 error order", 1.9);
    detail::OrderCheck h1_order("I_h, Q_h  H1 error order", 0.9);
    detail::OrderCheck p_order("P_h  boundary L2 error order", 1.9);

    for (const auto& fn : opt.functions) {
        const double n1 = detail::l2_norm_01(fn.df, quad);
        const double n2 = detail::l2_norm_01(fn.d2f, quad);
        std::vector<double> q_l2_errs;
        std::vector<double> q_h1_errs;
        std::vector<double> i_h1_errs;
        std::vector<double> p_errs;
        for (int n : opt.sizes) {
            const Modified1DBasis basis(n);
            const double h = basis.h();
            const auto stiff = assemble_stiffness_1d(basis);

            const auto ci = interp_Ih(basis, fn.f);
            const double ie_l2 = l2_error_1d(basis, ci, fn.f, quad);
            const double ie_h1 = h1_semi_error_1d(basis, ci, fn.df, quad);
            i_l2h2.add(fn.name, n, ie_l2, h * h * n2);
            i_l2h1.add(fn.name, n, ie_l2, h * n1);
            i_h1h2.add(fn.name, n, ie_h1, h * n2);
            i_stab.add(fn.name, n, gram_norm(stiff, ci), n1);

            const auto cq = project_Qh(fn.f, basis, quad);
            const double qe_l2 = l2_error_1d(basis, cq, fn.f, quad);
            const double qe_h1 = h1_semi_error_1d(basis, cq, fn.df, quad);
            q_l2h2.add(fn.name, n, qe_l2, h * h * n2);
            q_h1h2.add(fn.name, n, qe_h1, h * n2);
            q_stab.add(fn.name, n, gram_norm(stiff, cq), n1);

            // y(x1, x2) = f(x1) f(x2) on the unit square; on every edge the
            // tangential second derivative is f(side) f''.
            const TensorSpace space(2, n);
            const auto f = fn.f;
            const Target target = Target::custom([f](std::span<const double> x) { return f(x[0]) * f(x[1]); });
            const auto cp = project_Ph(target.evaluator, space, quad);
            const double pe = boundary_l2_error(cp, space, target, quad, TargetSampling::exact);
            const double semi = std::sqrt(2.0 * (fn.f(0.0) * fn.f(0.0) + fn.f(1.0) * fn.f(1.0))) * n2;
            p_bdry.add(fn.name, n, pe, h * h * semi);

            q_l2_errs.push_back(qe_l2);
            q_h1_errs.push_back(qe_h1);
            i_h1_errs.push_back(ie_h1);
            p_errs.push_back(pe);
        }
        q_l2_order.add_series(q_l2_errs);
        h1_order.add_series(q_h1_errs);
        h1_order.add_series(i_h1_errs);
        p_order.add_series(p_errs);
    }

    AppendixReport rep;
    for (const auto* c : {&i_l2h2, &i_l2h1, &i_h1h2, &i_stab, &q_l2h2, &q_h1h2, &q_stab, &p_bdry}) {
        rep.estimates.push_back(c->result());
    }
    for (const auto* o : {&q_l2_order, &h1_order, &p_order}) {
        rep.orders.push_back(o->result());
    }
    return rep;
}

} // namespace bvtrack
