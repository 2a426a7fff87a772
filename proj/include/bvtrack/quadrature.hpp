#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "bvtrack/error.hpp"

namespace bvtrack {

/// Gauss-Legendre rule on the reference interval [0,1]; weights sum to 1.
struct QuadratureRule {
    std::vector<double> points;
    std::vector<double> weights;
    int exactness = 0; ///< highest polynomial degree integrated exactly

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
};

/// `order` is the number of Gauss points, 1..10.
[[nodiscard]] inline QuadratureRule gauss_rule(int order)
{
    if (order < 1 || order > 10) {
        throw ConfigError("gauss_rule: unsupported order " + std::to_string(order) + " (1..10)");
    }
    QuadratureRule rule;
    rule.exactness = 2 * order - 1;
    rule.points.resize(static_cast<std::size_t>(order));
    rule.weights.resize(static_cast<std::size_t>(order));

    for (int i = 0; i < order; ++i) {
        // Newton on P_order starting from the Chebyshev-like guess.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            const double pn = order == 1 ? x : p1;
            const double pnm1 = order == 1 ? 1.0 : p0;
            dp = order * (x * pn - pnm1) / (x * x - 1.0);
            const double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        // recompute the derivative at the converged root
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= order; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = order == 1 ? 1.0 : order * (x * p1 - p0) / (x * x - 1.0);
        const auto idx = static_cast<std::size_t>(i);
        rule.points[idx] = 0.5 * (1.0 - x);
        rule.weights[idx] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    if (order == 1) {
        rule.points[0] = 0.5;
        rule.weights[0] = 1.0;
    }
    std::vector<std::size_t> perm(rule.points.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        perm[i] = i;
    }
    std::sort(perm.begin(), perm.end(),
              [&](std::size_t a, std::size_t b) { return rule.points[a] < rule.points[b]; });
    QuadratureRule sorted{{}, {}, rule.exactness};
    for (auto p : perm) {
        sorted.points.push_back(rule.points[p]);
        sorted.weights.push_back(rule.weights[p]);
    }
    return sorted;
}

/// Composite rule over `intervals` uniform subintervals of [0,1].
template <class F>
[[nodiscard]] double integrate_composite(F&& f, const QuadratureRule& quad, int intervals)
{
    const double h = 1.0 / intervals;
    double sum = 0.0;
    for (int e = 0; e < intervals; ++e) {
        const double left = e * h;
        for (std::size_t q = 0; q < quad.size(); ++q) {
            sum += quad.weights[q] * h * f(left + quad.points[q] * h);
        }
    }
    return sum;
}

} // namespace bvtrack
