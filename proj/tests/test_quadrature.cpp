#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bvtrack/quadrature.hpp"
#include "oracles.hpp"

using namespace bvtrack;

TEST(GaussRule, MidpointForOrderOne)
{
    const auto q = gauss_rule(1);
    ASSERT_EQ(q.size(), 1u);
    EXPECT_DOUBLE_EQ(q.points[0], 0.5);
    EXPECT_DOUBLE_EQ(q.weights[0], 1.0);
}

TEST(GaussRule, OrderThreeIntegratesCubic)
{
    const auto q = gauss_rule(3);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        s += q.weights[i] * std::pow(q.points[i], 3);
    }
    EXPECT_NEAR(s, 0.25, 1e-15);
}

TEST(GaussRule, OrderFiveIntegratesCosine)
{
    const auto q = gauss_rule(5);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        s += q.weights[i] * std::cos(std::numbers::pi * q.points[i]);
    }
    EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(GaussRule, WeightsSumToOneAndMonomialsExact)
{
    for (int order = 1; order <= 10; ++order) {
        const auto q = gauss_rule(order);
        EXPECT_EQ(q.exactness, 2 * order - 1);
        double wsum = 0.0;
        for (const double w : q.weights) {
            wsum += w;
        }
        EXPECT_NEAR(wsum, 1.0, 1e-14) << order;
        for (int p = 0; p <= q.exactness; ++p) {
            double s = 0.0;
            for (std::size_t i = 0; i < q.size(); ++i) {
                s += q.weights[i] * std::pow(q.points[i], p);
            }
            EXPECT_NEAR(s, 1.0 / (p + 1), 1e-14) << "order " << order << " degree " << p;
        }
        for (const double x : q.points) {
            EXPECT_GT(x, 0.0);
            EXPECT_LT(x, 1.0);
        }
    }
}

TEST(GaussRule, MatchesNewtonComputedNodes)
{
    for (int order = 2; order <= 10; ++order) {
        std::vector<double> x;
        std::vector<double> w;
        oracle_test::gauss_legendre(order, x, w);
        std::vector<double> mapped;
        for (const double z : x) {
            mapped.push_back(0.5 * (z + 1.0));
        }
        std::sort(mapped.begin(), mapped.end());
        auto q = gauss_rule(order);
        auto pts = q.points;
        std::sort(pts.begin(), pts.end());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            EXPECT_NEAR(pts[i], mapped[i], 1e-14);
        }
    }
}

TEST(GaussRule, UnsupportedOrdersRejected)
{
    EXPECT_THROW((void)gauss_rule(0), ConfigError);
    EXPECT_THROW((void)gauss_rule(11), ConfigError);
}

TEST(GaussRule, CompositeIntegration)
{
    const auto q = gauss_rule(4);
    EXPECT_NEAR(integrate_composite([](double x) { return std::exp(x); }, q, 16), std::exp(1.0) - 1.0, 1e-14);
}
