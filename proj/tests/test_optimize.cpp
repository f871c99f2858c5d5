#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cptlaw/optimize.hpp"

using namespace cptlaw;

namespace {

// f = sum (x_i - c_i)^2 with per-axis curvature
double quad(std::span<const double> x, std::span<double> g, const std::vector<double>& c,
            const std::vector<double>& scale) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - c[i];
        f += scale[i] * d * d;
        g[i] = 2.0 * scale[i] * d;
    }
    return f;
}

} // namespace

TEST(BoxLbfgs, InteriorQuadratic) {
    const std::vector<double> c = {0.3, -0.7, 2.0};
    const std::vector<double> scale = {1.0, 40.0, 0.05};
    const std::vector<double> lo = {-10, -10, -10}, hi = {10, 10, 10};
    auto fg = [&](std::span<const double> x, std::span<double> g) { return quad(x, g, c, scale); };
    const BoxLbfgsResult r = box_lbfgs(fg, lo, hi, {5.0, 5.0, -5.0});
    EXPECT_LE(r.pg_inf, 1e-6);
    EXPECT_NEAR(r.x[0], 0.3, 1e-6);
    EXPECT_NEAR(r.x[1], -0.7, 1e-6);
    EXPECT_NEAR(r.x[2], 2.0, 1e-5);
}

TEST(BoxLbfgs, MinimumOutsideBoxLandsOnBound) {
    const std::vector<double> c = {3.0, 0.0};
    const std::vector<double> scale = {1.0, 1.0};
    const std::vector<double> lo = {-1.0, -1.0}, hi = {1.0, 1.0};
    auto fg = [&](std::span<const double> x, std::span<double> g) { return quad(x, g, c, scale); };
    const BoxLbfgsResult r = box_lbfgs(fg, lo, hi, {-0.5, 0.5});
    EXPECT_DOUBLE_EQ(r.x[0], 1.0); // clamped exactly on the bound
    EXPECT_NEAR(r.x[1], 0.0, 1e-6);
    EXPECT_LE(r.pg_inf, 1e-6); // projected gradient ignores the blocked axis
}

TEST(BoxLbfgs, Rosenbrock) {
    const std::vector<double> lo = {-5, -5}, hi = {5, 5};
    auto fg = [](std::span<const double> x, std::span<double> g) {
        const double a = 1.0 - x[0];
        const double b = x[1] - x[0] * x[0];
        g[0] = -2.0 * a - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    const BoxLbfgsResult r = box_lbfgs(fg, lo, hi, {-1.2, 1.0});
    EXPECT_NEAR(r.x[0], 1.0, 1e-5);
    EXPECT_NEAR(r.x[1], 1.0, 1e-5);
    EXPECT_LE(r.f, 1e-12);
}

TEST(BoxLbfgs, MonotoneAndDeterministic) {
    const std::vector<double> c = {0.0, 0.0};
    const std::vector<double> scale = {1.0, 100.0};
    const std::vector<double> lo = {-2, -2}, hi = {2, 2};
    auto fg = [&](std::span<const double> x, std::span<double> g) { return quad(x, g, c, scale); };
    const BoxLbfgsResult r1 = box_lbfgs(fg, lo, hi, {1.9, -1.3});
    const BoxLbfgsResult r2 = box_lbfgs(fg, lo, hi, {1.9, -1.3});
    EXPECT_EQ(r1.f, r2.f);
    EXPECT_EQ(r1.x, r2.x);
    EXPECT_EQ(r1.iters, r2.iters);
    // never worse than the start
    std::vector<double> g0(2);
    EXPECT_LE(r1.f, fg(std::vector<double>{1.9, -1.3}, g0));
}

TEST(BoxLbfgs, NonFiniteStartReported) {
    const std::vector<double> lo = {-1}, hi = {1};
    auto fg = [](std::span<const double> x, std::span<double> g) {
        g[0] = 0.0;
        (void)x;
        return std::numeric_limits<double>::quiet_NaN();
    };
    const BoxLbfgsResult r = box_lbfgs(fg, lo, hi, {0.5});
    EXPECT_EQ(r.status, OptStatus::non_finite);
}

TEST(BoxLbfgs, StartClampedIntoBox) {
    const std::vector<double> c = {0.0};
    const std::vector<double> scale = {1.0};
    const std::vector<double> lo = {-1.0}, hi = {1.0};
    auto fg = [&](std::span<const double> x, std::span<double> g) { return quad(x, g, c, scale); };
    const BoxLbfgsResult r = box_lbfgs(fg, lo, hi, {25.0});
    EXPECT_NEAR(r.x[0], 0.0, 1e-6);
}
