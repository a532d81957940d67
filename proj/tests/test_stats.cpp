#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sdde/errors.hpp"
#include "sdde/stats.hpp"

using namespace sdde;

namespace {

const double inf = std::numeric_limits<double>::infinity();

// Brute-force sup over a fine grid plus every sample point and its left neighbour.
double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
    auto F = [](const std::vector<double>& s, double x) {
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) /
               static_cast<double>(s.size());
    };
    std::vector<double> pts;
    for (const auto* s : {&a, &b})
        for (double v : *s)
            if (std::isfinite(v)) {
                pts.push_back(v);
                pts.push_back(std::nextafter(v, -inf));
            }
    pts.push_back(1e300);
    double d = 0.0;
    for (double x : pts) d = std::max(d, std::abs(F(a, x) - F(b, x)));
    return d;
}

std::vector<double> random_sample(std::mt19937_64& rng, std::size_t n, double shift) {
    std::normal_distribution<double> N(shift, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = N(rng);
    return v;
}

}  // namespace

TEST(EmpiricalCDF, Examples) {
    EmpiricalCDF F({1.0, 2.0, 3.0});
    EXPECT_DOUBLE_EQ(F(2.0), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(F.left(2.0), 1.0 / 3.0);
    EmpiricalCDF G({5.0});
    EXPECT_EQ(G(4.999), 0.0);
    EXPECT_EQ(G(5.0), 1.0);
    EXPECT_THROW(EmpiricalCDF({}), Error);
}

TEST(EmpiricalCDF, MonotoneAndBounded) {
    std::mt19937_64 rng(1);
    EmpiricalCDF F(random_sample(rng, 4000, 0.0));
    double prev = 0.0;
    for (double x = -5.0; x <= 5.0; x += 0.01) {
        double v = F(x);
        EXPECT_GE(v, prev);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        prev = v;
    }
}

TEST(EmpiricalCDF, CensoredMassStaysAtInfinity) {
    EmpiricalCDF F({1.0, inf, 2.0, inf});
    EXPECT_EQ(F.size(), 4u);
    EXPECT_EQ(F.censored(), 2u);
    EXPECT_DOUBLE_EQ(F(1e300), 0.5);
    EmpiricalCDF all({inf, inf});
    EXPECT_TRUE(all.degenerate());
    EXPECT_EQ(all(0.0), 0.0);
}

TEST(EmpiricalCDF, MergedSampleLiesBetween) {
    std::mt19937_64 rng(2);
    auto a = random_sample(rng, 300, 0.0), b = random_sample(rng, 500, 0.7);
    std::vector<double> m = a;
    m.insert(m.end(), b.begin(), b.end());
    EmpiricalCDF Fa(a), Fb(b), Fm(m);
    for (double x = -4.0; x <= 4.0; x += 0.013) {
        EXPECT_GE(Fm(x), std::min(Fa(x), Fb(x)) - 1e-15);
        EXPECT_LE(Fm(x), std::max(Fa(x), Fb(x)) + 1e-15);
    }
}

TEST(KS, Examples) {
    EmpiricalCDF a({1.0, 2.0, 3.0});
    EXPECT_EQ(ks_distance(a, a), 0.0);
    EXPECT_EQ(ks_distance(a, EmpiricalCDF({10.0, 11.0})), 1.0);
    EXPECT_DOUBLE_EQ(ks_distance(EmpiricalCDF({1.0, 2.0}), EmpiricalCDF({1.0, 3.0})), 0.5);
}

TEST(KS, MatchesBruteForce) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_sample(rng, 50 + trial, 0.0), b = random_sample(rng, 70, 0.3);
        if (trial % 3 == 0) a[0] = inf;
        if (trial % 4 == 0) b[1] = b[2] = inf;
        EXPECT_NEAR(ks_distance(EmpiricalCDF(a), EmpiricalCDF(b)), ks_brute(a, b), 1e-15);
    }
}

TEST(KS, SymmetricAndTriangle) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        EmpiricalCDF a(random_sample(rng, 40, 0.0)), b(random_sample(rng, 60, 0.5)), c(random_sample(rng, 30, -0.4));
        EXPECT_EQ(ks_distance(a, b), ks_distance(b, a));
        EXPECT_LE(ks_distance(a, c), ks_distance(a, b) + ks_distance(b, c) + 1e-15);
    }
}

TEST(KS, CensoringCounts) {
    // identical finite parts, different censored fractions
    EmpiricalCDF a({1.0, 2.0, inf, inf}), b({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(ks_distance(a, b), 0.5);
}

TEST(KS, AgainstContinuousCdf) {
    // uniform samples at (k - 1/2)/n: sup distance 1/(2n)
    std::vector<double> s;
    for (int k = 1; k <= 10; ++k) s.push_back((k - 0.5) / 10.0);
    auto U = [](double x) { return std::clamp(x, 0.0, 1.0); };
    EXPECT_NEAR(ks_distance(EmpiricalCDF(s), U), 0.05, 1e-14);
    s.back() = inf;
    EXPECT_GE(ks_distance(EmpiricalCDF(s), U), 0.1);
}

TEST(Quantile, LinearConvention) {
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.75), 3.25);
    EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7.0);
    EXPECT_DOUBLE_EQ(quantile({1, 2}, 1.0), 2.0);
    EXPECT_THROW(quantile({}, 0.5), Error);
}

TEST(Boxplot, Examples) {
    std::vector<std::vector<double>> constant(5, std::vector<double>(3, 2.5));
    for (const auto& b : boxplot_series(constant)) {
        EXPECT_EQ(b.mean, 2.5);
        EXPECT_EQ(b.q25, 2.5);
        EXPECT_EQ(b.q75, 2.5);
    }
    std::vector<std::vector<double>> four{{1}, {2}, {3}, {4}};
    auto b = boxplot_series(four);
    EXPECT_DOUBLE_EQ(b[0].q25, 1.75);
    EXPECT_DOUBLE_EQ(b[0].q75, 3.25);
    EXPECT_DOUBLE_EQ(b[0].mean, 2.5);
    EXPECT_THROW(boxplot_series({{1}, {2}, {3}}), Error);
}
