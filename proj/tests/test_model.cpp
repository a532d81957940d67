#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sdde/errors.hpp"
#include "sdde/model.hpp"
#include "sdde/presets.hpp"

using namespace sdde;
using std::numbers::pi;

namespace {

MatrixLagMeasure scalar_measure(double kappa) {
    return MatrixLagMeasure({{-1.0, Mat::Constant(1, 1, kappa)}});
}

HistorySegment scalar_seg(std::size_t N, const std::function<double(double)>& f) {
    return HistorySegment::sample(1, 1.0, N, [&](double th, double* x) { x[0] = f(th); });
}

Monomial mono(std::vector<unsigned> e, std::vector<double> c) {
    Monomial m;
    m.exponents = std::move(e);
    m.coeff = Eigen::Map<Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
    return m;
}

}  // namespace

TEST(Segment, GridAndInterpolation) {
    auto seg = scalar_seg(4, [](double th) { return 2.0 * th + 1.0; });
    EXPECT_DOUBLE_EQ(seg.grid_step(), 0.25);
    EXPECT_NEAR((seg.nodes() - 1) * seg.grid_step(), 1.0, 1e-12);
    double v;
    seg.value_at(-0.6, &v);
    EXPECT_NEAR(v, -0.2, 1e-14);
    EXPECT_THROW(seg.value_at(-1.5, &v), Error);
    auto pos = seg.locate(-0.5);
    EXPECT_EQ(pos.index, 2u);
    EXPECT_EQ(pos.frac, 0.0);
}

TEST(Segment, JumpOnlyAtZero) {
    auto seg = scalar_seg(10, [](double) { return 0.0; });
    seg.set_jump({3.0});
    double v;
    seg.state_at(0.0, &v);
    EXPECT_EQ(v, 3.0);
    seg.value_at(0.0, &v);
    EXPECT_EQ(v, 0.0);
    seg.state_at(-0.5, &v);
    EXPECT_EQ(v, 0.0);
}

TEST(MatrixLagMeasure, RejectsBadTerms) {
    EXPECT_THROW(MatrixLagMeasure(std::vector<LagTerm>{}), Error);
    EXPECT_THROW(MatrixLagMeasure({{0.5, Mat::Identity(1, 1)}}), Error);
    EXPECT_THROW(MatrixLagMeasure({{-1.0, Mat::Identity(1, 1)}, {-1.0, Mat::Identity(1, 1)}}), Error);
    EXPECT_THROW(MatrixLagMeasure({{-1.0, Mat::Identity(1, 1)}}, 0.5), Error);
    MatrixLagMeasure m({{-1.0, Mat::Identity(1, 1)}}, 2.0);
    EXPECT_EQ(m.max_delay(), 2.0);
}

TEST(MatrixLagMeasure, ScalarExamples) {
    auto L = scalar_measure(-pi / 2);
    auto cosine = scalar_seg(1000, [](double th) { return std::cos(pi / 2 * th); });
    EXPECT_NEAR(eval_linear(L, cosine)(0), 0.0, 1e-15);
    auto one = scalar_seg(1000, [](double) { return 1.0; });
    EXPECT_DOUBLE_EQ(eval_linear(L, one)(0), -pi / 2);
}

TEST(MatrixLagMeasure, VanDerPolByHand) {
    VdpParams p;
    const double beta = -0.2987, w = 0.95;
    auto L = vdp_measure(p, beta);
    auto seg = HistorySegment::sample(2, p.r, 2000, [&](double th, double* x) {
        x[0] = std::cos(w * th);
        x[1] = -w * std::sin(w * th);
    });
    Vec v = eval_linear(L, seg);
    // x1' = x2, x2' = -w0^2 x1 + beta x2 - eta x1(-r) + kappa x2(-r), evaluated by hand
    const double x1r = std::cos(-w * p.r), x2r = -w * std::sin(-w * p.r);
    EXPECT_NEAR(v(0), 0.0, 1e-14);
    EXPECT_NEAR(v(1), -1.0 + beta * 0.0 - p.eta * x1r + p.kappa * x2r, 1e-14);
}

TEST(MatrixLagMeasure, AdditiveAndHomogeneous) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1, 1);
    Mat A(2, 2), B(2, 2);
    A << 0.3, -1.0, 0.7, 0.1;
    B << -0.2, 0.4, 0.5, -0.9;
    MatrixLagMeasure L({{0.0, A}, {-0.73, B}});
    for (int trial = 0; trial < 20; ++trial) {
        auto rnd = [&] {
            return HistorySegment::sample(2, 0.73, 73, [&](double, double* x) { x[0] = U(rng); x[1] = U(rng); });
        };
        auto f = rnd(), g = rnd();
        double a = U(rng) * 3, b = U(rng) * 3;
        HistorySegment comb = f;
        for (std::size_t k = 0; k < comb.data().size(); ++k) comb.data()[k] = a * f.data()[k] + b * g.data()[k];
        Vec lhs = eval_linear(L, comb);
        Vec rhs = a * eval_linear(L, f) + b * eval_linear(L, g);
        EXPECT_LE((lhs - rhs).norm(), 1e-12 * std::max(1.0, rhs.norm()));
    }
}

TEST(PolyLagFunctional, Examples) {
    PolyLagFunctional cube(1, {-1.0}, {mono({3}, {1.0})});
    auto two = scalar_seg(100, [](double) { return 2.0; });
    EXPECT_DOUBLE_EQ(eval_functional(cube, two)(0), 8.0);

    Vec s(1);
    s << 0.7;
    auto F = PolyLagFunctional::constant(s);
    EXPECT_DOUBLE_EQ(eval_functional(F, two)(0), 0.7);
    EXPECT_EQ(F.degree(), 0u);

    PolyLagFunctional sq(1, {-1.0}, {mono({2}, {1.0})});
    auto cosine = scalar_seg(1000, [](double th) { return std::cos(pi / 2 * th); });
    EXPECT_NEAR(eval_functional(sq, cosine)(0), 0.0, 1e-30);
}

TEST(PolyLagFunctional, FrechetExamples) {
    PolyLagFunctional sq(1, {-1.0}, {mono({2}, {1.0})});
    auto at = scalar_seg(10, [](double) { return 3.0; });
    auto dir = scalar_seg(10, [](double) { return 2.0; });
    EXPECT_DOUBLE_EQ(frechet_diff(sq, at, dir)(0), 12.0);

    Vec s(1);
    s << 1.3;
    EXPECT_EQ(frechet_diff(PolyLagFunctional::constant(s), at, dir)(0), 0.0);

    PolyLagFunctional cube(1, {-1.0}, {mono({3}, {1.0})});
    const double a = 0.8, b = -1.7, h = 1e-6;
    auto A = scalar_seg(10, [&](double) { return a; });
    auto B = scalar_seg(10, [&](double) { return b; });
    double exact = frechet_diff(cube, A, B)(0);
    EXPECT_NEAR(exact, 3 * a * a * b, 1e-14);
    double fd = (std::pow(a + h * b, 3) - std::pow(a - h * b, 3)) / (2 * h);
    EXPECT_NEAR(exact, fd, 1e-6 * std::abs(exact));
}

TEST(PolyLagFunctional, FrechetMatchesFiniteDifference) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1, 1);
    const std::vector<double> lags{0.0, -0.4, -1.0};
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<Monomial> ms;
        for (int k = 0; k < 4; ++k) {
            std::vector<unsigned> e(6);
            for (auto& x : e) x = static_cast<unsigned>(rng() % 3);
            bool dup = false;
            for (const auto& m : ms) dup |= m.exponents == e;
            if (dup) continue;
            ms.push_back(mono(e, {U(rng), U(rng)}));
        }
        PolyLagFunctional f(2, lags, ms);
        auto at = HistorySegment::sample(2, 1.0, 50, [&](double th, double* x) { x[0] = std::sin(3 * th) + 0.5; x[1] = th * th - 0.2; });
        auto dir = HistorySegment::sample(2, 1.0, 50, [&](double, double* x) { x[0] = U(rng); x[1] = U(rng); });
        Vec exact = frechet_diff(f, at, dir);
        const double h = 1e-6;
        HistorySegment p = at, m = at;
        for (std::size_t k = 0; k < p.data().size(); ++k) {
            p.data()[k] += h * dir.data()[k];
            m.data()[k] -= h * dir.data()[k];
        }
        Vec fd = (eval_functional(f, p) - eval_functional(f, m)) / (2 * h);
        for (int i = 0; i < 2; ++i) EXPECT_NEAR(exact(i), fd(i), 1e-6 * std::max(1.0, std::abs(exact(i))));
        // linear in the direction
        HistorySegment dir2 = dir;
        for (auto& x : dir2.data()) x *= -2.5;
        EXPECT_LE((frechet_diff(f, at, dir2) + 2.5 * exact).norm(), 1e-12 * std::max(1.0, exact.norm()));
    }
}

TEST(PolyLagFunctional, ConstantSegmentMatchesPolynomialAtStackedVector) {
    const std::vector<double> lags{0.0, -0.5};
    PolyLagFunctional f(2, lags, {mono({1, 0, 0, 2}, {1.0, -2.0}), mono({0, 1, 1, 0}, {0.5, 3.0})});
    const double v0 = 1.3, v1 = -0.4;
    auto seg = HistorySegment::sample(2, 0.5, 7, [&](double, double* x) { x[0] = v0; x[1] = v1; });
    Vec out = eval_functional(f, seg);
    double m1 = v0 * v1 * v1, m2 = v1 * v0;
    EXPECT_NEAR(out(0), m1 + 0.5 * m2, 1e-15);
    EXPECT_NEAR(out(1), -2 * m1 + 3 * m2, 1e-15);
}

TEST(PolyLagFunctional, RejectsDuplicatesAndBadLags) {
    EXPECT_THROW(PolyLagFunctional(1, {-1.0}, {mono({2}, {1.0}), mono({2}, {2.0})}), Error);
    EXPECT_THROW(PolyLagFunctional(1, {0.5}, {mono({1}, {1.0})}), Error);
}

TEST(PolyLagFunctional, LinearRoundTrip) {
    Mat A(2, 2);
    A << 1, 2, 3, 4;
    MatrixLagMeasure L({{-0.3, A}, {0.0, -A}});
    auto f = PolyLagFunctional::linear(L);
    EXPECT_TRUE(f.is_linear_homogeneous());
    auto seg = HistorySegment::sample(2, 0.3, 30, [](double th, double* x) { x[0] = std::cos(th); x[1] = th; });
    EXPECT_LE((eval_functional(f, seg) - eval_linear(L, seg)).norm(), 1e-14);
    MatrixLagMeasure back = f.to_measure(0.3);
    EXPECT_LE((eval_linear(back, seg) - eval_linear(L, seg)).norm(), 1e-14);
}

TEST(Noise, Validation) {
    EXPECT_THROW(validate_noise(TwoStateMarkov{0.0, 1.0}), Error);
    EXPECT_THROW(validate_noise(ExpSumCorrelation{{{1.0, -1.0}}}), Error);
    EXPECT_NO_THROW(validate_noise(TwoStateMarkov{2.0, 1.0}));
    auto R = autocorrelation(TwoStateMarkov{2.0, 1.5});
    ASSERT_EQ(R.size(), 1u);
    EXPECT_DOUBLE_EQ(R[0].weight, 2.25);
    EXPECT_DOUBLE_EQ(R[0].rate, 2.0);
    EXPECT_TRUE(autocorrelation(Wiener{}).empty());
}

TEST(PerturbedModel, ValidateCatchesLagOutsideSpan) {
    PerturbedModel m = scalar_verge_model(1.0, 1.0, 1.0, 0.1);
    EXPECT_NO_THROW(m.validate());
    m.G = PolyLagFunctional(1, {-2.0}, {mono({1}, {1.0})});
    EXPECT_THROW(m.validate(), Error);
}
