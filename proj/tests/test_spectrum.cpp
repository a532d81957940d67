#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sdde/errors.hpp"
#include "sdde/presets.hpp"
#include "sdde/simulator.hpp"
#include "sdde/spectrum.hpp"

using namespace sdde;
using std::numbers::pi;

namespace {

MatrixLagMeasure scalar_measure(double kappa) { return MatrixLagMeasure({{-1.0, Mat::Constant(1, 1, kappa)}}); }

SpectralData scalar_spec() {
    auto L = scalar_measure(-pi / 2);
    return eigendata(L, locate_critical_pair(L).omega_c);
}

// <Psi_1, phi> for x' = kappa x(t-1): psi(0) phi(0) + int_{-1}^0 psi(xi + 1) kappa phi(xi) dxi,
// with psi(s) = c e^{-i w s}; composite Simpson.
cplx scalar_pairing_oracle(cplx c, double w, double kappa, const std::function<double(double)>& phi) {
    const int n = 2000;
    const double h = 1.0 / n;
    cplx acc = 0.0;
    for (int k = 0; k <= n; ++k) {
        double xi = -1.0 + k * h;
        double wt = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        acc += wt * c * std::exp(cplx(0, -w * (xi + 1.0))) * kappa * phi(xi);
    }
    return c * phi(0.0) + acc * h / 3.0;
}

}  // namespace

TEST(Characteristic, ScalarExamples) {
    auto L = scalar_measure(-pi / 2);
    EXPECT_LT(std::abs(characteristic_det(L, cplx(0, pi / 2))), 1e-15);
    EXPECT_NEAR(characteristic_det(L, 0.0).real(), pi / 2, 1e-15);
}

TEST(Characteristic, VanDerPolDeterminant) {
    VdpParams p;
    p.kappa = 0.2;
    const double beta = -0.25;
    auto L = vdp_measure(p, beta);
    for (cplx lam : {cplx(0.1, 0.9), cplx(-0.3, 2.0), cplx(0.0, 0.5)}) {
        cplx expected = lam * lam - lam * beta + (p.eta - p.kappa * lam) * std::exp(-lam * p.r) + p.omega0 * p.omega0;
        EXPECT_LT(std::abs(characteristic_det(L, lam) - expected), 1e-13);
    }
}

TEST(CriticalPair, ScalarOmega) {
    auto pair = locate_critical_pair(scalar_measure(-pi / 2));
    EXPECT_NEAR(pair.omega_c, pi / 2, 1e-10);
    EXPECT_FALSE(pair.census.scope.empty());
}

TEST(CriticalPair, StableScalarHasNone) {
    try {
        locate_critical_pair(scalar_measure(-0.1));
        FAIL() << "expected NoCriticalPair";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoCriticalPair);
    }
}

TEST(CriticalPair, UnstableScalarRejected) {
    try {
        locate_critical_pair(scalar_measure(-2.0));
        FAIL() << "expected an assumption failure";
    } catch (const Error& e) {
        EXPECT_TRUE(e.code() == ErrorCode::UnstableExtraRoots || e.code() == ErrorCode::NoCriticalPair);
    }
}

TEST(CriticalPair, VanDerPolRegression) {
    VdpParams p;
    VdpCritical vc = vdp_critical_beta(p);
    EXPECT_NEAR(vc.beta_c, -0.2987, 1e-3);
    // frozen from our own run
    EXPECT_NEAR(vc.omega_c, 0.950208, 1e-5);
    auto pair = locate_critical_pair(vdp_measure(p, vc.beta_c));
    EXPECT_NEAR(pair.omega_c, vc.omega_c, 1e-8);
}

TEST(Eigendata, ScalarPsiHat) {
    SpectralData s = scalar_spec();
    cplx expected = 1.0 / cplx(1.0, pi / 2);
    EXPECT_LT(std::abs(s.psi_hat(0, 0) - expected), 1e-10);
    EXPECT_LT(std::abs(s.psi_hat(1, 0) - std::conj(expected)), 1e-15);
    EXPECT_NEAR(s.period, 4.0, 1e-10);
}

TEST(Eigendata, NullVectorResiduals) {
    VdpParams p;
    VdpCritical vc = vdp_critical_beta(p);
    auto L = vdp_measure(p, vc.beta_c);
    SpectralData s = eigendata(L, vc.omega_c);
    auto cm = characteristic_matrix(L, cplx(0, s.omega_c));
    const double scale = cm.delta_prime.norm();
    EXPECT_LE((cm.delta * s.d).norm(), 1e-10 * scale);
    EXPECT_LE((s.d2 * cm.delta).norm(), 1e-10 * scale);
    EXPECT_LE((s.psi_hat.row(1) - s.psi_hat.row(0).conjugate()).norm(), 1e-15);
}

TEST(Eigendata, VanDerPolConstant) {
    VdpParams p;
    VdpCritical vc = vdp_critical_beta(p);
    EigenOptions o;
    o.normalization = Normalization::ComponentOne;
    SpectralData s = eigendata(vdp_measure(p, vc.beta_c), vc.omega_c, o);
    const double w = vc.omega_c;
    cplx c = 1.0 / (w * w + std::exp(cplx(0, -w * p.r)) * (p.eta + cplx(0, p.eta * p.r * w) + p.kappa * p.r * w * w) +
                    p.omega0 * p.omega0);
    EXPECT_LT(std::abs(vdp_c(p, w) - c), 1e-12);
    // With d = (1, i w) the left vector is fixed up to scale, and Psi_hat_1 e_2 = -i w c.
    EXPECT_LT(std::abs(s.d(0) - 1.0), 1e-14);
    EXPECT_LT(std::abs(s.d(1) - cplx(0, w)), 1e-10);
    EXPECT_LT(std::abs(s.psi_hat(0, 1) - cplx(0, -w) * c), 1e-10);
}

TEST(Biorthogonality, ClosedFormAndTrapezoid) {
    VdpParams p;
    VdpCritical vc = vdp_critical_beta(p);
    auto L = vdp_measure(p, vc.beta_c);
    SpectralData s = eigendata(L, vc.omega_c);
    CMat bi = biorthogonality(s, L);
    EXPECT_LE((bi - CMat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-8);
    const std::size_t N = 1000;  // step 1e-3 r
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            // real and imaginary parts of Phi_j paired separately
            auto re = HistorySegment::sample(2, p.r, N, [&](double th, double* x) {
                CVec v = s.phi1(th);
                x[0] = v(0).real();
                x[1] = v(1).real();
            });
            auto im = HistorySegment::sample(2, p.r, N, [&](double th, double* x) {
                CVec v = s.phi1(th);
                x[0] = v(0).imag();
                x[1] = v(1).imag();
            });
            cplx sign = j == 0 ? cplx(0, 1) : cplx(0, -1);
            cplx val = bilinear_pairing(s, L, i + 1, re) + sign * bilinear_pairing(s, L, i + 1, im);
            EXPECT_LE(std::abs(val - (i == j ? 1.0 : 0.0)), 1e-4) << i << j;
        }
}

TEST(Pairing, ScalarCosineIsOneHalf) {
    SpectralData s = scalar_spec();
    auto L = scalar_measure(-pi / 2);
    auto seg = HistorySegment::sample(1, 1.0, 4000, [](double th, double* x) { x[0] = std::cos(pi / 2 * th); });
    cplx z = bilinear_pairing(s, L, 1, seg);
    EXPECT_LT(std::abs(z - 0.5), 1e-6);
    cplx oracle = scalar_pairing_oracle(s.psi_hat(0, 0), s.omega_c, -pi / 2, [](double th) { return std::cos(pi / 2 * th); });
    EXPECT_LT(std::abs(oracle - 0.5), 1e-10);
    Projector P(s, L, 4000);
    EXPECT_LT(std::abs(P.coordinate(seg) - 0.5), 1e-10);
}

TEST(Pairing, MatchesIndependentQuadrature) {
    SpectralData s = scalar_spec();
    auto L = scalar_measure(-pi / 2);
    auto f = [](double th) { return std::exp(th) - 0.3 * th * th; };
    auto seg = HistorySegment::sample(1, 1.0, 4000, [&](double th, double* x) { x[0] = f(th); });
    cplx oracle = scalar_pairing_oracle(s.psi_hat(0, 0), s.omega_c, -pi / 2, f);
    EXPECT_LT(std::abs(bilinear_pairing(s, L, 1, seg) - oracle), 1e-6);
}

TEST(Pairing, JumpDatumGivesPsiHat) {
    VdpParams p;
    VdpCritical vc = vdp_critical_beta(p);
    auto L = vdp_measure(p, vc.beta_c);
    SpectralData s = eigendata(L, vc.omega_c);
    HistorySegment seg(2, p.r, 200);
    seg.set_jump({0.0, 1.0});
    EXPECT_LT(std::abs(bilinear_pairing(s, L, 1, seg) - s.psi_hat(0, 1)), 1e-14);
    auto pr = project_critical(s, L, seg);
    EXPECT_LT(std::abs(pr.z1 - s.psi_hat(0, 1)), 1e-14);
}

TEST(Projection, CriticalSegmentHasNoStablePart) {
    SpectralData s = scalar_spec();
    auto L = scalar_measure(-pi / 2);
    auto seg = critical_orbit(s, 1.0, 10000, 0.8, 0.37);
    auto pr = project_critical(s, L, seg);
    EXPECT_LE(pr.stable_part.sup_norm(), 1e-8);
    EXPECT_LT(std::abs(pr.z2 - std::conj(pr.z1)), 1e-15);
}

TEST(Projection, Idempotent) {
    VdpParams p;
    VdpCritical vc = vdp_critical_beta(p);
    auto L = vdp_measure(p, vc.beta_c);
    SpectralData s = eigendata(L, vc.omega_c);
    auto seg = HistorySegment::sample(2, p.r, 2000, [](double th, double* x) {
        x[0] = std::exp(th) + 0.2;
        x[1] = std::sin(4 * th);
    });
    auto first = project_critical(s, L, seg);
    auto second = project_critical(s, L, first.stable_part);
    EXPECT_LE(std::abs(second.z1), 1e-8 * seg.sup_norm());
    EXPECT_LT(std::abs(first.z2 - std::conj(first.z1)), 1e-15);
}

TEST(CriticalOrbit, Examples) {
    SpectralData s = scalar_spec();
    auto L = scalar_measure(-pi / 2);
    auto seg = critical_orbit(s, 1.0, 100, 0.5, 0.0);
    for (std::size_t i = 0; i < seg.nodes(); ++i) EXPECT_NEAR(seg.node(i)[0], std::cos(pi / 2 * seg.theta(i)), 1e-14);
    auto zero = critical_orbit(s, 1.0, 100, 0.0, 1.3);
    EXPECT_EQ(zero.sup_norm(), 0.0);
    for (double t : {0.0, 0.4, 2.9})
        EXPECT_NEAR(h_of_segment(s, L, critical_orbit(s, 1.0, 1000, 1.7, t)), 1.7, 1e-10);
}

TEST(Eigendata, ExtraPhaseRotatesD) {
    auto L = scalar_measure(-pi / 2);
    EigenOptions o;
    o.extra_phase = 0.7;
    SpectralData a = eigendata(L, pi / 2), b = eigendata(L, pi / 2, o);
    EXPECT_LT(std::abs(b.d(0) - a.d(0) * std::exp(cplx(0, 0.7))), 1e-14);
    EXPECT_LT(std::abs(b.psi_hat(0, 0) * b.d(0) - a.psi_hat(0, 0) * a.d(0)), 1e-14);
}

TEST(ZeroRoot, ScalarNeutralMode) {
    // x' = -x + x(t-1) has a simple root at 0
    MatrixLagMeasure L({{0.0, Mat::Constant(1, 1, -1.0)}, {-1.0, Mat::Constant(1, 1, 1.0)}});
    ScanWindow w;
    w.zero_root = true;
    auto pair = locate_critical_pair(L, w);
    EXPECT_EQ(pair.omega_c, 0.0);
    SpectralData s = zero_root_eigendata(L);
    EXPECT_TRUE(s.zero_root);
    // Delta'(0) = 1 + 1 = 2, so Psi_hat = 1/2 with d = 1
    EXPECT_NEAR(std::abs(s.psi_hat(0, 0) * s.d(0)), 0.5, 1e-12);
}
