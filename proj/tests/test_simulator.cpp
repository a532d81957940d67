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

MatrixLagMeasure scalar_measure() { return MatrixLagMeasure({{-1.0, Mat::Constant(1, 1, -pi / 2)}}); }

SpectralData scalar_spec() { return eigendata(scalar_measure(), pi / 2); }

double max_diff(const HistorySegment& a, const HistorySegment& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

}  // namespace

TEST(Simulator, StepsPerDelay) {
    EXPECT_EQ(steps_per_delay(1.0, 1e-3), 1000u);
    EXPECT_EQ(steps_per_delay(2.0, 5e-5), 40000u);
    EXPECT_THROW(steps_per_delay(1.0, 0.3), Error);
    EXPECT_THROW(steps_per_delay(1.0, -0.1), Error);
}

TEST(Simulator, EulerStepByHand) {
    // x' = a x(t-1) with constant history 1: x(t) = 1 + a t for t <= 1
    MatrixLagMeasure L({{-1.0, Mat::Constant(1, 1, -0.7)}});
    auto init = HistorySegment::sample(1, 1.0, 10, [](double, double* x) { x[0] = 1.0; });
    Trajectory tr = integrate_unperturbed(L, init, 1.0, 0.1);
    ASSERT_EQ(tr.size(), 11u);
    for (std::size_t k = 0; k <= 10; ++k) EXPECT_NEAR(tr.at(k)[0], 1.0 - 0.07 * k, 1e-14);
    // second delay interval: x(1 + s) = 0.3 - 0.7 sum of the first-interval values
    Trajectory tr2 = integrate_unperturbed(L, init, 1.2, 0.1);
    double x = 0.3;
    for (int k = 0; k < 2; ++k) x += 0.1 * -0.7 * (1.0 - 0.07 * k);
    EXPECT_NEAR(tr2.at(12)[0], x, 1e-14);
}

TEST(Simulator, OffGridLagInterpolates) {
    MatrixLagMeasure L({{-1.0, Mat::Constant(1, 1, 0.0)}, {-0.25, Mat::Constant(1, 1, 1.0)}});
    auto init = HistorySegment::sample(1, 1.0, 10, [](double th, double* x) { x[0] = th; });
    Trajectory tr = integrate_unperturbed(L, init, 0.1, 0.1);
    // x(0.1) = 0 + 0.1 * x(-0.25), with x(-0.25) interpolated between -0.3 and -0.2
    EXPECT_NEAR(tr.at(1)[0], 0.1 * -0.25, 1e-15);
}

TEST(Simulator, CriticalOrbitReturnsAfterOnePeriod) {
    SpectralData s = scalar_spec();
    double prev = 0.0;
    for (double dt : {1e-3, 5e-4}) {
        const std::size_t N = steps_per_delay(1.0, dt);
        auto init = critical_orbit(s, 1.0, N, 0.5, 0.0);
        Trajectory tr = integrate_unperturbed(scalar_measure(), init, 4.0, dt);
        double err = max_diff(tr.final_segment, init);
        EXPECT_LE(err, 5.0 * dt);
        if (prev > 0.0) EXPECT_NEAR(prev / err, 2.0, 0.2);  // first order
        prev = err;
    }
}

TEST(Simulator, HConservationOverOnePeriod) {
    SpectralData s = scalar_spec();
    const double period = s.period;
    const double dt = 1e-4 * period;
    const std::size_t N = steps_per_delay(1.0, dt);
    const double hbar = 0.9;
    auto init = critical_orbit(s, 1.0, N, hbar, 0.0);
    Trajectory tr = integrate_unperturbed(scalar_measure(), init, period, dt);
    double h = h_of_segment(s, scalar_measure(), tr.final_segment);
    EXPECT_LE(std::abs(h - hbar) / hbar, 1e-3);
}

TEST(Simulator, StableDatumDecays) {
    SpectralData s = scalar_spec();
    Vec v = Vec::Ones(1);
    auto init = stable_jump_datum(s, 1.0, 1000, v);
    auto pr = project_critical(s, scalar_measure(), init);
    EXPECT_LE(std::abs(pr.z1), 1e-10);
    // Euler's own critical mode differs from Phi by O(dt), so the sup norm levels off
    // near dt; fit only the windows where the stable part dominates.
    const double dt = 1e-4;
    const std::size_t N = steps_per_delay(1.0, dt);
    auto fine = stable_jump_datum(s, 1.0, N, v);
    Trajectory tr = integrate_unperturbed(scalar_measure(), fine, 12.0, dt);
    auto window_sup = [&](std::size_t k) {
        double m = 0.0;
        for (std::size_t i = k * N; i <= (k + 1) * N; ++i) m = std::max(m, std::abs(tr.at(i)[0]));
        return m;
    };
    std::vector<double> t, y;
    for (std::size_t k = 0; k < 5; ++k) {
        t.push_back(static_cast<double>(k));
        y.push_back(std::log(window_sup(k)));
    }
    EXPECT_LE(window_sup(11), 5.0 * dt);
    double tm = 0, ym = 0;
    for (std::size_t k = 0; k < t.size(); ++k) tm += t[k], ym += y[k];
    tm /= t.size();
    ym /= t.size();
    double num = 0, den = 0;
    for (std::size_t k = 0; k < t.size(); ++k) num += (t[k] - tm) * (y[k] - ym), den += (t[k] - tm) * (t[k] - tm);
    EXPECT_LT(num / den, -0.1);
}

TEST(Simulator, JumpInitialValue) {
    SpectralData s = scalar_spec();
    Vec v = Vec::Constant(1, 2.0);
    HistorySegment init(1, 1.0, 100);
    init.set_jump({2.0});
    Trajectory tr = integrate_unperturbed(scalar_measure(), init, 0.05, 0.01);
    EXPECT_EQ(tr.at(0)[0], 2.0);
    // history is zero on [-1, 0), so x stays at the jump value for t < 1
    EXPECT_EQ(tr.at(5)[0], 2.0);
    auto pr = project_critical(s, scalar_measure(), init);
    EXPECT_LT(std::abs(pr.z1 - 2.0 * s.psi_hat(0, 0)), 1e-14);
}

TEST(Simulator, LinearityOfUnperturbedFlow) {
    VdpParams p;
    auto L = vdp_measure(p, -0.29);
    auto f = HistorySegment::sample(2, 2.0, 400, [](double th, double* x) { x[0] = std::cos(th); x[1] = th; });
    auto g = HistorySegment::sample(2, 2.0, 400, [](double th, double* x) { x[0] = std::exp(th); x[1] = -1.0; });
    const double a = 1.7, b = -0.6;
    HistorySegment comb = f;
    for (std::size_t k = 0; k < comb.data().size(); ++k) comb.data()[k] = a * f.data()[k] + b * g.data()[k];
    auto Tf = integrate_unperturbed(L, f, 10.0, 0.005).final_segment;
    auto Tg = integrate_unperturbed(L, g, 10.0, 0.005).final_segment;
    auto Tc = integrate_unperturbed(L, comb, 10.0, 0.005).final_segment;
    for (std::size_t k = 0; k < Tc.data().size(); ++k)
        EXPECT_NEAR(Tc.data()[k], a * Tf.data()[k] + b * Tg.data()[k], 1e-10);
}

TEST(Simulator, SemigroupOnGrid) {
    SpectralData s = scalar_spec();
    auto init = critical_orbit(s, 1.0, 100, 0.4, 0.0);
    auto whole = integrate_unperturbed(scalar_measure(), init, 3.5, 0.01).final_segment;
    auto first = integrate_unperturbed(scalar_measure(), init, 2.0, 0.01).final_segment;
    auto second = integrate_unperturbed(scalar_measure(), first, 1.5, 0.01).final_segment;
    EXPECT_EQ(whole.data(), second.data());
}

TEST(Simulator, ZeroEpsilonMatchesUnperturbed) {
    PerturbedModel m = scalar_verge_model(1.0, 1.0, 1.0, 0.0);
    SpectralData s = scalar_spec();
    auto init = critical_orbit(s, 1.0, 1000, 0.5, 0.0);
    auto a = integrate_sdde(m, init, 1e-3, 5.0, 42);
    auto b = integrate_unperturbed(m.L0, init, 5.0, 1e-3);
    EXPECT_EQ(a.values, b.values);
}

TEST(Simulator, DeterministicGivenSeed) {
    PerturbedModel m = scalar_verge_model(0.5, -1.0, 1.0, 0.1);
    SpectralData s = scalar_spec();
    auto init = critical_orbit(s, 1.0, 1000, 0.5, 0.0);
    auto a = integrate_sdde(m, init, 1e-3, 20.0, 9);
    auto b = integrate_sdde(m, init, 1e-3, 20.0, 9);
    auto c = integrate_sdde(m, init, 1e-3, 20.0, 10);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
    EXPECT_EQ(a.seed, 9u);
    EXPECT_EQ(a.noise_kind, "wiener");
}

TEST(Simulator, EnsembleIndependentOfThreadCount) {
    PerturbedModel m = scalar_markov_model(2.0, 1.0, 1.0, 0.2);
    SpectralData s = scalar_spec();
    auto init = critical_orbit(s, 1.0, 100, 0.5, 0.0);
    EnsembleOptions o;
    o.samples = 6;
    o.dt = 0.01;
    o.T = 10.0;
    o.seed = 3;
    o.passage_level = 1.2;
    o.threads = 1;
    auto a = run_dde_ensemble(m, s, [&](std::size_t) { return init; }, o);
    o.threads = 3;
    auto b = run_dde_ensemble(m, s, [&](std::size_t) { return init; }, o);
    EXPECT_EQ(a.h_final, b.h_final);
    EXPECT_EQ(a.passage_time, b.passage_time);
    EXPECT_TRUE(a.flagged.empty());
}

TEST(Simulator, NonFiniteIsFlagged) {
    PerturbedModel m = scalar_verge_model(0.0, 50.0, 1.0, 1.0);  // strongly destabilizing cubic
    SpectralData s = scalar_spec();
    auto init = critical_orbit(s, 1.0, 100, 5.0, 0.0);
    auto tr = integrate_sdde(m, init, 0.01, 200.0, 1);
    EXPECT_EQ(tr.status, TrajectoryStatus::NonFinite);
}

namespace {

// x' = eps sigma(xi) with x(0) = 0: increments reveal the chain.
std::vector<double> chain_path(double g, double T, double dt, std::uint64_t seed) {
    PerturbedModel m;
    m.L0 = MatrixLagMeasure({{-1.0, Mat::Zero(1, 1)}});
    m.kind = PerturbationKind::GeneralNoise;
    m.F = PolyLagFunctional::constant(Vec::Ones(1));
    m.noise = TwoStateMarkov{g, 1.0};
    m.epsilon = 1.0;
    auto init = HistorySegment::sample(1, 1.0, steps_per_delay(1.0, dt), [](double, double* x) { x[0] = 0.0; });
    auto tr = integrate_sdde(m, init, dt, T, seed);
    std::vector<double> sig(tr.size() - 1);
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) sig[k] = (tr.at(k + 1)[0] - tr.at(k)[0]) / dt;
    return sig;
}

}  // namespace

TEST(Simulator, TwoStateAutocorrelation) {
    const double g = 2.0, dt = 0.01, T = 20000.0;
    auto sig = chain_path(g, T, dt, 77);
    for (double v : {sig.front(), sig.back()}) EXPECT_NEAR(std::abs(v), 1.0, 1e-9);
    for (double s : {0.0, 0.25, 0.5, 1.0, 1.5}) {
        const auto lag = static_cast<std::size_t>(std::llround(s / dt));
        double acc = 0.0;
        for (std::size_t k = 0; k + lag < sig.size(); ++k) acc += sig[k] * sig[k + lag];
        acc /= static_cast<double>(sig.size() - lag);
        EXPECT_NEAR(acc, std::exp(-g * s), 0.05) << "s = " << s;
    }
}

TEST(Simulator, TwoStateOccupancy) {
    const double g = 6.0, dt = 0.01, T = 5000.0;
    auto sig = chain_path(g, T, dt, 5);
    double pos = 0.0;
    for (double v : sig) pos += v > 0;
    double frac = pos / static_cast<double>(sig.size());
    // variance of the occupation fraction of a telegraph process: 1 / (2 g T)
    EXPECT_NEAR(frac, 0.5, 3.0 * std::sqrt(1.0 / (2.0 * g * T)));
}

TEST(HOfSegment, Examples) {
    SpectralData s = scalar_spec();
    auto cosine = HistorySegment::sample(1, 1.0, 2000, [](double th, double* x) { x[0] = std::cos(pi / 2 * th); });
    EXPECT_NEAR(h_of_segment(s, scalar_measure(), cosine), 0.5, 1e-10);
    auto q = stable_jump_datum(s, 1.0, 2000, Vec::Ones(1));
    EXPECT_LE(h_of_segment(s, scalar_measure(), q), 1e-8);
}

TEST(LyapunovEstimator, ExponentialAndCriticalOrbit) {
    Trajectory tr;
    tr.n = 1;
    tr.dt = 0.01;
    const double a = -0.3;
    for (int k = 0; k <= 20000; ++k) tr.values.push_back(std::exp(a * k * 0.01));
    auto est = lyapunov_estimator(tr, 5, 1.0, 0, {50.0, 100.0, 200.0});
    // sup over [t - 5, t] of e^{a s} is e^{a (t - 5)}
    EXPECT_NEAR(est[2], a * 195.0 / 200.0, 1e-9);
    EXPECT_LT(std::abs(est[2] - a), std::abs(est[0] - a));
    EXPECT_THROW(lyapunov_estimator(tr, 5, 1.0, 0, {3.0}), Error);

    SpectralData s = scalar_spec();
    auto orbit = integrate_unperturbed(scalar_measure(), critical_orbit(s, 1.0, 1000, 0.5, 0.0), 400.0, 1e-3, 10);
    auto e = lyapunov_estimator(orbit, 5, 1.0, 0, {100.0, 400.0});
    EXPECT_LT(std::abs(e[1]), 1e-3);
    // Euler moves the critical root right by (w^2 dt / 2) Re Psi_hat to first order
    const double drift = 0.5 * s.omega_c * s.omega_c * 1e-3 * s.psi_hat(0, 0).real();
    EXPECT_LT(std::abs(e[1] - drift), std::abs(e[0] - drift));
    EXPECT_NEAR(e[1], drift, 1e-5);
}

TEST(LyapunovEnsemble, MatchesRecordedEstimator) {
    PerturbedModel m = scalar_linear_white_model(1.0, 0.3);
    SpectralData s = scalar_spec();
    auto init = critical_orbit(s, 1.0, 100, 0.5, 0.0);
    LyapunovOptions o;
    o.realizations = 2;
    o.dt = 0.01;
    o.T = 50.0;
    o.seed = 4;
    o.window = 5;
    o.times = {10.0, 30.0, 50.0};
    auto series = run_lyapunov_ensemble(m, init, o);
    auto tr = integrate_sdde(m, init, 0.01, 50.0, stream_seed(4, 1));
    auto direct = lyapunov_estimator(tr, 5, 1.0, 0, o.times);
    ASSERT_EQ(series[1].size(), 3u);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(series[1][k], direct[k], 1e-12);
}
