#include "sdde/presets.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "sdde/errors.hpp"

namespace sdde {

namespace {

constexpr double kPi = std::numbers::pi;

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

Monomial mono(std::vector<unsigned> e, Vec coeff) { return Monomial{std::move(e), std::move(coeff)}; }

Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

MatrixLagMeasure scalar_critical_measure() { return MatrixLagMeasure({{-1.0, scalar(-kPi / 2.0)}}); }

}  // namespace

PerturbedModel scalar_verge_model(double gamma_q, double gamma_c, double sigma, double eps) {
    PerturbedModel m;
    m.L0 = scalar_critical_measure();
    m.kind = PerturbationKind::White;
    m.epsilon = eps;
    m.F = PolyLagFunctional::constant(vec({sigma}));
    if (gamma_c != 0.0) m.G = PolyLagFunctional(1, {-1.0}, {mono({3}, vec({gamma_c}))});
    if (gamma_q != 0.0) m.Gq = PolyLagFunctional(1, {-1.0}, {mono({2}, vec({gamma_q}))});
    m.validate();
    return m;
}

PerturbedModel scalar_linear_white_model(double r1, double eps) {
    require(r1 > 0.0 && r1 <= 1.0, ErrorCode::Config, "r1 must lie in (0, 1]");
    PerturbedModel m;
    m.L0 = scalar_critical_measure();
    m.kind = PerturbationKind::White;
    m.epsilon = eps;
    m.F = PolyLagFunctional(1, {-r1}, {mono({1}, vec({1.0}))});
    m.validate();
    return m;
}

PerturbedModel scalar_markov_model(double g, double sigma0, double r1, double eps) {
    require(r1 > 0.0 && r1 <= 1.0, ErrorCode::Config, "r1 must lie in (0, 1]");
    PerturbedModel m;
    m.L0 = scalar_critical_measure();
    m.kind = PerturbationKind::GeneralNoise;
    m.epsilon = eps;
    m.F = PolyLagFunctional(1, {-r1}, {mono({1}, vec({1.0}))});
    m.noise = TwoStateMarkov{g, sigma0};
    m.validate();
    return m;
}

MatrixLagMeasure vdp_measure(const VdpParams& p, double beta) {
    Mat A0(2, 2), Ar(2, 2);
    A0 << 0.0, 1.0, -p.omega0 * p.omega0, beta;
    Ar << 0.0, 0.0, -p.eta, p.kappa;
    return MatrixLagMeasure({{0.0, A0}, {-p.r, Ar}});
}

VdpCritical vdp_critical_beta(const VdpParams& p) {
    require(p.r > 0.0, ErrorCode::Config, "delay must be positive");
    // det Delta(i w) = w0^2 - w^2 - i w beta + (eta - i kappa w) e^{-i w r}
    auto g = [&](double w) { return std::complex<double>(p.eta, -p.kappa * w) * std::exp(std::complex<double>(0.0, -w * p.r)); };
    auto f = [&](double w) { return p.omega0 * p.omega0 - w * w + g(w).real(); };
    const double wmax = std::sqrt(p.omega0 * p.omega0 + std::abs(p.eta)) + 2.0 * std::abs(p.kappa) + 2.0;
    const std::size_t grid = 20000;
    VdpCritical best;
    best.beta_c = std::numeric_limits<double>::infinity();
    double w0 = 1e-9, f0 = f(w0);
    for (std::size_t k = 1; k <= grid; ++k) {
        double w1 = wmax * static_cast<double>(k) / static_cast<double>(grid), f1 = f(w1);
        if (f0 == 0.0 || f0 * f1 < 0.0) {
            std::uintmax_t iters = 200;
            auto tol = boost::math::tools::eps_tolerance<double>(50);
            auto br = boost::math::tools::toms748_solve(f, w0, w1, f0, f1, tol, iters);
            double w = 0.5 * (br.first + br.second);
            double beta = g(w).imag() / w;
            if (beta < best.beta_c) best = {beta, w};
        }
        w0 = w1;
        f0 = f1;
    }
    if (!std::isfinite(best.beta_c)) fail(ErrorCode::NoCriticalPair, "no imaginary-axis crossing for these parameters");
    ScanWindow win;
    win.omega_guess = best.omega_c;
    CriticalPair cp = locate_critical_pair(vdp_measure(p, best.beta_c), win);
    require(std::abs(cp.omega_c - best.omega_c) <= 1e-6 * std::max(1.0, best.omega_c), ErrorCode::NoCriticalPair,
            "census located a different critical frequency");
    best.omega_c = cp.omega_c;
    return best;
}

std::complex<double> vdp_c(const VdpParams& p, double w) {
    using C = std::complex<double>;
    C e = std::exp(C(0.0, -w * p.r));
    return 1.0 / (w * w + e * C(p.eta + p.kappa * p.r * w * w, p.eta * p.r * w) + p.omega0 * p.omega0);
}

PerturbedModel vdp_model(const VdpParams& p, double beta_c, double beta) {
    require(p.eps > 0.0, ErrorCode::Config, "eps must be positive");
    PerturbedModel m;
    m.L0 = vdp_measure(p, beta_c);
    m.kind = PerturbationKind::White;
    m.epsilon = p.eps;
    const double bt = (beta - beta_c) / (p.eps * p.eps);
    std::vector<Monomial> gm{mono({2, 1}, vec({0.0, -p.b}))};
    if (bt != 0.0) gm.push_back(mono({0, 1}, vec({0.0, bt})));
    m.G = PolyLagFunctional(2, {0.0}, gm);
    m.F = PolyLagFunctional(2, {0.0}, {mono({1, 0}, vec({0.0, std::sqrt(2.0 * p.D_tilde)}))});
    m.validate();
    return m;
}

PerturbedModel no_delay_oscillator_model(double eps) {
    Mat A(3, 3);
    A << 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0;
    PerturbedModel m;
    m.L0 = MatrixLagMeasure({{0.0, A}}, 1.0);
    m.kind = PerturbationKind::White;
    m.epsilon = eps;
    m.Gq = PolyLagFunctional(3, {0.0}, {mono({0, 1, 1}, vec({0.0, 1.0, 0.0})), mono({0, 2, 0}, vec({0.0, 0.0, 1.0}))});
    m.validate();
    return m;
}

EigenOptions no_delay_oscillator_eigen_options() {
    EigenOptions o;
    o.normalization = Normalization::ComponentOne;
    o.component = 0;
    return o;
}

}  // namespace sdde
