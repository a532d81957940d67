#include "sdde/reduced.hpp"

#include <algorithm>
#include <boost/math/distributions/gamma.hpp>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <limits>
#include <random>

#include "sdde/errors.hpp"
#include "sdde/simulator.hpp"

namespace sdde {

ReducedSDE ReducedSDE::from(const ReducedCoefficients& rc) {
    ReducedSDE s;
    s.drift = rc.drift();
    s.diffusion_sq = rc.diffusion_sq;
    s.zero_root = rc.zero_root;
    return s;
}

double ReducedSDE::sigma(double h) const { return std::sqrt(std::max(diffusion_sq(h), 0.0)); }

namespace {

struct PathState {
    double h;
    std::size_t clamps = 0;
    bool blown = false;
};

inline void em_step(const ReducedSDE& sde, PathState& st, double dt, double sqdt, double z) {
    double h = st.h + sde.b(st.h) * dt + sde.sigma(st.h) * sqdt * z;
    if (!sde.zero_root && h < 0.0) {
        h = 0.0;
        ++st.clamps;
    }
    if (!std::isfinite(h) || std::abs(h) > sde.cap) st.blown = true;
    st.h = h;
}

std::uint64_t step_count(double T, double dt) {
    require(dt > 0.0 && T >= 0.0, ErrorCode::Config, "reduced SDE needs dt > 0 and T >= 0");
    double n = T / dt;
    auto k = static_cast<std::uint64_t>(std::llround(n));
    require(std::abs(n - static_cast<double>(k)) <= 1e-9 * std::max(1.0, n), ErrorCode::Config,
            "T must be a multiple of dt");
    return k;
}

}  // namespace

ReducedPath integrate_reduced(const ReducedSDE& sde, double h0, double dt, double T, std::uint64_t seed,
                              std::size_t record_stride) {
    require(sde.zero_root || h0 >= 0.0, ErrorCode::Domain, "h0 must be nonnegative");
    require(record_stride >= 1, ErrorCode::Config, "record stride must be positive");
    const std::uint64_t steps = step_count(T, dt);
    std::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> nd;
    const double sqdt = std::sqrt(dt);
    PathState st{h0};
    ReducedPath out;
    out.dt = dt * static_cast<double>(record_stride);
    out.values.push_back(h0);
    for (std::uint64_t j = 1; j <= steps; ++j) {
        em_step(sde, st, dt, sqdt, nd(rng));
        if (j % record_stride == 0) out.values.push_back(st.h);
        if (st.blown) break;
    }
    out.clamp_count = st.clamps;
    out.blown_up = st.blown;
    return out;
}

ReducedEnsemble run_reduced_ensemble(const ReducedSDE& sde, double h0, const ReducedEnsembleOptions& opts) {
    require(sde.zero_root || h0 >= 0.0, ErrorCode::Domain, "h0 must be nonnegative");
    const std::uint64_t steps = step_count(opts.T, opts.dt);
    const double sqdt = std::sqrt(opts.dt);
    const double inf = std::numeric_limits<double>::infinity();
    ReducedEnsemble out;
    out.h_final.assign(opts.samples, 0.0);
    out.passage_time.assign(opts.samples, inf);
    std::vector<std::size_t> clamps(opts.samples, 0);
    std::vector<char> blown(opts.samples, 0);
    const bool track = opts.passage_level > 0.0;
    parallel_for(opts.samples, opts.threads, [&](std::size_t i) {
        std::mt19937_64 rng(stream_seed(opts.seed, i));
        boost::random::normal_distribution<double> nd;
        PathState st{h0};
        double tau = (track && h0 >= opts.passage_level) ? 0.0 : inf;
        for (std::uint64_t j = 1; j <= steps; ++j) {
            em_step(sde, st, opts.dt, sqdt, nd(rng));
            if (st.blown) break;
            if (track && tau == inf && st.h >= opts.passage_level) tau = static_cast<double>(j) * opts.dt;
        }
        out.h_final[i] = st.blown ? std::numeric_limits<double>::quiet_NaN() : st.h;
        out.passage_time[i] = tau;
        clamps[i] = st.clamps;
        blown[i] = st.blown;
    });
    for (std::size_t i = 0; i < opts.samples; ++i) {
        out.clamp_count += clamps[i];
        if (blown[i]) out.blown_up.push_back(i);
    }
    return out;
}

std::vector<double> first_passage(const ReducedSDE& sde, double h0, double H_star, double T_max, double dt,
                                  std::uint64_t seed, std::size_t samples, std::size_t threads) {
    require(H_star > h0, ErrorCode::Domain, "H* must exceed h0");
    ReducedEnsembleOptions o;
    o.samples = samples;
    o.dt = dt;
    o.T = T_max;
    o.seed = seed;
    o.threads = threads;
    o.passage_level = H_star;
    return run_reduced_ensemble(sde, h0, o).passage_time;
}

GammaDensity::GammaDensity(double shape, double rate) : shape_(shape), rate_(rate) {
    require(shape > 0.0, ErrorCode::NotNormalizable, "gamma shape must be positive");
    require(rate > 0.0, ErrorCode::Precondition, "gamma rate must be positive");
}

double GammaDensity::pdf(double h) const {
    if (h < 0.0) return 0.0;
    if (h == 0.0) return shape_ < 1.0 ? std::numeric_limits<double>::infinity() : (shape_ == 1.0 ? rate_ : 0.0);
    return boost::math::pdf(boost::math::gamma_distribution<double>(shape_, 1.0 / rate_), h);
}

double GammaDensity::cdf(double h) const {
    if (h <= 0.0) return 0.0;
    return boost::math::cdf(boost::math::gamma_distribution<double>(shape_, 1.0 / rate_), h);
}

double GammaDensity::quantile(double p) const {
    return boost::math::quantile(boost::math::gamma_distribution<double>(shape_, 1.0 / rate_), p);
}

GammaDensity invariant_density(double C_b, double C_b2, double C_sigma) {
    require(C_b2 < 0.0, ErrorCode::Precondition, "invariant density needs C_b2 < 0");
    require(C_sigma > 0.0, ErrorCode::Precondition, "invariant density needs C_sigma > 0");
    const double shape = 2.0 * C_b / C_sigma - 1.0;
    require(shape > 0.0, ErrorCode::NotNormalizable,
            "2 C_b / C_sigma - 1 <= 0: the trivial solution is stable and no density exists");
    return GammaDensity(shape, 2.0 * (-C_b2) / C_sigma);
}

ThresholdReport noise_shifted_threshold(double beta_c, std::complex<double> c, double eps, double D_tilde) {
    require(beta_c < 0.0, ErrorCode::Precondition, "noise-shifted threshold needs beta_c < 0");
    const double mod = std::abs(c);
    ThresholdReport r;
    r.beta_c = beta_c;
    r.sigma1 = c.real() / mod;
    r.sigma2 = c.imag() * c.imag() / (mod * mod) - 0.5;
    r.beta_c_noise = beta_c + eps * eps * 2.0 * D_tilde * mod * r.sigma2 / r.sigma1;
    r.effect = r.sigma2 > 0.0 ? "stabilizing" : "destabilizing";
    return r;
}

double averaged_lyapunov(double C_b, double C_sigma) { return C_b - 0.5 * C_sigma; }

double dde_lyapunov_prediction(double lambda_avg, double eps) { return 0.5 * eps * eps * lambda_avg; }

}  // namespace sdde
