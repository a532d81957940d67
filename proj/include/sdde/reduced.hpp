#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "sdde/averaging.hpp"

namespace sdde {

// dh = b(h) dt + sqrt(s2(h)) dW on h >= 0 (all of R in zero-root mode).
struct ReducedSDE {
    Polynomial drift;
    Polynomial diffusion_sq;
    bool zero_root = false;
    double cap = 1e8;  // |h| above this aborts the path

    static ReducedSDE from(const ReducedCoefficients& rc);
    double b(double h) const { return drift(h); }
    double sigma(double h) const;
};

struct ReducedPath {
    double dt = 0.0;             // spacing of stored samples
    std::vector<double> values;  // h at t = k dt
    std::size_t clamp_count = 0;
    bool blown_up = false;
};

ReducedPath integrate_reduced(const ReducedSDE& sde, double h0, double dt, double T, std::uint64_t seed,
                              std::size_t record_stride = 1);

struct ReducedEnsembleOptions {
    std::size_t samples = 1000;
    double dt = 1e-3;
    double T = 1.0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    double passage_level = 0.0;  // H*; <= 0 disables
};

struct ReducedEnsemble {
    std::vector<double> h_final;
    std::vector<double> passage_time;  // +inf when censored
    std::size_t clamp_count = 0;
    std::vector<std::size_t> blown_up;
};

ReducedEnsemble run_reduced_ensemble(const ReducedSDE& sde, double h0, const ReducedEnsembleOptions& opts);

// First grid time with h >= H*; +inf if not reached by T_max.
std::vector<double> first_passage(const ReducedSDE& sde, double h0, double H_star, double T_max, double dt,
                                  std::uint64_t seed, std::size_t samples, std::size_t threads = 0);

// Gamma law with shape 2C_b/C_sigma - 1 and rate 2|C_b2|/C_sigma.
class GammaDensity {
public:
    GammaDensity(double shape, double rate);
    double shape() const { return shape_; }
    double rate() const { return rate_; }
    double mean() const { return shape_ / rate_; }
    double pdf(double h) const;
    double cdf(double h) const;
    double quantile(double p) const;

private:
    double shape_, rate_;
};

// Throws Precondition unless C_b2 < 0 and C_sigma > 0, NotNormalizable if the shape is not positive.
GammaDensity invariant_density(double C_b, double C_b2, double C_sigma);

struct ThresholdReport {
    double beta_c = 0.0;
    double beta_c_noise = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    std::string effect;  // "stabilizing" or "destabilizing"
};

// beta_c_noise = beta_c + eps^2 2 D |c| sigma2 / sigma1; requires beta_c < 0.
ThresholdReport noise_shifted_threshold(double beta_c, std::complex<double> c, double eps, double D_tilde);

double averaged_lyapunov(double C_b, double C_sigma);
// Top exponent of the delay equation predicted from the averaged one: eps^2 lambda_avg / 2.
double dde_lyapunov_prediction(double lambda_avg, double eps);

}  // namespace sdde
