#pragma once

#include <complex>
#include <string>

#include "sdde/model.hpp"
#include "sdde/spectrum.hpp"

namespace sdde {

// dx = -(pi/2) x(t-1) dt + eps^2 gamma_c x^3(t-1) dt + eps gamma_q x^2(t-1) dt + eps sigma dW
PerturbedModel scalar_verge_model(double gamma_q, double gamma_c, double sigma, double eps);

// dx = -(pi/2) x(t-1) dt + eps x(t - r1) dW, 0 < r1 <= 1.
PerturbedModel scalar_linear_white_model(double r1, double eps);

// dx = (-(pi/2) x(t-1) + eps sigma(xi) x(t - r1)) dt with a symmetric two-state chain.
PerturbedModel scalar_markov_model(double g, double sigma0, double r1, double eps);

struct VdpParams {
    double omega0 = 1.0;
    double eta = 0.3;
    double kappa = 0.0;
    double r = 2.0;
    double b = 1.0;
    double D_tilde = 1.0;
    double eps = 0.1;
};

MatrixLagMeasure vdp_measure(const VdpParams& p, double beta);

struct VdpCritical {
    double beta_c = 0.0;
    double omega_c = 0.0;
};
// Smallest beta at which a root pair reaches the imaginary axis, confirmed by a root census.
VdpCritical vdp_critical_beta(const VdpParams& p);

// c = (w^2 + e^{-i w r}(eta + i eta r w + kappa r w^2) + w0^2)^{-1}
std::complex<double> vdp_c(const VdpParams& p, double omega_c);

// L0 at beta_c; G = (0, -b x1^2 x2 + beta_tilde x2) with beta_tilde = (beta - beta_c)/eps^2;
// F = sqrt(2 D) (0, x1).
PerturbedModel vdp_model(const VdpParams& p, double beta_c, double beta);

// The no-delay oscillator with an appended stable mode; all lags at 0, horizon 1.
PerturbedModel no_delay_oscillator_model(double eps);
// Normalisation used with it: first component of d equal to one.
EigenOptions no_delay_oscillator_eigen_options();

}  // namespace sdde
