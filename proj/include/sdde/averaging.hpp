#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "sdde/model.hpp"
#include "sdde/spectrum.hpp"

namespace sdde {

// Coefficients by power: c[k] multiplies hbar^k.
struct Polynomial {
    std::vector<double> c;

    double operator()(double x) const;
    double derivative(double x) const;
    unsigned degree() const;
    double coeff(std::size_t k) const { return k < c.size() ? c[k] : 0.0; }
    Polynomial& operator+=(const Polynomial& o);
};

enum class Provenance { bH, bHq1, bHq2 };
const char* provenance_name(Provenance p);

struct DriftTerm {
    Provenance tag;
    Polynomial poly;
};

struct QuadratureMeta {
    std::size_t M = 0;
    double T_inf = 0.0;   // configured horizon for the fundamental solutions
    double T_used = 0.0;  // where the integration actually stopped
    double decay_rate = 0.0;  // gamma > 0 in the fitted envelope e^{-gamma s}
    double tail_bound = 0.0;  // bound on the neglected s-tail of the infinite integrals
    double fit_residual = 0.0;
    double fund_dt = 0.0;
};

struct ReducedCoefficients {
    std::vector<DriftTerm> drift_terms;
    Polynomial diffusion_sq;  // sigma_H^2
    QuadratureMeta meta;
    bool zero_root = false;

    Polynomial drift() const;  // sum of all drift terms
    const Polynomial* term(Provenance p) const;
    void add(Provenance p, const Polynomial& poly);
};

struct WorkspaceOptions {
    std::size_t M = 256;          // period nodes
    double T_inf_factor = 40.0;   // T_inf = factor * r
    double fund_step = 0.0;       // 0: about 1e-5 r, adjusted so r/step is an integer
    std::size_t store_stride = 10;
    double decay_tol = 1e-4;
    std::size_t threads = 1;
};

// Simulated stable fundamental solution x^{(j)}(u) = T(u)(I - pi)1_{0}e_j, u >= 0.
struct FundamentalSolution {
    double du = 0.0;
    std::size_t n = 0;
    std::vector<double> values;  // samples x n, u = k du
    double sup0 = 0.0;
    double sup_last = 0.0;       // sup over the last r-window
    double decay_rate = 0.0;
    bool decayed = false;

    std::size_t size() const { return n ? values.size() / n : 0; }
    double T_used() const { return du * static_cast<double>(size() ? size() - 1 : 0); }
};

class AveragingWorkspace {
public:
    AveragingWorkspace(const MatrixLagMeasure& measure, const SpectralData& spec, WorkspaceOptions opts = {});

    const MatrixLagMeasure& measure() const { return measure_; }
    const SpectralData& spec() const { return spec_; }
    const WorkspaceOptions& options() const { return opts_; }
    double period() const { return spec_.period; }
    double T_inf() const { return opts_.T_inf_factor * measure_.max_delay(); }

    // Simulates all n fundamental solutions on first use; throws DecayNotReached.
    const std::vector<FundamentalSolution>& fundamental() const;

    // I(lambda; j, theta, i) = int_0^inf e^{-lambda s} x_i^{(j)}(s + theta) ds for theta in [-r, 0].
    cplx laplace(std::size_t j, double theta, std::size_t i, cplx lambda) const;
    // sup_last / (gamma + Re lambda): bound on the truncated tail per unit weight.
    double tail_per_unit(cplx lambda) const;
    void fill_meta(QuadratureMeta& meta) const;

private:
    const std::vector<cplx>& transform(std::size_t j, cplx lambda) const;

    MatrixLagMeasure measure_;
    SpectralData spec_;
    WorkspaceOptions opts_;
    mutable std::once_flag once_;
    mutable std::vector<FundamentalSolution> fund_;
    mutable std::mutex cache_mu_;
    mutable std::map<std::tuple<std::size_t, double, double>, std::vector<cplx>> cache_;
};

ReducedCoefficients averaged_white(const PerturbedModel& model, const AveragingWorkspace& ws);

struct LinearConstants {
    CMat upsilon;  // 2 x 2, Upsilon_ij = Psi_i L1 Phi_j
    double C_b = 0.0;
    double C_sigma = 0.0;
    double lambda_avg = 0.0;
    double theta_star = 0.0;
    bool stable = false;
    // general noise only
    double R0 = 0.0;
    double R2c = 0.0;
    cplx R1hat{0.0, 0.0};
    cplx R2hat{0.0, 0.0};
    double tail_bound = 0.0;
};

// Requires F linear homogeneous.
LinearConstants averaged_linear_white(const PerturbedModel& model, const SpectralData& spec);

struct CenteringReport {
    bool passed = true;
    double residual = 0.0;
    double scale = 0.0;
};
CenteringReport check_gq_centering(const PerturbedModel& model, const SpectralData& spec);

struct QuadraticCorrections {
    Polynomial bHq1;
    Polynomial bHq2;
    QuadratureMeta meta;
};
// Throws CenteringViolated when check_gq_centering fails.
QuadraticCorrections averaged_quadratic(const PerturbedModel& model, const AveragingWorkspace& ws);

ReducedCoefficients averaged_gennoise(const PerturbedModel& model, const AveragingWorkspace& ws);
LinearConstants averaged_linear_gennoise(const PerturbedModel& model, const AveragingWorkspace& ws);

ReducedCoefficients zero_root_coefficients(const PerturbedModel& model, const AveragingWorkspace& ws);

// Dispatches on model kind and zero-root mode; adds the quadratic corrections when G_q is present.
ReducedCoefficients reduce(const PerturbedModel& model, const AveragingWorkspace& ws);

}  // namespace sdde
