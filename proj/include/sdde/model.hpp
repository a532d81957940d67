#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "sdde/segment.hpp"

namespace sdde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct LagTerm {
    double lag = 0.0;  // nonpositive
    Mat matrix;        // n x n
};

// L(eta) = sum_k A_k eta(theta_k): a finite sum of point masses on [-r, 0].
class MatrixLagMeasure {
public:
    MatrixLagMeasure() = default;
    // horizon: declared r; defaults to the largest delay.
    explicit MatrixLagMeasure(std::vector<LagTerm> terms, std::optional<double> horizon = {});

    std::size_t dim() const { return n_; }
    double max_delay() const { return r_; }
    const std::vector<LagTerm>& terms() const { return terms_; }

    // Sum of spectral norms of the A_k. Every root of det(lambda I - sum A_k e^{lambda theta_k})
    // with Re(lambda) >= 0 satisfies |lambda| <= this bound.
    double norm_bound() const;

private:
    std::size_t n_ = 0;
    double r_ = 0.0;
    std::vector<LagTerm> terms_;
};

Vec eval_linear(const MatrixLagMeasure& measure, const HistorySegment& seg);

// One monomial: coeff * prod_v u_v^{e_v}, stored sparsely as (variable, power) pairs.
struct Monomial {
    std::vector<unsigned> exponents;  // length n*m, variable v = lag_index*n + component
    Vec coeff;                        // length n
};

// Polynomial in the stacked lag evaluations u = (eta(theta_1), ..., eta(theta_m)).
class PolyLagFunctional {
public:
    struct Factor {
        std::uint32_t var;
        std::uint32_t power;
    };
    struct Term {
        std::vector<Factor> factors;
        std::vector<double> coeff;
        unsigned degree = 0;
    };

    PolyLagFunctional() = default;
    PolyLagFunctional(std::size_t n, std::vector<double> lags, const std::vector<Monomial>& monomials);

    static PolyLagFunctional constant(const Vec& value);
    // sum_k A_k eta(theta_k) written as a degree-one polynomial.
    static PolyLagFunctional linear(const MatrixLagMeasure& measure);

    std::size_t dim() const { return n_; }
    std::size_t num_lags() const { return lags_.size(); }
    std::size_t num_vars() const { return n_ * lags_.size(); }
    const std::vector<double>& lags() const { return lags_; }
    const std::vector<Term>& terms() const { return terms_; }

    unsigned degree() const;
    bool is_zero() const { return terms_.empty(); }
    bool is_linear_homogeneous() const;

    // Rewrites a degree-one homogeneous polynomial as a lag measure.
    MatrixLagMeasure to_measure(double horizon) const;

    PolyLagFunctional scaled(double a) const;
    // Sum of two functionals; lags are merged.
    PolyLagFunctional plus(const PolyLagFunctional& other) const;

    void eval(const double* u, double* out) const;
    // Row-major n x num_vars() Jacobian.
    void jacobian(const double* u, double* jac) const;
    void directional(const double* u, const double* du, double* out) const;

    // Stacks state_at(theta_l) of seg into u.
    void stack(const HistorySegment& seg, double* u) const;

private:
    std::size_t n_ = 0;
    std::vector<double> lags_;
    std::vector<Term> terms_;
};

Vec eval_functional(const PolyLagFunctional& f, const HistorySegment& seg);
Vec frechet_diff(const PolyLagFunctional& f, const HistorySegment& at, const HistorySegment& dir);

struct Wiener {};
struct TwoStateMarkov {
    double g = 1.0;       // autocorrelation decay; each state is left at rate g/2
    double sigma0 = 1.0;  // states map to +sigma0 and -sigma0
};
struct ExpSumCorrelation {
    struct Component {
        double weight;
        double rate;
    };
    std::vector<Component> components;
};
using NoiseModel = std::variant<Wiener, TwoStateMarkov, ExpSumCorrelation>;

// R(s) = sum weight * exp(-rate s); empty for Wiener.
std::vector<ExpSumCorrelation::Component> autocorrelation(const NoiseModel& noise);
void validate_noise(const NoiseModel& noise);
const char* noise_kind_name(const NoiseModel& noise);

enum class PerturbationKind { White, GeneralNoise };

struct PerturbedModel {
    MatrixLagMeasure L0;
    PerturbationKind kind = PerturbationKind::White;
    std::optional<PolyLagFunctional> F;
    std::optional<PolyLagFunctional> G;
    std::optional<PolyLagFunctional> Gq;
    NoiseModel noise = Wiener{};
    double epsilon = 0.0;

    std::size_t dim() const { return L0.dim(); }
    double max_delay() const { return L0.max_delay(); }
    // Dimension and lag-span checks; throws Config errors.
    void validate() const;
};

}  // namespace sdde
