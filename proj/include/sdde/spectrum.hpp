#pragma once

#include <Eigen/Dense>
#include <complex>
#include <utility>
#include <string>
#include <vector>

#include "sdde/model.hpp"
#include "sdde/segment.hpp"

namespace sdde {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CRow = Eigen::RowVectorXcd;
using CMat = Eigen::MatrixXcd;

struct CharacteristicMatrices {
    CMat delta;        // lambda I - sum A_k e^{lambda theta_k}
    CMat delta_prime;  // I - sum theta_k A_k e^{lambda theta_k}
};

CharacteristicMatrices characteristic_matrix(const MatrixLagMeasure& measure, cplx lambda);
cplx characteristic_det(const MatrixLagMeasure& measure, cplx lambda);

// Search window for the root census. Zero entries select defaults:
// rho_max = 10/r, omega_guess = norm bound, omega_max = max(8 omega_guess, 20/r).
struct ScanWindow {
    double rho_max = 0.0;
    double delta_margin = 1e-6;
    double omega_max = 0.0;
    double omega_guess = 0.0;
    double tol_imag = 1e-8;
    double tol_real = 1e-9;
    bool zero_root = false;  // look for a simple root at 0 instead of a pair
};

struct CensusCell {
    double re_lo, re_hi, im_lo, im_hi;
    int count;
};

struct CensusReport {
    double re_lo = 0, re_hi = 0, im_lo = 0, im_hi = 0;
    double norm_bound = 0;  // every root with Re >= 0 has modulus below this
    int total = 0;          // roots (with multiplicity) inside the window
    std::vector<CensusCell> cells;
    std::vector<cplx> roots;  // polished, sorted by decreasing real part
    std::string scope;        // what the census does and does not certify
};

struct CriticalPair {
    double omega_c = 0.0;  // 0 in zero-root mode
    cplx root;
    CensusReport census;
};

// Argument-principle census of det(Delta) plus Newton polishing.
// Throws NoCriticalPair / NoZeroRoot, UnstableExtraRoots, WindowTooSmall.
CriticalPair locate_critical_pair(const MatrixLagMeasure& measure, const ScanWindow& window = {});

// All roots inside a rectangle; the workhorse of locate_critical_pair.
CensusReport root_census(const MatrixLagMeasure& measure, double re_lo, double re_hi, double im_lo,
                         double im_hi);

enum class Normalization {
    UnitNorm,      // |d| = 1, largest entry real positive
    ComponentOne,  // d_k = 1 for a chosen component k
};

struct EigenOptions {
    Normalization normalization = Normalization::UnitNorm;
    std::size_t component = 0;
    double extra_phase = 0.0;  // multiplies d by e^{i alpha} after normalisation
};

struct SpectralData {
    double omega_c = 0.0;
    bool zero_root = false;
    CVec d;
    CRow d2;
    cplx c;
    CMat psi_hat;  // 2 x n; row 1 = c d2, row 2 = conj(row 1)
    double period = 0.0;
    double null_residual = 0.0;

    std::size_t dim() const { return static_cast<std::size_t>(d.size()); }
    CRow psi1() const { return psi_hat.row(0); }
    // Phi_1(theta) = d e^{i omega theta}
    CVec phi1(double theta) const;
};

SpectralData eigendata(const MatrixLagMeasure& measure, double omega_c, const EigenOptions& opts = {});
SpectralData zero_root_eigendata(const MatrixLagMeasure& measure, const EigenOptions& opts = {});

// <Psi_which, v e^{mu theta}> evaluated in closed form.
cplx pairing_exponential(const SpectralData& spec, const MatrixLagMeasure& measure, int which, const CVec& v,
                         cplx mu);
// 2 x 2 matrix of <Psi_i, Phi_j> from the closed form.
CMat biorthogonality(const SpectralData& spec, const MatrixLagMeasure& measure);

// Trapezoid evaluation of the bilinear form on the segment grid.
cplx bilinear_pairing(const SpectralData& spec, const MatrixLagMeasure& measure, int which,
                      const HistorySegment& seg);

// Precomputed quadrature weights for one grid. coordinate() rescales the trapezoid
// integrals so that sampled critical modes and jump data at 0 both project exactly;
// the projection is then idempotent on the grid.
class Projector {
public:
    Projector(const SpectralData& spec, const MatrixLagMeasure& measure, std::size_t intervals);

    cplx raw(const HistorySegment& seg) const;
    cplx coordinate(const HistorySegment& seg) const;
    std::size_t intervals() const { return intervals_; }

private:
    const SpectralData* spec_;
    std::size_t n_, intervals_;
    double r_;
    std::vector<cplx> w_;  // (intervals+1) x n node weights
    CMat corr_;

    std::pair<cplx, cplx> parts(const HistorySegment& seg) const;  // Psi(0) seg(0), trapezoid integrals
};

struct Projection {
    cplx z1, z2;
    HistorySegment stable_part;
};

Projection project_critical(const SpectralData& spec, const MatrixLagMeasure& measure, const HistorySegment& seg);

// eta_t^hbar(theta) = sqrt(2 hbar) Re(d e^{i omega (t + theta)}); in zero-root mode Phi h.
HistorySegment critical_orbit(const SpectralData& spec, double r, std::size_t intervals, double hbar, double t);

// Stable part of the jump datum 1_{0} v: history -2Re(d e^{i w theta} Psi1 v),
// value v - 2Re(d Psi1 v) at theta = 0.
HistorySegment stable_jump_datum(const SpectralData& spec, double r, std::size_t intervals, const Vec& v);

}  // namespace sdde
