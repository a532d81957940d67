#include "sdde/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI{0.0, 1.0};

// int_0^L e^{a s} ds
cplx int_exp(cplx a, double L) {
    cplx z = a * L;
    if (std::abs(z) < 1e-4) return L * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
    return (std::exp(z) - 1.0) / a;
}

struct BoundaryHit {};

struct Rect {
    double x0, x1, y0, y1;
    double diag() const { return std::hypot(x1 - x0, y1 - y0); }
    bool contains(cplx z, double slack) const {
        double sx = slack * (x1 - x0) + 1e-12, sy = slack * (y1 - y0) + 1e-12;
        return z.real() >= x0 - sx && z.real() <= x1 + sx && z.imag() >= y0 - sy && z.imag() <= y1 + sy;
    }
};

class Census {
public:
    explicit Census(const MatrixLagMeasure& m) : m_(m) {
        r_ = m.max_delay();
        hmax0_ = 0.2 / (1.0 + r_);
    }

    cplx f(cplx z) const { return characteristic_det(m_, z); }

    double edge(cplx a, cplx b, cplx fa, cplx fb, double hmax, int depth) const {
        double dphi = std::arg(fb / fa);
        if (std::abs(dphi) < kPi / 5 && std::abs(b - a) <= hmax) return dphi;
        if (depth > 60) throw BoundaryHit{};
        cplx mid = 0.5 * (a + b);
        cplx fm = f(mid);
        double ref = std::max(std::abs(fa), std::abs(fb));
        if (!(std::abs(fm) > 1e-13 * ref) || !std::isfinite(std::abs(fm))) throw BoundaryHit{};
        return edge(a, mid, fa, fm, hmax, depth + 1) + edge(mid, b, fm, fb, hmax, depth + 1);
    }

    // Winding number of det(Delta) around the rectangle boundary.
    double winding(const Rect& R, double hmax) const {
        cplx c[4] = {{R.x0, R.y0}, {R.x1, R.y0}, {R.x1, R.y1}, {R.x0, R.y1}};
        cplx fc[4];
        for (int i = 0; i < 4; ++i) {
            fc[i] = f(c[i]);
            if (!(std::abs(fc[i]) > 0.0) || !std::isfinite(std::abs(fc[i]))) throw BoundaryHit{};
        }
        double total = 0.0;
        for (int i = 0; i < 4; ++i) total += edge(c[i], c[(i + 1) % 4], fc[i], fc[(i + 1) % 4], hmax, 0);
        return total / (2.0 * kPi);
    }

    // Count with sampling refinement until two successive levels agree.
    int count(const Rect& R) const {
        double h = hmax0_;
        double prev = winding(R, h);
        for (int level = 0; level < 6; ++level) {
            h *= 0.5;
            double cur = winding(R, h);
            if (std::abs(cur - std::round(cur)) < 0.05 && std::lround(cur) == std::lround(prev))
                return static_cast<int>(std::lround(cur));
            prev = cur;
        }
        fail(ErrorCode::WindowTooSmall, "winding integral did not stabilise");
    }

    bool newton(cplx& z) const {
        const auto n = static_cast<Eigen::Index>(m_.dim());
        for (int it = 0; it < 100; ++it) {
            auto cm = characteristic_matrix(m_, z);
            Eigen::PartialPivLU<CMat> lu(cm.delta);
            cplx det = lu.determinant();
            if (det == 0.0) return true;
            cplx tr = lu.solve(cm.delta_prime).trace();
            if (!std::isfinite(std::abs(tr)) || tr == 0.0) return false;
            cplx step = 1.0 / tr;
            z -= step;
            if (!std::isfinite(std::abs(z))) return false;
            if (std::abs(step) <= 1e-15 * (1.0 + std::abs(z))) return true;
            (void)n;
        }
        return true;
    }

    void split(const Rect& R, int cnt, CensusReport& rep, int depth) const {
        if (cnt == 0) {
            rep.cells.push_back({R.x0, R.x1, R.y0, R.y1, 0});
            return;
        }
        if (cnt == 1 && R.diag() <= 1.0) {
            cplx z{0.5 * (R.x0 + R.x1), 0.5 * (R.y0 + R.y1)};
            if (newton(z) && R.contains(z, 0.01)) {
                rep.cells.push_back({R.x0, R.x1, R.y0, R.y1, 1});
                rep.roots.push_back(z);
                return;
            }
        }
        if (R.diag() < 1e-9 * (1.0 + std::abs(cplx{R.x0, R.y0})) || depth > 80) {
            // cluster of cnt roots that cannot be separated: a multiple root
            cplx z{0.5 * (R.x0 + R.x1), 0.5 * (R.y0 + R.y1)};
            newton(z);
            rep.cells.push_back({R.x0, R.x1, R.y0, R.y1, cnt});
            for (int i = 0; i < cnt; ++i) rep.roots.push_back(z);
            return;
        }
        static const double fracs[] = {0.5123, 0.4871, 0.5379, 0.4617};
        for (double fr : fracs) {
            Rect a = R, b = R;
            if (R.x1 - R.x0 >= R.y1 - R.y0) {
                double xm = R.x0 + fr * (R.x1 - R.x0);
                a.x1 = xm;
                b.x0 = xm;
            } else {
                double ym = R.y0 + fr * (R.y1 - R.y0);
                a.y1 = ym;
                b.y0 = ym;
            }
            try {
                int ca = count(a);
                int cb = count(b);
                if (ca + cb != cnt || ca < 0 || cb < 0) continue;
                split(a, ca, rep, depth + 1);
                split(b, cb, rep, depth + 1);
                return;
            } catch (const BoundaryHit&) {
                continue;
            }
        }
        fail(ErrorCode::WindowTooSmall, "could not subdivide census rectangle consistently");
    }

private:
    const MatrixLagMeasure& m_;
    double r_;
    double hmax0_;
};

}  // namespace

CharacteristicMatrices characteristic_matrix(const MatrixLagMeasure& measure, cplx lambda) {
    const auto n = static_cast<Eigen::Index>(measure.dim());
    CharacteristicMatrices out{lambda * CMat::Identity(n, n), CMat::Identity(n, n)};
    for (const auto& t : measure.terms()) {
        cplx e = std::exp(lambda * t.lag);
        out.delta -= e * t.matrix.cast<cplx>();
        out.delta_prime -= (t.lag * e) * t.matrix.cast<cplx>();
    }
    return out;
}

cplx characteristic_det(const MatrixLagMeasure& measure, cplx lambda) {
    auto cm = characteristic_matrix(measure, lambda);
    if (cm.delta.rows() == 1) return cm.delta(0, 0);
    return cm.delta.partialPivLu().determinant();
}

CensusReport root_census(const MatrixLagMeasure& measure, double re_lo, double re_hi, double im_lo, double im_hi) {
    Census census(measure);
    CensusReport rep;
    Rect R{re_lo, re_hi, im_lo, im_hi};
    int total = -1;
    // nudge the window if a root sits on its boundary
    for (int attempt = 0; attempt < 8 && total < 0; ++attempt) {
        try {
            total = census.count(R);
        } catch (const BoundaryHit&) {
            double s = 1e-3 * (attempt + 1);
            R = {re_lo - s * (re_hi - re_lo), re_hi + 1e-3 * s, im_lo - s, im_hi + s};
        }
    }
    require(total >= 0, ErrorCode::WindowTooSmall, "census window boundary passes through roots");
    rep.re_lo = R.x0;
    rep.re_hi = R.x1;
    rep.im_lo = R.y0;
    rep.im_hi = R.y1;
    rep.total = total;
    census.split(R, total, rep, 0);
    std::sort(rep.roots.begin(), rep.roots.end(), [](cplx a, cplx b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return rep;
}

CriticalPair locate_critical_pair(const MatrixLagMeasure& measure, const ScanWindow& w) {
    const double r = measure.max_delay();
    const double M = measure.norm_bound();
    const double rho = w.rho_max > 0 ? w.rho_max : 10.0 / r;
    const double guess = w.omega_guess > 0 ? w.omega_guess : std::max(M, 1e-3);
    const double omax = w.omega_max > 0 ? w.omega_max : std::max(8.0 * guess, 20.0 / r);
    const double re_hi = std::max(w.delta_margin, 1.01 * M + 1e-6);
    const double im_hi = std::max(omax, 1.01 * M + 1e-6);

    CriticalPair out;
    out.census = root_census(measure, -rho, re_hi, -im_hi, im_hi);
    out.census.norm_bound = M;
    {
        std::ostringstream os;
        os << "roots enumerated only inside Re in [" << out.census.re_lo << ", " << out.census.re_hi
           << "], Im in [" << out.census.im_lo << ", " << out.census.im_hi
           << "]; every root with Re >= 0 has modulus <= " << M
           << " and so lies inside the window; stable roots outside the window are not certified";
        out.census.scope = os.str();
    }

    const auto& roots = out.census.roots;
    std::vector<cplx> crit;
    for (cplx z : roots) {
        if (std::abs(z.real()) > w.tol_imag) continue;
        if (w.zero_root ? std::abs(z.imag()) <= w.tol_imag : z.imag() > w.tol_imag) crit.push_back(z);
    }
    double max_re = roots.empty() ? -std::numeric_limits<double>::infinity() : roots.front().real();
    if (crit.empty()) {
        std::ostringstream os;
        os << (w.zero_root ? "no simple root at zero" : "no root pair on the imaginary axis")
           << " (largest real part in window " << max_re << ")";
        fail(w.zero_root ? ErrorCode::NoZeroRoot : ErrorCode::NoCriticalPair, os.str());
    }
    if (crit.size() > 1) fail(ErrorCode::UnstableExtraRoots, "more than one critical root on the imaginary axis");
    cplx z = crit.front();
    for (cplx q : roots) {
        bool is_crit = std::abs(q - z) <= 1e-7 * (1 + std::abs(z)) || std::abs(q - std::conj(z)) <= 1e-7 * (1 + std::abs(z));
        if (is_crit) continue;
        if (q.real() > w.tol_real || q.real() >= -w.delta_margin) {
            std::ostringstream os;
            os << "extra root " << q.real() << (q.imag() >= 0 ? "+" : "") << q.imag() << "i with Re >= -delta_margin";
            fail(ErrorCode::UnstableExtraRoots, os.str());
        }
    }
    out.root = z;
    out.omega_c = w.zero_root ? 0.0 : z.imag();
    return out;
}

CVec SpectralData::phi1(double theta) const {
    return d * std::exp(kI * omega_c * theta);
}

namespace {

SpectralData build_eigendata(const MatrixLagMeasure& measure, double omega, bool zero_root, const EigenOptions& opts) {
    const auto n = static_cast<Eigen::Index>(measure.dim());
    cplx lambda = zero_root ? cplx{0.0, 0.0} : cplx{0.0, omega};
    auto cm = characteristic_matrix(measure, lambda);
    Eigen::JacobiSVD<CMat> svd(cm.delta, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double dp_norm = cm.delta_prime.norm();
    if (n >= 2 && sv(n - 1) > 1e-6 * sv(n - 2))
        fail(ErrorCode::DegenerateRoot, "smallest singular value of Delta is not isolated");

    SpectralData s;
    s.omega_c = zero_root ? 0.0 : omega;
    s.zero_root = zero_root;
    s.period = zero_root ? std::numeric_limits<double>::infinity() : 2.0 * kPi / omega;
    CVec d = svd.matrixV().col(n - 1);
    CRow d2 = svd.matrixU().col(n - 1).adjoint();

    Eigen::Index k = 0;
    d.cwiseAbs().maxCoeff(&k);
    if (opts.normalization == Normalization::ComponentOne) {
        require(opts.component < static_cast<std::size_t>(n), ErrorCode::Config, "normalisation component out of range");
        cplx dk = d(static_cast<Eigen::Index>(opts.component));
        require(std::abs(dk) > 1e-12, ErrorCode::Config, "normalisation component of d vanishes");
        d /= dk;
    } else {
        d *= std::conj(d(k)) / std::abs(d(k));
        d /= d.norm();
    }
    Eigen::Index k2 = 0;
    d2.cwiseAbs().maxCoeff(&k2);
    d2 *= std::conj(d2(k2)) / std::abs(d2(k2));
    if (zero_root) {
        d = d.real().cast<cplx>();
        d2 = d2.real().cast<cplx>();
    }
    d *= std::exp(kI * opts.extra_phase);

    cplx denom = (d2 * cm.delta_prime * d)(0, 0);
    if (std::abs(denom) <= 1e-10 * dp_norm * d.norm() * d2.norm())
        fail(ErrorCode::DegenerateRoot, "root is not algebraically simple (d2 Delta' d = 0)");
    s.d = d;
    s.d2 = d2;
    s.c = 1.0 / denom;
    s.psi_hat.resize(2, n);
    s.psi_hat.row(0) = s.c * d2;
    s.psi_hat.row(1) = s.psi_hat.row(0).conjugate();
    double scale = std::max(dp_norm, 1.0);
    s.null_residual =
        std::max((cm.delta * d).norm() / d.norm(), (d2 * cm.delta).norm() / d2.norm()) / scale;
    return s;
}

}  // namespace

SpectralData eigendata(const MatrixLagMeasure& measure, double omega_c, const EigenOptions& opts) {
    require(omega_c > 0.0, ErrorCode::Config, "omega_c must be positive");
    return build_eigendata(measure, omega_c, false, opts);
}

SpectralData zero_root_eigendata(const MatrixLagMeasure& measure, const EigenOptions& opts) {
    return build_eigendata(measure, 0.0, true, opts);
}

cplx pairing_exponential(const SpectralData& spec, const MatrixLagMeasure& measure, int which, const CVec& v, cplx mu) {
    require(which == 1 || which == 2, ErrorCode::Domain, "pairing index must be 1 or 2");
    const double nu = which == 1 ? spec.omega_c : -spec.omega_c;
    CRow psi = spec.psi_hat.row(which - 1);
    const auto n = static_cast<Eigen::Index>(measure.dim());
    CMat K = CMat::Identity(n, n);
    for (const auto& t : measure.terms()) {
        if (t.lag == 0.0) continue;
        // int_{theta_k}^0 e^{(mu - i nu) s} ds
        cplx integral = int_exp(-(mu - kI * nu), -t.lag);
        K += std::exp(kI * nu * t.lag) * integral * t.matrix.cast<cplx>();
    }
    return (psi * K * v)(0, 0);
}

CMat biorthogonality(const SpectralData& spec, const MatrixLagMeasure& measure) {
    CMat B(2, 2);
    const cplx iw = kI * spec.omega_c;
    CVec dbar = spec.d.conjugate();
    B(0, 0) = pairing_exponential(spec, measure, 1, spec.d, iw);
    B(0, 1) = pairing_exponential(spec, measure, 1, dbar, -iw);
    B(1, 0) = pairing_exponential(spec, measure, 2, spec.d, iw);
    B(1, 1) = pairing_exponential(spec, measure, 2, dbar, -iw);
    return B;
}

Projector::Projector(const SpectralData& spec, const MatrixLagMeasure& measure, std::size_t intervals)
    : spec_(&spec), n_(measure.dim()), intervals_(intervals), r_(measure.max_delay()) {
    const double h = r_ / static_cast<double>(intervals);
    const double w = spec.omega_c;
    w_.assign((intervals + 1) * n_, cplx{});
    HistorySegment probe(n_, r_, intervals);
    CRow psi = spec.psi1();
    for (const auto& t : measure.terms()) {
        if (t.lag == 0.0) continue;
        CRow Rk = std::exp(kI * w * t.lag) * (psi * t.matrix.cast<cplx>());
        auto add = [&](std::size_t i, cplx weight) {
            for (std::size_t c = 0; c < n_; ++c) w_[i * n_ + c] += weight * Rk(static_cast<Eigen::Index>(c));
        };
        auto node_factor = [&](std::size_t i) { return std::exp(-kI * w * probe.theta(i)); };
        GridPosition pos = probe.locate(t.lag);
        std::size_t first = pos.index;
        if (pos.frac > 0.0) {
            double len = (1.0 - pos.frac) * h;
            cplx e0 = std::exp(-kI * w * t.lag);
            add(pos.index, 0.5 * len * e0 * (1.0 - pos.frac));
            add(pos.index + 1, 0.5 * len * e0 * pos.frac);
            add(pos.index + 1, 0.5 * len * node_factor(pos.index + 1));
            first = pos.index + 1;
        }
        for (std::size_t i = first; i <= intervals; ++i) {
            double wt = (i == first || i == intervals) ? 0.5 * h : h;
            if (first == intervals) wt = 0.0;
            add(i, wt * node_factor(i));
        }
    }
    // Trapezoid integrals against the sampled Phi_1, Phi_2. The exact values are
    // delta_ij - Psi_hat_i Phi_j(0); corr_ maps the discrete ones onto them.
    auto integral = [&](const CVec& v, double sign) {
        cplx acc{};
        for (std::size_t i = 0; i <= intervals; ++i) {
            cplx e = std::exp(sign * kI * w * probe.theta(i));
            for (std::size_t c = 0; c < n_; ++c) acc += w_[i * n_ + c] * e * v(static_cast<Eigen::Index>(c));
        }
        return acc;
    };
    const cplx pd = (psi * spec.d)(0, 0);
    if (spec.zero_root) {
        cplx ih = integral(spec.d, 1.0), exact = 1.0 - pd;
        corr_ = CMat::Constant(1, 1, std::abs(ih) > 1e-14 ? exact / ih : cplx{1.0, 0.0});
    } else {
        const cplx pdb = (psi * spec.d.conjugate())(0, 0);
        CMat ih(2, 2), exact(2, 2);
        cplx a = integral(spec.d, 1.0), b = integral(spec.d.conjugate(), -1.0);
        ih << a, b, std::conj(b), std::conj(a);
        exact << 1.0 - pd, -pdb, -std::conj(pdb), 1.0 - std::conj(pd);
        corr_ = ih.cwiseAbs().maxCoeff() > 1e-14 ? CMat(exact * ih.inverse()) : CMat(CMat::Identity(2, 2));
    }
}

std::pair<cplx, cplx> Projector::parts(const HistorySegment& seg) const {
    require(seg.dim() == n_ && seg.intervals() == intervals_ && std::abs(seg.span() - r_) <= 1e-12 * r_,
            ErrorCode::Domain, "segment grid does not match the projector");
    const double* x = seg.data().data();
    cplx acc{};
    const std::size_t total = (intervals_ + 1) * n_;
    for (std::size_t q = 0; q < total; ++q) acc += w_[q] * x[q];
    const double* x0 = seg.has_jump() ? seg.jump().data() : seg.node(intervals_);
    CRow psi = spec_->psi1();
    cplx head{};
    for (std::size_t c = 0; c < n_; ++c) head += psi(static_cast<Eigen::Index>(c)) * x0[c];
    return {head, acc};
}

cplx Projector::raw(const HistorySegment& seg) const {
    auto [head, integral] = parts(seg);
    return head + integral;
}

cplx Projector::coordinate(const HistorySegment& seg) const {
    auto [head, integral] = parts(seg);
    if (spec_->zero_root) return head + corr_(0, 0) * integral;
    return head + corr_(0, 0) * integral + corr_(0, 1) * std::conj(integral);
}

cplx bilinear_pairing(const SpectralData& spec, const MatrixLagMeasure& measure, int which, const HistorySegment& seg) {
    require(which == 1 || which == 2, ErrorCode::Domain, "pairing index must be 1 or 2");
    require(std::abs(seg.span() - measure.max_delay()) <= 1e-12 * measure.max_delay(), ErrorCode::Domain,
            "segment span differs from the delay");
    Projector p(spec, measure, seg.intervals());
    cplx z = p.raw(seg);
    return which == 1 ? z : std::conj(z);
}

Projection project_critical(const SpectralData& spec, const MatrixLagMeasure& measure, const HistorySegment& seg) {
    Projector p(spec, measure, seg.intervals());
    cplx z = p.coordinate(seg);
    Projection out{z, std::conj(z), seg};
    HistorySegment& s = out.stable_part;
    const std::size_t n = seg.dim();
    for (std::size_t i = 0; i < seg.nodes(); ++i) {
        CVec ph = spec.phi1(seg.theta(i));
        double* x = s.node(i);
        for (std::size_t c = 0; c < n; ++c) {
            cplx v = ph(static_cast<Eigen::Index>(c)) * z;
            x[c] -= spec.zero_root ? v.real() : 2.0 * v.real();
        }
    }
    if (seg.has_jump()) {
        std::vector<double> j = seg.jump();
        for (std::size_t c = 0; c < n; ++c) {
            cplx v = spec.d(static_cast<Eigen::Index>(c)) * z;
            j[c] -= spec.zero_root ? v.real() : 2.0 * v.real();
        }
        s.set_jump(j);
    }
    return out;
}

HistorySegment critical_orbit(const SpectralData& spec, double r, std::size_t intervals, double hbar, double t) {
    require(hbar >= 0.0, ErrorCode::Domain, "hbar must be nonnegative");
    const std::size_t n = spec.dim();
    const double amp = spec.zero_root ? hbar : std::sqrt(2.0 * hbar);
    return HistorySegment::sample(n, r, intervals, [&](double th, double* x) {
        cplx e = std::exp(kI * spec.omega_c * (t + th));
        for (std::size_t c = 0; c < n; ++c) x[c] = amp * (spec.d(static_cast<Eigen::Index>(c)) * e).real();
    });
}

HistorySegment stable_jump_datum(const SpectralData& spec, double r, std::size_t intervals, const Vec& v) {
    const std::size_t n = spec.dim();
    cplx a = (spec.psi1() * v.cast<cplx>())(0, 0);
    const double mult = spec.zero_root ? 1.0 : 2.0;
    HistorySegment seg = HistorySegment::sample(n, r, intervals, [&](double th, double* x) {
        cplx e = std::exp(kI * spec.omega_c * th) * a;
        for (std::size_t c = 0; c < n; ++c) x[c] = -mult * (spec.d(static_cast<Eigen::Index>(c)) * e).real();
    });
    std::vector<double> j(n);
    for (std::size_t c = 0; c < n; ++c) j[c] = v(static_cast<Eigen::Index>(c)) - mult * (spec.d(static_cast<Eigen::Index>(c)) * a).real();
    seg.set_jump(j);
    return seg;
}

}  // namespace sdde
