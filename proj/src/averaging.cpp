#include "sdde/averaging.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "sdde/errors.hpp"
#include "sdde/simulator.hpp"

namespace sdde {

double Polynomial::operator()(double x) const {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
    return acc;
}

double Polynomial::derivative(double x) const {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * c[k];
    return acc;
}

unsigned Polynomial::degree() const {
    for (std::size_t k = c.size(); k-- > 0;)
        if (c[k] != 0.0) return static_cast<unsigned>(k);
    return 0;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
    if (o.c.size() > c.size()) c.resize(o.c.size(), 0.0);
    for (std::size_t k = 0; k < o.c.size(); ++k) c[k] += o.c[k];
    return *this;
}

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::bH: return "bH";
        case Provenance::bHq1: return "bHq1";
        case Provenance::bHq2: return "bHq2";
    }
    return "?";
}

Polynomial ReducedCoefficients::drift() const {
    Polynomial out;
    for (const auto& t : drift_terms) out += t.poly;
    return out;
}

const Polynomial* ReducedCoefficients::term(Provenance p) const {
    for (const auto& t : drift_terms)
        if (t.tag == p) return &t.poly;
    return nullptr;
}

void ReducedCoefficients::add(Provenance p, const Polynomial& poly) {
    for (auto& t : drift_terms)
        if (t.tag == p) {
            t.poly += poly;
            return;
        }
    drift_terms.push_back({p, poly});
}

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI{0.0, 1.0};

inline cplx at(const CVec& v, std::size_t i) { return v(static_cast<Eigen::Index>(i)); }
inline cplx at(const CRow& v, std::size_t i) { return v(static_cast<Eigen::Index>(i)); }

// int_0^L e^{mu s} ds
cplx int_exp(cplx mu, double L) {
    cplx z = mu * L;
    if (std::abs(z) < 1e-4) return L * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
    return (std::exp(z) - 1.0) / mu;
}

bool present(const std::optional<PolyLagFunctional>& f) { return f && !f->is_zero(); }

// Stacked lag values of eta^hbar_t (or Phi h in zero-root mode).
void orbit_stack(const SpectralData& s, const PolyLagFunctional& f, double hbar, double t, double* u) {
    const std::size_t n = s.dim();
    const double amp = s.zero_root ? hbar : std::sqrt(2.0 * hbar);
    for (std::size_t l = 0; l < f.num_lags(); ++l) {
        cplx e = s.zero_root ? cplx{1.0, 0.0} : std::exp(kI * s.omega_c * (t + f.lags()[l]));
        for (std::size_t c = 0; c < n; ++c) u[l * n + c] = amp * (at(s.d, c) * e).real();
    }
}

// E_t = 2 Re(e^{-i w t} Psi1), a real row.
void calE(const SpectralData& s, double t, double* out) {
    cplx e = std::exp(-kI * s.omega_c * t);
    for (std::size_t c = 0; c < s.dim(); ++c) out[c] = 2.0 * (e * s.psi_hat(0, static_cast<Eigen::Index>(c))).real();
}

cplx psi1_dot(const SpectralData& s, const double* v) {
    cplx acc = 0.0;
    for (std::size_t c = 0; c < s.dim(); ++c) acc += s.psi_hat(0, static_cast<Eigen::Index>(c)) * v[c];
    return acc;
}

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += a[c] * b[c];
    return acc;
}

// Evaluation buffers for one functional.
struct Evaluator {
    const PolyLagFunctional* f;
    std::vector<double> u, out, jac;

    explicit Evaluator(const PolyLagFunctional& fn)
        : f(&fn), u(fn.num_vars()), out(fn.dim()), jac(fn.dim() * fn.num_vars()) {}
    void at(const SpectralData& s, double hbar, double t, bool with_jac) {
        orbit_stack(s, *f, hbar, t, u.data());
        f->eval(u.data(), out.data());
        if (with_jac) f->jacobian(u.data(), jac.data());
    }
    // sum_p E[p] dF_p / d u_{l, i}
    double rho(const double* E, std::size_t l, std::size_t i) const {
        const std::size_t n = f->dim(), nv = f->num_vars();
        double acc = 0.0;
        for (std::size_t p = 0; p < n; ++p) acc += E[p] * jac[p * nv + l * n + i];
        return acc;
    }
};

// Fourier coefficients for m in [-H, H] of samples on a uniform period grid.
class Harmonics {
public:
    Harmonics(std::size_t M, int H) : M_(M), H_(H), tw_(M) {
        for (std::size_t k = 0; k < M; ++k) tw_[k] = std::exp(-2.0 * kPi * kI * static_cast<double>(k) / static_cast<double>(M));
    }
    int H() const { return H_; }
    std::vector<cplx> operator()(const std::vector<cplx>& f) const {
        std::vector<cplx> out(2 * static_cast<std::size_t>(H_) + 1);
        for (int m = -H_; m <= H_; ++m) {
            cplx acc = 0.0;
            const std::size_t step = static_cast<std::size_t>((m % static_cast<int>(M_) + static_cast<int>(M_)) % static_cast<int>(M_));
            std::size_t idx = 0;
            for (std::size_t k = 0; k < M_; ++k) {
                acc += f[k] * tw_[idx];
                idx = (idx + step) % M_;
            }
            out[static_cast<std::size_t>(m + H_)] = acc / static_cast<double>(M_);
        }
        return out;
    }

private:
    std::size_t M_;
    int H_;
    std::vector<cplx> tw_;
};

inline cplx hm(const std::vector<cplx>& h, int m, int H) {
    return (m < -H || m > H) ? cplx{0.0, 0.0} : h[static_cast<std::size_t>(m + H)];
}

struct Fit {
    std::vector<Polynomial> polys;
    double residual = 0.0;
};

// Probes at x = 0, 1, ..., D+1; interpolates through the first D+1 and checks the last.
Fit fit_probes(unsigned D, const std::function<std::vector<double>(double)>& f, const std::string& what) {
    const std::size_t np = D + 2;
    std::vector<std::vector<double>> vals(np);
    for (std::size_t k = 0; k < np; ++k) vals[k] = f(static_cast<double>(k));
    const std::size_t nout = vals[0].size();
    Eigen::MatrixXd V(D + 1, D + 1);
    for (unsigned i = 0; i <= D; ++i)
        for (unsigned j = 0; j <= D; ++j) V(i, j) = std::pow(static_cast<double>(i), static_cast<double>(j));
    auto lu = V.fullPivLu();
    Fit fit;
    for (std::size_t q = 0; q < nout; ++q) {
        Eigen::VectorXd y(D + 1);
        double scale = 0.0;
        for (std::size_t k = 0; k < np; ++k) scale = std::max(scale, std::abs(vals[k][q]));
        for (unsigned i = 0; i <= D; ++i) y(i) = vals[i][q];
        Eigen::VectorXd coef = lu.solve(y);
        Polynomial p;
        p.c.assign(coef.data(), coef.data() + coef.size());
        double cmax = 0.0;
        for (double c : p.c) cmax = std::max(cmax, std::abs(c));
        for (double& c : p.c)
            if (std::abs(c) <= 1e-13 * cmax) c = 0.0;
        double res = scale > 0.0 ? std::abs(p(static_cast<double>(D + 1)) - vals[D + 1][q]) / scale : 0.0;
        fit.residual = std::max(fit.residual, res);
        fit.polys.push_back(std::move(p));
    }
    if (fit.residual > 1e-9) {
        std::ostringstream os;
        os << what << ": polynomial fit residual " << fit.residual << " exceeds tolerance";
        fail(ErrorCode::Numeric, os.str());
    }
    return fit;
}

struct Rule {
    std::vector<double> x, w;
};

// Composite 30-point Gauss-Legendre on [a, b].
Rule gauss_rule(double a, double b, std::size_t panels) {
    using G = boost::math::quadrature::gauss<double, 30>;
    const auto& ab = G::abscissa();
    const auto& wt = G::weights();
    Rule r;
    const double len = (b - a) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + static_cast<double>(p) * len, half = len / 2.0, mid = lo + half;
        for (std::size_t k = 0; k < ab.size(); ++k) {
            if (ab[k] == 0.0) {
                r.x.push_back(mid);
                r.w.push_back(half * wt[k]);
            } else {
                r.x.push_back(mid - half * ab[k]);
                r.w.push_back(half * wt[k]);
                r.x.push_back(mid + half * ab[k]);
                r.w.push_back(half * wt[k]);
            }
        }
    }
    return r;
}

double noise_free_G_average(const SpectralData& s, const PolyLagFunctional& G, double hbar, std::size_t M) {
    Evaluator ev(G);
    std::vector<double> E(s.dim());
    const double amp = std::sqrt(2.0 * hbar);
    double acc = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
        double t = s.period * static_cast<double>(k) / static_cast<double>(M);
        ev.at(s, hbar, t, false);
        calE(s, t, E.data());
        acc += amp * dot(E.data(), ev.out.data(), s.dim());
    }
    return acc / static_cast<double>(M);
}

unsigned g_degree_bound(const std::optional<PolyLagFunctional>& G) {
    return present(G) ? (G->degree() + 2) / 2 : 0;  // ceil((deg+1)/2)
}

}  // namespace

// ---------------------------------------------------------------- workspace

AveragingWorkspace::AveragingWorkspace(const MatrixLagMeasure& measure, const SpectralData& spec, WorkspaceOptions opts)
    : measure_(measure), spec_(spec), opts_(opts) {
    require(opts_.M >= 8, ErrorCode::Config, "quadrature node count M must be at least 8");
    require(opts_.T_inf_factor > 0.0, ErrorCode::Config, "T_inf factor must be positive");
    require(opts_.store_stride >= 1, ErrorCode::Config, "store stride must be positive");
    require(spec_.dim() == measure_.dim(), ErrorCode::Config, "spectral data does not match the measure");
}

const std::vector<FundamentalSolution>& AveragingWorkspace::fundamental() const {
    std::call_once(once_, [this] {
        const double r = measure_.max_delay();
        const std::size_t N = opts_.fund_step > 0.0 ? steps_per_delay(r, opts_.fund_step) : 100000;
        const double h = r / static_cast<double>(N);
        const std::size_t n = spec_.dim();
        const std::size_t windows = static_cast<std::size_t>(std::ceil(opts_.T_inf_factor - 1e-9));
        PerturbedModel pm;
        pm.L0 = measure_;
        std::vector<FundamentalSolution> out(n);
        parallel_for(n, opts_.threads, [&](std::size_t j) {
            Vec e = Vec::Zero(static_cast<Eigen::Index>(n));
            e(static_cast<Eigen::Index>(j)) = 1.0;
            HistorySegment init = stable_jump_datum(spec_, r, N, e);
            PathEngine eng(pm, h, false);
            eng.reset(init, 0);
            FundamentalSolution& fs = out[j];
            fs.n = n;
            fs.du = h * static_cast<double>(opts_.store_stride);
            fs.sup0 = init.sup_norm();
            fs.values.reserve(windows * N / opts_.store_stride * n + n);
            fs.values.insert(fs.values.end(), eng.current(), eng.current() + n);
            std::vector<double> sups;
            for (std::size_t w = 0; w < windows; ++w) {
                double sup = 0.0;
                for (std::size_t k = 1; k <= N; ++k) {
                    eng.step();
                    const double* x = eng.current();
                    for (std::size_t c = 0; c < n; ++c) sup = std::max(sup, std::abs(x[c]));
                    if (eng.step_index() % opts_.store_stride == 0) fs.values.insert(fs.values.end(), x, x + n);
                }
                if (!eng.finite() || !std::isfinite(sup))
                    fail(ErrorCode::Numeric, "fundamental solution became non-finite");
                sups.push_back(sup);
                const double rel = sup / fs.sup0;
                if (rel <= 1e-9) break;
                // discretisation floor: decay has stalled well below tolerance
                if (sups.size() >= 3 && rel <= 1e-2 * opts_.decay_tol && sup >= 0.8 * sups[sups.size() - 2]) break;
            }
            fs.sup_last = sups.back();
            fs.decayed = fs.sup_last <= opts_.decay_tol * fs.sup0;
            if (!fs.decayed) {
                std::ostringstream os;
                os << "fundamental solution " << j << " decayed only to " << fs.sup_last / fs.sup0
                   << " of its initial size by T_inf = " << T_inf();
                fail(ErrorCode::DecayNotReached, os.str());
            }
            // log-linear fit of the window sups above the floor
            std::vector<std::pair<double, double>> pts;
            for (std::size_t k = 0; k < sups.size(); ++k)
                if (sups[k] >= 10.0 * fs.sup_last && sups[k] > 0.0)
                    pts.emplace_back(r * static_cast<double>(k + 1), std::log(sups[k]));
            if (pts.size() < 2) {
                pts.clear();
                for (std::size_t k = 0; k < sups.size(); ++k)
                    if (sups[k] > 0.0) pts.emplace_back(r * static_cast<double>(k + 1), std::log(sups[k]));
            }
            double slope = 0.0;
            if (pts.size() >= 2) {
                double mx = 0, my = 0;
                for (auto& p : pts) mx += p.first, my += p.second;
                mx /= static_cast<double>(pts.size());
                my /= static_cast<double>(pts.size());
                double sxx = 0, sxy = 0;
                for (auto& p : pts) sxx += (p.first - mx) * (p.first - mx), sxy += (p.first - mx) * (p.second - my);
                slope = sxy / sxx;
            } else if (!pts.empty()) {
                slope = (pts[0].second - std::log(fs.sup0)) / pts[0].first;
            }
            fs.decay_rate = std::max(-slope, 1e-12);
        });
        fund_ = std::move(out);
    });
    return fund_;
}

const std::vector<cplx>& AveragingWorkspace::transform(std::size_t j, cplx lambda) const {
    const auto& fund = fundamental();
    auto key = std::make_tuple(j, lambda.real(), lambda.imag());
    {
        std::lock_guard<std::mutex> lk(cache_mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    const FundamentalSolution& fs = fund.at(j);
    const std::size_t n = fs.n, K = fs.size();
    std::vector<cplx> acc(n, 0.0);
    const cplx q = std::exp(-lambda * fs.du);
    cplx w = 1.0;
    for (std::size_t k = 0; k < K; ++k) {
        if ((k & 4095u) == 0) w = std::exp(-lambda * (fs.du * static_cast<double>(k)));
        const double tw = (k == 0 || k + 1 == K) ? 0.5 : 1.0;
        const double* x = fs.values.data() + k * n;
        for (std::size_t i = 0; i < n; ++i) acc[i] += tw * w * x[i];
        w *= q;
    }
    for (auto& a : acc) a *= fs.du;
    std::lock_guard<std::mutex> lk(cache_mu_);
    return cache_.emplace(key, std::move(acc)).first->second;
}

cplx AveragingWorkspace::laplace(std::size_t j, double theta, std::size_t i, cplx lambda) const {
    require(theta <= 0.0 && theta >= -measure_.max_delay() * (1.0 + 1e-12), ErrorCode::Domain,
            "lag outside [-r, 0]");
    const cplx a = spec_.psi_hat(0, static_cast<Eigen::Index>(j));
    const cplx da = at(spec_.d, i) * a;
    const double L = -theta;
    cplx hist;
    if (spec_.zero_root) {
        hist = -da * int_exp(-lambda, L);
    } else {
        const double w = spec_.omega_c;
        hist = -da * std::exp(kI * w * theta) * int_exp(kI * w - lambda, L) -
               std::conj(da) * std::exp(-kI * w * theta) * int_exp(-kI * w - lambda, L);
    }
    return hist + std::exp(lambda * theta) * transform(j, lambda)[i];
}

double AveragingWorkspace::tail_per_unit(cplx lambda) const {
    double worst = 0.0;
    for (const auto& fs : fundamental()) {
        double rate = std::max(fs.decay_rate + lambda.real(), 1e-12);
        worst = std::max(worst, fs.sup_last / rate);
    }
    return worst;
}

void AveragingWorkspace::fill_meta(QuadratureMeta& meta) const {
    meta.M = opts_.M;
    meta.T_inf = T_inf();
    const auto& fund = fundamental();
    double T_used = 0.0, rate = std::numeric_limits<double>::infinity();
    for (const auto& fs : fund) {
        T_used = std::max(T_used, fs.T_used());
        rate = std::min(rate, fs.decay_rate);
    }
    meta.T_used = T_used;
    meta.decay_rate = fund.empty() ? 0.0 : rate;
    meta.fund_dt = fund.empty() ? 0.0 : fund[0].du / static_cast<double>(opts_.store_stride);
}

// ---------------------------------------------------------------- white noise

ReducedCoefficients averaged_white(const PerturbedModel& model, const AveragingWorkspace& ws) {
    require(model.kind == PerturbationKind::White, ErrorCode::Domain, "averaged_white needs a white-noise model");
    const SpectralData& s = ws.spec();
    require(!s.zero_root, ErrorCode::Domain, "zero-root spectra are handled by zero_root_coefficients");
    const std::size_t M = ws.options().M, n = s.dim();
    const bool hasF = present(model.F), hasG = present(model.G);
    unsigned D = g_degree_bound(model.G);
    if (hasF) D = std::max(D, model.F->degree() + 1);

    auto eval = [&](double hbar) {
        double b = hasG ? noise_free_G_average(s, *model.G, hbar, M) : 0.0;
        double sig = 0.0;
        if (hasF) {
            Evaluator ev(*model.F);
            std::vector<double> E(n);
            const double amp = std::sqrt(2.0 * hbar);
            double bs = 0.0;
            for (std::size_t k = 0; k < M; ++k) {
                double t = s.period * static_cast<double>(k) / static_cast<double>(M);
                ev.at(s, hbar, t, false);
                calE(s, t, E.data());
                bs += 2.0 * std::norm(psi1_dot(s, ev.out.data()));
                double sg = amp * dot(E.data(), ev.out.data(), n);
                sig += sg * sg;
            }
            b += bs / static_cast<double>(M);
            sig /= static_cast<double>(M);
        }
        return std::vector<double>{b, sig};
    };
    Fit fit = fit_probes(D, eval, "white-noise averages");
    ReducedCoefficients rc;
    rc.add(Provenance::bH, fit.polys[0]);
    rc.diffusion_sq = fit.polys[1];
    rc.meta.M = M;
    rc.meta.fit_residual = fit.residual;
    return rc;
}

namespace {

LinearConstants upsilon_constants(const PerturbedModel& model, const SpectralData& s, CVec& v1) {
    LinearConstants lc;
    lc.upsilon = CMat::Zero(2, 2);
    const auto n = static_cast<Eigen::Index>(s.dim());
    v1 = CVec::Zero(n);
    if (!present(model.F)) return lc;
    require(model.F->is_linear_homogeneous(), ErrorCode::Domain, "linear constants need F linear without constant term");
    MatrixLagMeasure L1 = model.F->to_measure(model.max_delay());
    for (const auto& t : L1.terms()) v1 += t.matrix.cast<cplx>() * s.phi1(t.lag);
    CVec v2 = v1.conjugate();
    lc.upsilon(0, 0) = (s.psi_hat.row(0) * v1)(0, 0);
    lc.upsilon(0, 1) = (s.psi_hat.row(0) * v2)(0, 0);
    lc.upsilon(1, 0) = (s.psi_hat.row(1) * v1)(0, 0);
    lc.upsilon(1, 1) = (s.psi_hat.row(1) * v2)(0, 0);
    lc.theta_star = std::arg(lc.upsilon(0, 0));
    return lc;
}

}  // namespace

LinearConstants averaged_linear_white(const PerturbedModel& model, const SpectralData& spec) {
    require(!spec.zero_root, ErrorCode::Domain, "linear constants need a critical pair");
    CVec v1;
    LinearConstants lc = upsilon_constants(model, spec, v1);
    const CMat& U = lc.upsilon;
    lc.C_b = (U(0, 0) * U(1, 1) + U(0, 1) * U(1, 0)).real();
    cplx tr = U(0, 0) + U(1, 1);
    lc.C_sigma = (tr * tr + 2.0 * U(0, 1) * U(1, 0)).real();
    lc.lambda_avg = lc.C_b - 0.5 * lc.C_sigma;
    lc.stable = std::cos(2.0 * lc.theta_star) > 0.0;
    return lc;
}

// ---------------------------------------------------------------- quadratic corrections

CenteringReport check_gq_centering(const PerturbedModel& model, const SpectralData& s) {
    CenteringReport rep;
    if (!present(model.Gq)) return rep;
    Evaluator ev(*model.Gq);
    const double psi_norm = s.psi_hat.row(0).norm();
    if (s.zero_root) {
        for (double h : {-1.0, 0.5, 1.0, 2.0}) {
            ev.at(s, h, 0.0, false);
            rep.residual = std::max(rep.residual, std::abs(psi1_dot(s, ev.out.data())));
            double gn = 0.0;
            for (double v : ev.out) gn += v * v;
            rep.scale = std::max(rep.scale, psi_norm * std::sqrt(gn));
        }
    } else {
        const std::size_t M = 256;
        for (double h : {0.5, 1.0, 2.0}) {
            cplx acc = 0.0;
            double mag = 0.0;
            for (std::size_t k = 0; k < M; ++k) {
                double t = s.period * static_cast<double>(k) / static_cast<double>(M);
                ev.at(s, h, t, false);
                cplx v = psi1_dot(s, ev.out.data());
                acc += std::exp(-kI * s.omega_c * t) * v;
                double gn = 0.0;
                for (double x : ev.out) gn += x * x;
                mag += psi_norm * std::sqrt(gn);
            }
            rep.residual = std::max(rep.residual, std::abs(acc) / static_cast<double>(M));
            rep.scale = std::max(rep.scale, mag / static_cast<double>(M));
        }
    }
    rep.passed = rep.residual <= 1e-8 * rep.scale;
    return rep;
}

namespace {

double bhq1_value(const SpectralData& s, const PolyLagFunctional& Gq, double hbar, std::size_t M) {
    if (hbar == 0.0) return 0.0;
    const std::size_t n = s.dim();
    const double P = s.period, w = s.omega_c, amp = std::sqrt(2.0 * hbar);
    const std::size_t panels = std::max<std::size_t>(1, (M + 29) / 30);
    Rule outer = gauss_rule(0.0, P, panels);
    Evaluator ev(Gq);
    std::vector<double> E(n), xi(Gq.num_vars()), dG(n);
    double total = 0.0;
    for (std::size_t a = 0; a < outer.x.size(); ++a) {
        const double t = outer.x[a];
        ev.at(s, hbar, t, false);
        const cplx at_ = psi1_dot(s, ev.out.data());
        Rule inner = gauss_rule(0.0, P - t, panels);
        double acc = 0.0;
        for (std::size_t b = 0; b < inner.x.size(); ++b) {
            const double sv = inner.x[b], tau = t + sv;
            ev.at(s, hbar, tau, true);
            const cplx bt = psi1_dot(s, ev.out.data());
            double term = 4.0 * (at_ * std::conj(bt) * std::exp(kI * w * sv)).real();
            for (std::size_t l = 0; l < Gq.num_lags(); ++l) {
                cplx e = std::exp(kI * w * (sv + Gq.lags()[l])) * at_;
                for (std::size_t c = 0; c < n; ++c) xi[l * n + c] = 2.0 * (at(s.d, c) * e).real();
            }
            Gq.directional(ev.u.data(), xi.data(), dG.data());
            calE(s, tau, E.data());
            term += amp * dot(E.data(), dG.data(), n);
            acc += inner.w[b] * term;
        }
        total += outer.w[a] * acc;
    }
    return total / P;
}

// sqrt(2 hbar) sum gamma_{j,-m} r_{l,i,m} I(-i m w; j, theta_l, i); also returns the tail bound.
std::pair<double, double> bhq2_value(const AveragingWorkspace& ws, const PolyLagFunctional& Gq, double hbar) {
    if (hbar == 0.0) return {0.0, 0.0};
    const SpectralData& s = ws.spec();
    const std::size_t n = s.dim(), M = ws.options().M, nl = Gq.num_lags();
    const int H = static_cast<int>(Gq.degree()) + 2;
    Harmonics harm(M, H);
    Evaluator ev(Gq);
    std::vector<double> E(n);
    std::vector<std::vector<cplx>> g(n, std::vector<cplx>(M)), rho(nl * n, std::vector<cplx>(M));
    for (std::size_t k = 0; k < M; ++k) {
        double t = s.period * static_cast<double>(k) / static_cast<double>(M);
        ev.at(s, hbar, t, true);
        calE(s, t, E.data());
        for (std::size_t j = 0; j < n; ++j) g[j][k] = ev.out[j];
        for (std::size_t l = 0; l < nl; ++l)
            for (std::size_t i = 0; i < n; ++i) rho[l * n + i][k] = ev.rho(E.data(), l, i);
    }
    std::vector<std::vector<cplx>> gh(n), rh(nl * n);
    for (std::size_t j = 0; j < n; ++j) gh[j] = harm(g[j]);
    for (std::size_t q = 0; q < nl * n; ++q) rh[q] = harm(rho[q]);
    const double amp = std::sqrt(2.0 * hbar);
    cplx acc = 0.0;
    double weight = 0.0;
    for (int m = -H; m <= H; ++m) {
        const cplx lambda = -kI * (static_cast<double>(m) * s.omega_c);
        for (std::size_t j = 0; j < n; ++j) {
            const cplx gj = hm(gh[j], -m, H);
            if (std::abs(gj) < 1e-15) continue;
            for (std::size_t l = 0; l < nl; ++l)
                for (std::size_t i = 0; i < n; ++i) {
                    const cplx coef = gj * hm(rh[l * n + i], m, H);
                    if (std::abs(coef) < 1e-15) continue;
                    acc += coef * ws.laplace(j, Gq.lags()[l], i, lambda);
                    weight += std::abs(coef);
                }
        }
    }
    return {amp * acc.real(), amp * weight * ws.tail_per_unit(0.0)};
}

}  // namespace

QuadraticCorrections averaged_quadratic(const PerturbedModel& model, const AveragingWorkspace& ws) {
    const SpectralData& s = ws.spec();
    require(!s.zero_root, ErrorCode::Domain, "zero-root spectra are handled by zero_root_coefficients");
    QuadraticCorrections out;
    out.meta.M = ws.options().M;
    if (!present(model.Gq)) return out;
    CenteringReport cr = check_gq_centering(model, s);
    if (!cr.passed) {
        std::ostringstream os;
        os << "G_q fails the centering condition: residual " << cr.residual << " (scale " << cr.scale << ")";
        fail(ErrorCode::CenteringViolated, os.str());
    }
    const PolyLagFunctional& Gq = *model.Gq;
    const unsigned D = Gq.degree();
    double tail_at_one = 0.0;
    Fit fit = fit_probes(D, [&](double hbar) {
        auto [b2, tail] = bhq2_value(ws, Gq, hbar);
        if (hbar == 1.0) tail_at_one = tail;
        return std::vector<double>{bhq1_value(s, Gq, hbar, ws.options().M), b2};
    }, "quadratic corrections");
    out.bHq1 = fit.polys[0];
    out.bHq2 = fit.polys[1];
    ws.fill_meta(out.meta);
    out.meta.fit_residual = fit.residual;
    out.meta.tail_bound = tail_at_one;
    return out;
}

// ---------------------------------------------------------------- general noise

ReducedCoefficients averaged_gennoise(const PerturbedModel& model, const AveragingWorkspace& ws) {
    require(model.kind == PerturbationKind::GeneralNoise, ErrorCode::Domain,
            "averaged_gennoise needs a general-noise model");
    const SpectralData& s = ws.spec();
    require(!s.zero_root, ErrorCode::Domain, "zero-root spectra are handled by zero_root_coefficients");
    validate_noise(model.noise);
    const auto comps = autocorrelation(model.noise);
    const std::size_t n = s.dim(), M = ws.options().M;
    const double w = s.omega_c;
    const bool hasF = present(model.F) && !comps.empty(), hasG = present(model.G);
    unsigned D = g_degree_bound(model.G);
    if (hasF) D = std::max(D, model.F->degree() + 1);

    auto R_int = [&](cplx mu) {  // int_0^inf R(s) e^{-mu s} ds
        cplx acc = 0.0;
        for (const auto& c : comps) acc += c.weight / (c.rate + mu);
        return acc;
    };

    double tail_at_one = 0.0;
    auto eval = [&](double hbar) {
        double b = hasG ? noise_free_G_average(s, *model.G, hbar, M) : 0.0;
        double sig = 0.0;
        if (hasF && hbar > 0.0) {
            const PolyLagFunctional& F = *model.F;
            const std::size_t nl = F.num_lags();
            const int H = static_cast<int>(F.degree()) + 2;
            Harmonics harm(M, H);
            Evaluator ev(F);
            std::vector<double> E(n);
            const double amp = std::sqrt(2.0 * hbar);
            std::vector<cplx> a(M), bs(M);
            std::vector<std::vector<cplx>> phi(n, std::vector<cplx>(M)), rho(nl * n, std::vector<cplx>(M)),
                cl(nl, std::vector<cplx>(M));
            for (std::size_t k = 0; k < M; ++k) {
                double t = s.period * static_cast<double>(k) / static_cast<double>(M);
                ev.at(s, hbar, t, true);
                calE(s, t, E.data());
                a[k] = psi1_dot(s, ev.out.data());
                bs[k] = amp * dot(E.data(), ev.out.data(), n);
                for (std::size_t j = 0; j < n; ++j) phi[j][k] = ev.out[j];
                for (std::size_t l = 0; l < nl; ++l) {
                    cplx c = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        double rv = ev.rho(E.data(), l, i);
                        rho[l * n + i][k] = rv;
                        c += rv * at(s.d, i);
                    }
                    cl[l][k] = c;
                }
            }
            auto ah = harm(a), bh = harm(bs);
            std::vector<std::vector<cplx>> phih(n), rhoh(nl * n), clh(nl);
            for (std::size_t j = 0; j < n; ++j) phih[j] = harm(phi[j]);
            for (std::size_t q = 0; q < nl * n; ++q) rhoh[q] = harm(rho[q]);
            for (std::size_t l = 0; l < nl; ++l) clh[l] = harm(cl[l]);

            for (int m = -H; m <= H; ++m) {
                const double mw = static_cast<double>(m) * w;
                for (const auto& c : comps) sig += 2.0 * std::norm(hm(bh, m, H)) * c.weight * c.rate / (c.rate * c.rate + mw * mw);
            }
            // bracket term
            cplx A = 0.0;
            for (int m = -H; m <= H; ++m) A += std::norm(hm(ah, m, H)) * R_int(-kI * (static_cast<double>(1 - m) * w));
            b += 4.0 * A.real();
            // Frechet term, critical part
            cplx BP = 0.0;
            for (std::size_t l = 0; l < nl; ++l) {
                cplx inner = 0.0;
                for (int m = -H; m <= H; ++m)
                    inner += hm(clh[l], m, H) * hm(ah, -m, H) * R_int(-kI * (static_cast<double>(m + 1) * w));
                BP += std::exp(kI * w * F.lags()[l]) * inner;
            }
            b += amp * 2.0 * BP.real();
            // Frechet term, stable part
            cplx BQ = 0.0;
            double weight = 0.0;
            for (int m = -H; m <= H; ++m)
                for (std::size_t j = 0; j < n; ++j) {
                    const cplx pj = hm(phih[j], -m, H);
                    if (std::abs(pj) < 1e-15) continue;
                    for (std::size_t l = 0; l < nl; ++l)
                        for (std::size_t i = 0; i < n; ++i) {
                            const cplx coef = pj * hm(rhoh[l * n + i], m, H);
                            if (std::abs(coef) < 1e-15) continue;
                            for (const auto& c : comps) {
                                const cplx lambda = c.rate - kI * (static_cast<double>(m) * w);
                                BQ += coef * c.weight * ws.laplace(j, F.lags()[l], i, lambda);
                                weight += std::abs(coef * c.weight) * ws.tail_per_unit(lambda);
                            }
                        }
                }
            b += amp * BQ.real();
            if (hbar == 1.0) tail_at_one = amp * weight;
        }
        return std::vector<double>{b, sig};
    };
    Fit fit = fit_probes(D, eval, "general-noise averages");
    ReducedCoefficients rc;
    rc.add(Provenance::bH, fit.polys[0]);
    rc.diffusion_sq = fit.polys[1];
    if (hasF) ws.fill_meta(rc.meta);
    rc.meta.M = M;
    rc.meta.fit_residual = fit.residual;
    rc.meta.tail_bound = tail_at_one;
    return rc;
}

LinearConstants averaged_linear_gennoise(const PerturbedModel& model, const AveragingWorkspace& ws) {
    require(model.kind == PerturbationKind::GeneralNoise, ErrorCode::Domain,
            "averaged_linear_gennoise needs a general-noise model");
    const SpectralData& s = ws.spec();
    require(!s.zero_root, ErrorCode::Domain, "linear constants need a critical pair");
    validate_noise(model.noise);
    CVec v1;
    LinearConstants lc = upsilon_constants(model, s, v1);
    const auto comps = autocorrelation(model.noise);
    const double w = s.omega_c;
    for (const auto& c : comps) {
        lc.R0 += c.weight / c.rate;
        lc.R2c += c.weight * c.rate / (c.rate * c.rate + 4.0 * w * w);
    }
    if (present(model.F) && !comps.empty()) {
        MatrixLagMeasure L1 = model.F->to_measure(model.max_delay());
        const std::size_t n = s.dim();
        double weight = 0.0;
        for (const auto& t : L1.terms()) {
            CRow p1 = s.psi_hat.row(0) * t.matrix.cast<cplx>();
            CRow p2 = s.psi_hat.row(1) * t.matrix.cast<cplx>();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const cplx c1 = at(p1, i) * at(v1, j), c2 = at(p2, i) * std::conj(at(v1, j));
                    if (std::abs(c1) == 0.0 && std::abs(c2) == 0.0) continue;
                    for (const auto& c : comps) {
                        const cplx l1 = c.rate + kI * w, l2 = c.rate - kI * w;
                        lc.R1hat += c.weight * c1 * ws.laplace(j, t.lag, i, l1);
                        lc.R2hat += c.weight * c2 * ws.laplace(j, t.lag, i, l2);
                        weight += std::abs(c.weight) * (std::abs(c1) + std::abs(c2)) * ws.tail_per_unit(l1);
                    }
                }
        }
        lc.tail_bound = weight;
        const double mag = std::abs(lc.R1hat) + std::abs(lc.R2hat);
        require(std::abs(lc.R2hat - std::conj(lc.R1hat)) <= 1e-8 * std::max(mag, 1e-300), ErrorCode::Numeric,
                "R2hat is not the conjugate of R1hat");
    }
    const CMat& U = lc.upsilon;
    const double tr2 = ((U(0, 0) + U(1, 1)) * (U(0, 0) + U(1, 1))).real();
    const double cross = (U(0, 1) * U(1, 0)).real();
    lc.C_b = tr2 * lc.R0 + 4.0 * cross * lc.R2c + (lc.R1hat + lc.R2hat).real();
    lc.C_sigma = 2.0 * (tr2 * lc.R0 + 2.0 * cross * lc.R2c);
    lc.lambda_avg = lc.C_b - 0.5 * lc.C_sigma;
    lc.stable = lc.lambda_avg < 0.0;
    return lc;
}

// ---------------------------------------------------------------- zero root

ReducedCoefficients zero_root_coefficients(const PerturbedModel& model, const AveragingWorkspace& ws) {
    const SpectralData& s = ws.spec();
    require(s.zero_root, ErrorCode::NoZeroRoot, "spectral data is not in zero-root mode");
    const std::size_t n = s.dim();
    const bool white = model.kind == PerturbationKind::White;
    std::vector<ExpSumCorrelation::Component> comps;
    double R0 = 0.0;
    if (!white) {
        validate_noise(model.noise);
        comps = autocorrelation(model.noise);
        for (const auto& c : comps) R0 += c.weight / c.rate;
    }
    const bool hasF = present(model.F), hasG = present(model.G), hasGq = present(model.Gq) && white;
    if (hasGq) {
        CenteringReport cr = check_gq_centering(model, s);
        if (!cr.passed) {
            std::ostringstream os;
            os << "Psi G_q(Phi h) does not vanish: residual " << cr.residual;
            fail(ErrorCode::CenteringViolated, os.str());
        }
    }
    unsigned D = 0;
    if (hasG) D = std::max(D, model.G->degree());
    if (hasF) D = std::max(D, 2 * model.F->degree());
    if (hasGq) D = std::max(D, 2 * model.Gq->degree() - 1);

    double tail_at_one = 0.0;
    auto eval = [&](double h) {
        double b = 0.0, sig = 0.0, q2 = 0.0;
        if (hasG) {
            Evaluator ev(*model.G);
            ev.at(s, h, 0.0, false);
            b += psi1_dot(s, ev.out.data()).real();
        }
        if (hasF) {
            Evaluator ev(*model.F);
            ev.at(s, h, 0.0, !white);
            const double pf = psi1_dot(s, ev.out.data()).real();
            if (white) {
                sig = pf * pf;
            } else {
                sig = 2.0 * R0 * pf * pf;
                const PolyLagFunctional& F = *model.F;
                std::vector<double> dir(F.num_vars(), 0.0), dF(n);
                for (std::size_t l = 0; l < F.num_lags(); ++l)
                    if (F.lags()[l] == 0.0)
                        for (std::size_t c = 0; c < n; ++c) dir[l * n + c] = ev.out[c];
                F.directional(ev.u.data(), dir.data(), dF.data());
                b += R0 * psi1_dot(s, dF.data()).real();
            }
        }
        if (hasGq) {
            const PolyLagFunctional& Gq = *model.Gq;
            Evaluator ev(Gq);
            ev.at(s, h, 0.0, true);
            std::vector<double> psi(n);
            for (std::size_t c = 0; c < n; ++c) psi[c] = s.psi_hat(0, static_cast<Eigen::Index>(c)).real();
            double weight = 0.0;
            for (std::size_t l = 0; l < Gq.num_lags(); ++l)
                for (std::size_t i = 0; i < n; ++i) {
                    const double r = ev.rho(psi.data(), l, i);
                    if (r == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (ev.out[j] == 0.0) continue;
                        q2 += r * ev.out[j] * ws.laplace(j, Gq.lags()[l], i, 0.0).real();
                        weight += std::abs(r * ev.out[j]);
                    }
                }
            if (h == 1.0) tail_at_one = weight * ws.tail_per_unit(0.0);
        }
        return std::vector<double>{b, sig, q2};
    };
    Fit fit = fit_probes(D, eval, "zero-root coefficients");
    ReducedCoefficients rc;
    rc.zero_root = true;
    rc.add(Provenance::bH, fit.polys[0]);
    rc.diffusion_sq = fit.polys[1];
    if (hasGq) {
        rc.add(Provenance::bHq2, fit.polys[2]);
        ws.fill_meta(rc.meta);
    }
    rc.meta.M = ws.options().M;
    rc.meta.fit_residual = fit.residual;
    rc.meta.tail_bound = tail_at_one;
    return rc;
}

ReducedCoefficients reduce(const PerturbedModel& model, const AveragingWorkspace& ws) {
    if (ws.spec().zero_root) return zero_root_coefficients(model, ws);
    ReducedCoefficients rc =
        model.kind == PerturbationKind::White ? averaged_white(model, ws) : averaged_gennoise(model, ws);
    if (present(model.Gq)) {
        QuadraticCorrections q = averaged_quadratic(model, ws);
        rc.add(Provenance::bHq1, q.bHq1);
        rc.add(Provenance::bHq2, q.bHq2);
        const double fr = std::max(rc.meta.fit_residual, q.meta.fit_residual);
        const double tail = rc.meta.tail_bound + q.meta.tail_bound;
        rc.meta = q.meta;
        rc.meta.fit_residual = fr;
        rc.meta.tail_bound = tail;
    }
    return rc;
}

}  // namespace sdde
