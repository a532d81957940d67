#include "sdde/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

namespace {

double ipow(double x, unsigned p) {
    double r = 1.0;
    while (p) {
        if (p & 1u) r *= x;
        x *= x;
        p >>= 1u;
    }
    return r;
}

void check_lag(double lag, double r) {
    if (!(lag <= 0.0 && lag >= -r * (1.0 + 1e-12))) {
        std::ostringstream os;
        os << "lag " << lag << " outside [-" << r << ", 0]";
        fail(ErrorCode::Config, os.str());
    }
}

}  // namespace

MatrixLagMeasure::MatrixLagMeasure(std::vector<LagTerm> terms, std::optional<double> horizon)
    : terms_(std::move(terms)) {
    require(!terms_.empty(), ErrorCode::Config, "lag measure needs at least one term");
    n_ = static_cast<std::size_t>(terms_.front().matrix.rows());
    require(n_ > 0, ErrorCode::Config, "lag measure matrices must be non-empty");
    double maxlag = 0.0;
    std::set<double> seen;
    for (const auto& t : terms_) {
        require(t.matrix.rows() == static_cast<Eigen::Index>(n_) && t.matrix.cols() == static_cast<Eigen::Index>(n_),
                ErrorCode::Config, "lag measure matrices must all be n x n");
        require(t.lag <= 0.0 && std::isfinite(t.lag), ErrorCode::Config, "lags must be finite and nonpositive");
        require(seen.insert(t.lag).second, ErrorCode::Config, "lags of a measure must be distinct");
        maxlag = std::max(maxlag, -t.lag);
    }
    r_ = horizon.value_or(maxlag);
    require(r_ > 0.0, ErrorCode::Config, "max delay must be positive; declare a horizon for lag-free systems");
    require(r_ >= maxlag * (1.0 - 1e-12), ErrorCode::Config, "declared horizon shorter than the largest lag");
}

double MatrixLagMeasure::norm_bound() const {
    double s = 0.0;
    for (const auto& t : terms_) {
        Eigen::JacobiSVD<Mat> svd(t.matrix);
        s += svd.singularValues()(0);
    }
    return s;
}

Vec eval_linear(const MatrixLagMeasure& measure, const HistorySegment& seg) {
    require(seg.dim() == measure.dim(), ErrorCode::Domain, "segment dimension does not match the measure");
    const std::size_t n = measure.dim();
    Vec out = Vec::Zero(static_cast<Eigen::Index>(n));
    Vec v(static_cast<Eigen::Index>(n));
    for (const auto& t : measure.terms()) {
        seg.state_at(t.lag, v.data());
        out += t.matrix * v;
    }
    return out;
}

PolyLagFunctional::PolyLagFunctional(std::size_t n, std::vector<double> lags,
                                     const std::vector<Monomial>& monomials)
    : n_(n), lags_(std::move(lags)) {
    require(n_ > 0, ErrorCode::Config, "functional dimension must be positive");
    require(!lags_.empty(), ErrorCode::Config, "functional needs at least one lag");
    for (double l : lags_) require(l <= 0.0 && std::isfinite(l), ErrorCode::Config, "functional lags must be nonpositive");
    const std::size_t nv = num_vars();
    std::set<std::vector<unsigned>> seen;
    for (const auto& m : monomials) {
        require(m.exponents.size() == nv, ErrorCode::Config, "monomial exponent list must have n*m entries");
        require(static_cast<std::size_t>(m.coeff.size()) == n_, ErrorCode::Config,
                "monomial coefficient must be an n-vector");
        require(seen.insert(m.exponents).second, ErrorCode::Config, "duplicate monomial multi-index");
        Term t;
        for (std::size_t v = 0; v < nv; ++v) {
            if (m.exponents[v] > 0) {
                t.factors.push_back({static_cast<std::uint32_t>(v), m.exponents[v]});
                t.degree += m.exponents[v];
            }
        }
        t.coeff.assign(m.coeff.data(), m.coeff.data() + n_);
        terms_.push_back(std::move(t));
    }
}

PolyLagFunctional PolyLagFunctional::constant(const Vec& value) {
    const auto n = static_cast<std::size_t>(value.size());
    Monomial m{std::vector<unsigned>(n, 0u), value};
    return PolyLagFunctional(n, {0.0}, {m});
}

PolyLagFunctional PolyLagFunctional::linear(const MatrixLagMeasure& measure) {
    const std::size_t n = measure.dim();
    std::vector<double> lags;
    for (const auto& t : measure.terms()) lags.push_back(t.lag);
    const std::size_t nv = n * lags.size();
    std::vector<Monomial> monos;
    for (std::size_t l = 0; l < lags.size(); ++l) {
        const Mat& A = measure.terms()[l].matrix;
        for (std::size_t j = 0; j < n; ++j) {
            Vec col = A.col(static_cast<Eigen::Index>(j));
            if (col.isZero(0.0)) continue;
            Monomial m{std::vector<unsigned>(nv, 0u), col};
            m.exponents[l * n + j] = 1;
            monos.push_back(std::move(m));
        }
    }
    return PolyLagFunctional(n, lags, monos);
}

unsigned PolyLagFunctional::degree() const {
    unsigned d = 0;
    for (const auto& t : terms_) d = std::max(d, t.degree);
    return d;
}

bool PolyLagFunctional::is_linear_homogeneous() const {
    return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) { return t.degree == 1; });
}

MatrixLagMeasure PolyLagFunctional::to_measure(double horizon) const {
    require(is_linear_homogeneous(), ErrorCode::Domain, "functional is not linear");
    std::vector<LagTerm> out;
    for (std::size_t l = 0; l < lags_.size(); ++l) out.push_back({lags_[l], Mat::Zero(n_, n_)});
    for (const auto& t : terms_) {
        const auto v = t.factors.front().var;
        const std::size_t l = v / n_, j = v % n_;
        for (std::size_t i = 0; i < n_; ++i) out[l].matrix(i, j) += t.coeff[i];
    }
    // merge duplicate lags
    std::map<double, Mat> merged;
    for (auto& lt : out) {
        auto it = merged.find(lt.lag);
        if (it == merged.end())
            merged.emplace(lt.lag, lt.matrix);
        else
            it->second += lt.matrix;
    }
    std::vector<LagTerm> terms;
    for (auto& [lag, m] : merged) terms.push_back({lag, m});
    return MatrixLagMeasure(terms, horizon);
}

PolyLagFunctional PolyLagFunctional::scaled(double a) const {
    PolyLagFunctional out = *this;
    for (auto& t : out.terms_)
        for (double& c : t.coeff) c *= a;
    return out;
}

PolyLagFunctional PolyLagFunctional::plus(const PolyLagFunctional& other) const {
    require(other.n_ == n_, ErrorCode::Config, "cannot add functionals of different dimension");
    std::vector<double> lags = lags_;
    std::vector<std::size_t> remap;
    for (double l : other.lags_) {
        auto it = std::find(lags.begin(), lags.end(), l);
        if (it == lags.end()) {
            lags.push_back(l);
            remap.push_back(lags.size() - 1);
        } else {
            remap.push_back(static_cast<std::size_t>(it - lags.begin()));
        }
    }
    const std::size_t nv = n_ * lags.size();
    std::map<std::vector<unsigned>, Vec> table;
    auto add = [&](const Term& t, bool from_other) {
        std::vector<unsigned> e(nv, 0u);
        for (const auto& f : t.factors) {
            std::size_t v = f.var;
            if (from_other) v = remap[v / n_] * n_ + v % n_;
            e[v] += f.power;
        }
        Vec c = Eigen::Map<const Vec>(t.coeff.data(), static_cast<Eigen::Index>(n_));
        auto it = table.find(e);
        if (it == table.end())
            table.emplace(e, c);
        else
            it->second += c;
    };
    for (const auto& t : terms_) add(t, false);
    for (const auto& t : other.terms_) add(t, true);
    std::vector<Monomial> monos;
    for (auto& [e, c] : table) monos.push_back({e, c});
    return PolyLagFunctional(n_, lags, monos);
}

void PolyLagFunctional::eval(const double* u, double* out) const {
    std::fill(out, out + n_, 0.0);
    for (const auto& t : terms_) {
        double p = 1.0;
        for (const auto& f : t.factors) p *= ipow(u[f.var], f.power);
        for (std::size_t i = 0; i < n_; ++i) out[i] += t.coeff[i] * p;
    }
}

void PolyLagFunctional::jacobian(const double* u, double* jac) const {
    const std::size_t nv = num_vars();
    std::fill(jac, jac + n_ * nv, 0.0);
    for (const auto& t : terms_) {
        for (std::size_t a = 0; a < t.factors.size(); ++a) {
            const auto& fa = t.factors[a];
            double p = static_cast<double>(fa.power) * ipow(u[fa.var], fa.power - 1);
            for (std::size_t b = 0; b < t.factors.size(); ++b)
                if (b != a) p *= ipow(u[t.factors[b].var], t.factors[b].power);
            for (std::size_t i = 0; i < n_; ++i) jac[i * nv + fa.var] += t.coeff[i] * p;
        }
    }
}

void PolyLagFunctional::directional(const double* u, const double* du, double* out) const {
    std::fill(out, out + n_, 0.0);
    for (const auto& t : terms_) {
        for (std::size_t a = 0; a < t.factors.size(); ++a) {
            const auto& fa = t.factors[a];
            if (du[fa.var] == 0.0) continue;
            double p = static_cast<double>(fa.power) * ipow(u[fa.var], fa.power - 1) * du[fa.var];
            for (std::size_t b = 0; b < t.factors.size(); ++b)
                if (b != a) p *= ipow(u[t.factors[b].var], t.factors[b].power);
            for (std::size_t i = 0; i < n_; ++i) out[i] += t.coeff[i] * p;
        }
    }
}

void PolyLagFunctional::stack(const HistorySegment& seg, double* u) const {
    require(seg.dim() == n_, ErrorCode::Domain, "segment dimension does not match the functional");
    for (std::size_t l = 0; l < lags_.size(); ++l) seg.state_at(lags_[l], u + l * n_);
}

Vec eval_functional(const PolyLagFunctional& f, const HistorySegment& seg) {
    std::vector<double> u(f.num_vars());
    f.stack(seg, u.data());
    Vec out(static_cast<Eigen::Index>(f.dim()));
    f.eval(u.data(), out.data());
    return out;
}

Vec frechet_diff(const PolyLagFunctional& f, const HistorySegment& at, const HistorySegment& dir) {
    require(std::abs(at.span() - dir.span()) <= 1e-12 * at.span(), ErrorCode::Domain,
            "segments must share the same span");
    std::vector<double> u(f.num_vars()), du(f.num_vars());
    f.stack(at, u.data());
    f.stack(dir, du.data());
    Vec out(static_cast<Eigen::Index>(f.dim()));
    f.directional(u.data(), du.data(), out.data());
    return out;
}

std::vector<ExpSumCorrelation::Component> autocorrelation(const NoiseModel& noise) {
    if (const auto* m = std::get_if<TwoStateMarkov>(&noise)) return {{m->sigma0 * m->sigma0, m->g}};
    if (const auto* e = std::get_if<ExpSumCorrelation>(&noise)) return e->components;
    return {};
}

void validate_noise(const NoiseModel& noise) {
    if (const auto* m = std::get_if<TwoStateMarkov>(&noise)) {
        require(m->g > 0.0 && std::isfinite(m->g), ErrorCode::Config, "two-state chain needs g > 0");
        require(std::isfinite(m->sigma0), ErrorCode::Config, "two-state amplitude must be finite");
    }
    if (const auto* e = std::get_if<ExpSumCorrelation>(&noise)) {
        require(!e->components.empty(), ErrorCode::Config, "exponential-sum correlation needs a component");
        for (const auto& c : e->components) {
            require(c.rate > 0.0 && std::isfinite(c.rate), ErrorCode::Config, "correlation decay rates must be > 0");
            require(c.weight >= 0.0 && std::isfinite(c.weight), ErrorCode::Config,
                    "correlation weights must be nonnegative");
        }
    }
}

const char* noise_kind_name(const NoiseModel& noise) {
    if (std::holds_alternative<TwoStateMarkov>(noise)) return "two_state";
    if (std::holds_alternative<ExpSumCorrelation>(noise)) return "exp_sum";
    return "wiener";
}

void PerturbedModel::validate() const {
    const std::size_t n = L0.dim();
    const double r = L0.max_delay();
    require(n > 0, ErrorCode::Config, "model has no linear part");
    require(epsilon >= 0.0 && std::isfinite(epsilon), ErrorCode::Config, "epsilon must be nonnegative");
    for (const auto* f : {&F, &G, &Gq}) {
        if (!*f) continue;
        require((*f)->dim() == n, ErrorCode::Config, "functional output dimension differs from n");
        for (double l : (*f)->lags()) check_lag(l, r);
    }
    if (kind == PerturbationKind::GeneralNoise) {
        require(F.has_value(), ErrorCode::Config, "general-noise model needs F");
        require(!std::holds_alternative<Wiener>(noise), ErrorCode::Config,
                "general-noise model needs a two-state or exponential-sum noise");
    }
    validate_noise(noise);
}

}  // namespace sdde
