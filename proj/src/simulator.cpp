#include "sdde/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "sdde/errors.hpp"

namespace sdde {

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(base) ^ mix(index + 0x632be59bd9b4e019ULL));
}

std::size_t steps_per_delay(double r, double dt) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::Config, "dt must be positive");
    double p = r / dt;
    double k = std::round(p);
    if (k < 1.0 || std::abs(p - k) > 1e-9 * std::max(1.0, p))
        fail(ErrorCode::Config, "dt must divide the delay r exactly (N = r/dt integer)");
    return static_cast<std::size_t>(k);
}

PathEngine::PathEngine(const PerturbedModel& model, double dt, bool perturbed)
    : model_(model), n_(model.dim()), dt_(dt), sqdt_(std::sqrt(dt)) {
    N_ = sdde::steps_per_delay(model.max_delay(), dt);
    eps_ = model.epsilon;
    perturbed_ = perturbed && eps_ != 0.0;
    white_ = model.kind == PerturbationKind::White;
    for (const auto& t : model.L0.terms()) {
        std::vector<double> a(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t c = 0; c < n_; ++c) a[i * n_ + c] = t.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        L0_.emplace_back(slot_for(t.lag), std::move(a));
    }
    auto make_plan = [&](const std::optional<PolyLagFunctional>& f, Plan& p, bool& has) {
        if (!perturbed_ || !f || f->is_zero()) return;
        has = true;
        p.f = &*f;
        for (double l : f->lags()) p.lag_slot.push_back(slot_for(l));
        p.u.assign(f->num_vars(), 0.0);
        p.out.assign(n_, 0.0);
        p.constant = f->degree() == 0;
        if (p.constant) f->eval(p.u.data(), p.out.data());
        p.contiguous = true;
        for (std::size_t l = 0; l < p.lag_slot.size(); ++l)
            if (p.lag_slot[l] != p.lag_slot[0] + l) p.contiguous = false;
    };
    make_plan(model_.F, F_, hasF_);
    // eps^2 G + eps G_q folded into one polynomial
    if (model.G && !model.G->is_zero()) drift_f_ = model.G->scaled(eps_ * eps_);
    if (model.Gq && !model.Gq->is_zero())
        drift_f_ = drift_f_ ? drift_f_->plus(model.Gq->scaled(eps_)) : model.Gq->scaled(eps_);
    make_plan(drift_f_, G_, hasG_);
    lagvals_.assign(reads_.size() * n_, 0.0);
    ring_.assign((N_ + 1) * n_, 0.0);
    drift_.assign(n_, 0.0);
}

std::size_t PathEngine::slot_for(double lag) {
    double p = -lag / dt_;
    require(lag <= 0.0 && p <= static_cast<double>(N_) * (1.0 + 1e-12), ErrorCode::Domain, "lag outside the delay span");
    double q0 = std::floor(p + 1e-9);
    double frac = p - q0;
    if (frac < 1e-9) frac = 0.0;
    Read rd{static_cast<std::size_t>(std::min(q0, static_cast<double>(N_))), frac};
    for (std::size_t s = 0; s < reads_.size(); ++s)
        if (reads_[s].q0 == rd.q0 && reads_[s].frac == rd.frac) return s;
    reads_.push_back(rd);
    return reads_.size() - 1;
}

void PathEngine::read(const Read& rd, double* out) const {
    const std::size_t R = N_ + 1;
    std::size_t a = head_ >= rd.q0 ? head_ - rd.q0 : head_ + R - rd.q0;
    const double* xa = ring_.data() + a * n_;
    if (rd.frac == 0.0) {
        for (std::size_t c = 0; c < n_; ++c) out[c] = xa[c];
        return;
    }
    std::size_t b = a == 0 ? R - 1 : a - 1;
    const double* xb = ring_.data() + b * n_;
    for (std::size_t c = 0; c < n_; ++c) out[c] = (1.0 - rd.frac) * xa[c] + rd.frac * xb[c];
}

void PathEngine::reset(const HistorySegment& init, std::uint64_t seed) {
    require(init.dim() == n_, ErrorCode::Config, "initial history has wrong dimension");
    require(std::abs(init.span() - model_.max_delay()) <= 1e-9 * model_.max_delay(), ErrorCode::Config,
            "initial history must span [-r, 0]");
    for (std::size_t i = 0; i <= N_; ++i) {
        double* x = ring_.data() + i * n_;
        if (init.intervals() == N_)
            std::copy(init.node(i), init.node(i) + n_, x);
        else
            init.value_at(-model_.max_delay() + static_cast<double>(i) * dt_, x);
    }
    if (init.has_jump()) std::copy(init.jump().begin(), init.jump().end(), ring_.data() + N_ * n_);
    head_ = N_;
    j_ = 0;
    finite_ = true;
    rng_.seed(seed);
    tele_.clear();
    sigma_now_ = 0.0;
    if (perturbed_ && !white_) {
        boost::random::exponential_distribution<double> ex(1.0);
        for (const auto& c : autocorrelation(model_.noise)) {
            Telegraph t;
            t.amplitude = std::sqrt(c.weight);
            t.rate = 0.5 * c.rate;
            t.sign = (rng_() >> 63) ? 1.0 : -1.0;
            t.next = ex(rng_) / t.rate;
            tele_.push_back(t);
        }
    }
}

void PathEngine::advance_noise() {
    const double t = time();
    boost::random::exponential_distribution<double> ex(1.0);
    double s = 0.0;
    for (auto& tg : tele_) {
        while (tg.next <= t) {
            tg.sign = -tg.sign;
            tg.next += ex(rng_) / tg.rate;
        }
        s += tg.amplitude * tg.sign;
    }
    sigma_now_ = s;
}

void PathEngine::eval_plan(Plan& p) {
    if (p.constant) return;
    if (p.contiguous) {
        p.f->eval(lagvals_.data() + (p.lag_slot.empty() ? 0 : p.lag_slot[0] * n_), p.out.data());
        return;
    }
    for (std::size_t l = 0; l < p.lag_slot.size(); ++l)
        std::copy_n(lagvals_.data() + p.lag_slot[l] * n_, n_, p.u.data() + l * n_);
    p.f->eval(p.u.data(), p.out.data());
}

void PathEngine::step() {
    if (perturbed_ && !white_) advance_noise();
    for (std::size_t s = 0; s < reads_.size(); ++s) read(reads_[s], lagvals_.data() + s * n_);
    for (std::size_t i = 0; i < n_; ++i) drift_[i] = 0.0;
    for (const auto& [slot, A] : L0_) {
        const double* v = lagvals_.data() + slot * n_;
        const double* a = A.data();
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < n_; ++c) acc += a[i * n_ + c] * v[c];
            drift_[i] += acc;
        }
    }
    const double* cur = current();
    std::size_t next = head_ + 1 == N_ + 1 ? 0 : head_ + 1;
    double* nx = ring_.data() + next * n_;
    if (!perturbed_) {
        for (std::size_t i = 0; i < n_; ++i) nx[i] = cur[i] + dt_ * drift_[i];
    } else {
        if (hasG_) {
            eval_plan(G_);
            for (std::size_t i = 0; i < n_; ++i) drift_[i] += G_.out[i];
        }
        if (hasF_) eval_plan(F_);
        if (white_) {
            double dw = 0.0;
            if (hasF_) {
                boost::random::normal_distribution<double> nd;
                dw = eps_ * sqdt_ * nd(rng_);
            }
            for (std::size_t i = 0; i < n_; ++i) nx[i] = cur[i] + dt_ * drift_[i] + (hasF_ ? dw * F_.out[i] : 0.0);
        } else {
            if (hasF_)
                for (std::size_t i = 0; i < n_; ++i) drift_[i] += eps_ * sigma_now_ * F_.out[i];
            for (std::size_t i = 0; i < n_; ++i) nx[i] = cur[i] + dt_ * drift_[i];
        }
    }
    for (std::size_t i = 0; i < n_; ++i)
        if (!std::isfinite(nx[i]) || std::abs(nx[i]) > 1e150) finite_ = false;
    head_ = next;
    ++j_;
}

HistorySegment PathEngine::segment() const {
    HistorySegment seg(n_, model_.max_delay(), N_);
    const std::size_t R = N_ + 1;
    for (std::size_t i = 0; i <= N_; ++i) {
        std::size_t k = (head_ + 1 + i) % R;  // oldest first
        std::copy_n(ring_.data() + k * n_, n_, seg.node(i));
    }
    return seg;
}

namespace {

Trajectory run_recorded(PathEngine& eng, const HistorySegment& init, double T, double dt, std::size_t stride,
                        std::uint64_t seed, const char* kind) {
    require(T >= 0.0, ErrorCode::Config, "T must be nonnegative");
    require(stride >= 1, ErrorCode::Config, "record stride must be >= 1");
    eng.reset(init, seed);
    const auto steps = static_cast<std::uint64_t>(std::llround(T / dt));
    Trajectory tr;
    tr.t0 = 0.0;
    tr.dt = dt * static_cast<double>(stride);
    tr.n = init.dim();
    tr.seed = seed;
    tr.noise_kind = kind;
    tr.values.reserve((steps / stride + 1) * tr.n);
    tr.values.insert(tr.values.end(), eng.current(), eng.current() + tr.n);
    for (std::uint64_t j = 1; j <= steps; ++j) {
        eng.step();
        if (!eng.finite()) {
            tr.status = TrajectoryStatus::NonFinite;
            break;
        }
        if (j % stride == 0) tr.values.insert(tr.values.end(), eng.current(), eng.current() + tr.n);
    }
    tr.final_segment = eng.segment();
    return tr;
}

}  // namespace

Trajectory integrate_unperturbed(const MatrixLagMeasure& measure, const HistorySegment& init, double T, double dt,
                                 std::size_t record_stride) {
    PerturbedModel m;
    m.L0 = measure;
    PathEngine eng(m, dt, false);
    return run_recorded(eng, init, T, dt, record_stride, 0, "none");
}

Trajectory integrate_sdde(const PerturbedModel& model, const HistorySegment& init, double dt, double T,
                          std::uint64_t seed, std::size_t record_stride) {
    model.validate();
    PathEngine eng(model, dt, true);
    return run_recorded(eng, init, T, dt, record_stride, seed, noise_kind_name(model.noise));
}

double h_of_segment(const SpectralData& spec, const MatrixLagMeasure& measure, const HistorySegment& seg) {
    Projector p(spec, measure, seg.intervals());
    cplx z = p.coordinate(seg);
    return spec.zero_root ? z.real() : 2.0 * std::norm(z);
}

std::vector<double> lyapunov_estimator(const Trajectory& traj, std::size_t m, double r, std::size_t component,
                                       const std::vector<double>& times) {
    require(component < traj.n, ErrorCode::Domain, "component out of range");
    require(m >= 1, ErrorCode::Domain, "window multiple must be >= 1");
    const double win = static_cast<double>(m) * r;
    const double tend = traj.time(traj.size() - 1);
    std::vector<double> out;
    for (double t : times) {
        if (t < win || t > tend + 1e-9 * traj.dt || t <= 0.0)
            fail(ErrorCode::Domain, "estimator window exceeds the trajectory");
        auto lo = static_cast<std::size_t>(std::ceil((t - win - traj.t0) / traj.dt - 1e-9));
        auto hi = static_cast<std::size_t>(std::floor((t - traj.t0) / traj.dt + 1e-9));
        double sup = 0.0;
        for (std::size_t i = lo; i <= hi && i < traj.size(); ++i) sup = std::max(sup, std::abs(traj.at(i)[component]));
        out.push_back(std::log(sup) / t);
    }
    return out;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(count, 1));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err) err = std::current_exception();
                    next.store(count);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

EnsembleResult run_dde_ensemble(const PerturbedModel& model, const SpectralData& spec,
                                const std::function<HistorySegment(std::size_t)>& init, const EnsembleOptions& opts) {
    model.validate();
    const std::size_t N = steps_per_delay(model.max_delay(), opts.dt);
    Projector proj(spec, model.L0, N);
    EnsembleResult res;
    res.h_final.assign(opts.samples, 0.0);
    res.passage_time.assign(opts.samples, std::numeric_limits<double>::infinity());
    if (opts.energy_omega > 0) res.energy_final.assign(opts.samples, 0.0);
    std::vector<char> bad(opts.samples, 0);
    const auto steps = static_cast<std::uint64_t>(std::llround(opts.T / opts.dt));
    const std::size_t pc = opts.passage_component;
    require(pc < model.dim(), ErrorCode::Config, "passage component out of range");

    parallel_for(opts.samples, opts.threads, [&](std::size_t i) {
        HistorySegment h0 = init(i);
        PathEngine eng(model, opts.dt, true);
        eng.reset(h0, stream_seed(opts.seed, i));
        const bool track = opts.passage_level > 0.0;
        double tau = std::numeric_limits<double>::infinity();
        if (track && std::abs(eng.current()[pc]) >= opts.passage_level) tau = 0.0;
        for (std::uint64_t j = 1; j <= steps; ++j) {
            eng.step();
            if (track && tau == std::numeric_limits<double>::infinity() &&
                std::abs(eng.current()[pc]) >= opts.passage_level)
                tau = eng.time();
            if ((j & 1023u) == 0 && !eng.finite()) break;
        }
        if (!eng.finite()) {
            bad[i] = 1;
            res.h_final[i] = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        HistorySegment seg = eng.segment();
        cplx z = proj.coordinate(seg);
        res.h_final[i] = spec.zero_root ? z.real() : 2.0 * std::norm(z);
        res.passage_time[i] = tau;
        if (opts.energy_omega > 0) {
            const double* x = eng.current();
            res.energy_final[i] = 0.5 * (x[0] * x[0] + (x[1] / opts.energy_omega) * (x[1] / opts.energy_omega));
        }
    });
    for (std::size_t i = 0; i < opts.samples; ++i)
        if (bad[i]) res.flagged.push_back(i);
    return res;
}

std::vector<std::vector<double>> run_lyapunov_ensemble(const PerturbedModel& model, const HistorySegment& init,
                                                       const LyapunovOptions& opts) {
    model.validate();
    const double r = model.max_delay();
    const std::size_t N = steps_per_delay(r, opts.dt);
    require(opts.component < model.dim(), ErrorCode::Config, "component out of range");
    std::vector<std::uint64_t> sample_blocks;
    for (double t : opts.times) {
        double b = t / r;
        require(std::abs(b - std::round(b)) < 1e-9 * std::max(1.0, b), ErrorCode::Config,
                "Lyapunov sample times must be multiples of r");
        require(std::round(b) >= static_cast<double>(opts.window), ErrorCode::Domain,
                "estimator window exceeds the trajectory");
        sample_blocks.push_back(static_cast<std::uint64_t>(std::llround(b)));
    }
    require(std::is_sorted(sample_blocks.begin(), sample_blocks.end()), ErrorCode::Config, "sample times must increase");
    const auto steps = static_cast<std::uint64_t>(std::llround(opts.T / opts.dt));
    std::vector<std::vector<double>> out(opts.realizations);

    parallel_for(opts.realizations, opts.threads, [&](std::size_t k) {
        PathEngine eng(model, opts.dt, true);
        eng.reset(init, stream_seed(opts.seed, k));
        std::deque<double> blocks;
        double bmax = std::abs(eng.current()[opts.component]);
        std::size_t next_sample = 0;
        std::vector<double> series;
        for (std::uint64_t j = 1; j <= steps && next_sample < sample_blocks.size(); ++j) {
            eng.step();
            bmax = std::max(bmax, std::abs(eng.current()[opts.component]));
            if (j % N == 0) {
                blocks.push_back(bmax);
                bmax = std::abs(eng.current()[opts.component]);  // blocks are closed intervals
                if (blocks.size() > opts.window) blocks.pop_front();
                const std::uint64_t b = j / N;
                while (next_sample < sample_blocks.size() && sample_blocks[next_sample] == b) {
                    double sup = *std::max_element(blocks.begin(), blocks.end());
                    series.push_back(std::log(sup) / (static_cast<double>(b) * r));
                    ++next_sample;
                }
                if ((b & 15u) == 0 && !eng.finite()) break;
            }
        }
        series.resize(sample_blocks.size(), std::numeric_limits<double>::quiet_NaN());
        out[k] = std::move(series);
    });
    return out;
}

}  // namespace sdde
