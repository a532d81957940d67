#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdde/model.hpp"
#include "sdde/segment.hpp"
#include "sdde/spectrum.hpp"

namespace sdde {

enum class TrajectoryStatus { Ok, NonFinite };

struct Trajectory {
    double t0 = 0.0;
    double dt = 0.0;             // spacing of the stored samples
    std::size_t n = 0;
    std::vector<double> values;  // samples x n
    std::uint64_t seed = 0;
    std::string noise_kind = "none";
    TrajectoryStatus status = TrajectoryStatus::Ok;
    HistorySegment final_segment;

    std::size_t size() const { return n ? values.size() / n : 0; }
    const double* at(std::size_t i) const { return values.data() + i * n; }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
};

// 64-bit avalanche mix of (base seed, trajectory index).
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index);

// N = r/dt; throws a Config error unless it is an integer.
std::size_t steps_per_delay(double r, double dt);

// Euler-Maruyama integrator holding the last N+1 states in a ring buffer.
class PathEngine {
public:
    PathEngine(const PerturbedModel& model, double dt, bool perturbed);
    PathEngine(const PathEngine&) = delete;  // plans hold pointers into members
    PathEngine& operator=(const PathEngine&) = delete;

    void reset(const HistorySegment& init, std::uint64_t seed);
    void step();

    double time() const { return static_cast<double>(j_) * dt_; }
    std::uint64_t step_index() const { return j_; }
    const double* current() const { return ring_.data() + head_ * n_; }
    bool finite() const { return finite_; }
    double noise_value() const { return sigma_now_; }
    std::size_t steps_per_delay() const { return N_; }
    double dt() const { return dt_; }
    HistorySegment segment() const;

private:
    struct Read {
        std::size_t q0;
        double frac;
    };
    struct Plan {
        const PolyLagFunctional* f = nullptr;
        std::vector<std::size_t> lag_slot;
        std::vector<double> u;
        std::vector<double> out;
        bool constant = false;    // out computed once
        bool contiguous = false;  // lag slots are consecutive, so lagvals_ can be passed as is
    };
    struct Telegraph {
        double amplitude, rate, sign, next;
    };

    std::size_t slot_for(double lag);
    void read(const Read& rd, double* out) const;
    void eval_plan(Plan& p);
    void advance_noise();

    const PerturbedModel& model_;
    std::size_t n_, N_;
    double dt_, sqdt_;
    bool perturbed_;
    bool white_;
    double eps_;
    std::vector<Read> reads_;
    std::vector<double> lagvals_;  // slots x n
    std::vector<std::pair<std::size_t, std::vector<double>>> L0_;  // row-major matrices
    std::optional<PolyLagFunctional> drift_f_;
    Plan F_, G_;
    bool hasF_ = false, hasG_ = false;
    std::vector<Telegraph> tele_;
    std::vector<double> ring_;
    std::size_t head_ = 0;
    std::uint64_t j_ = 0;
    bool finite_ = true;
    double sigma_now_ = 0.0;
    std::mt19937_64 rng_;
    std::vector<double> drift_;
};

// Explicit Euler for x' = L0(Pi_t x). record_stride thins the stored samples.
Trajectory integrate_unperturbed(const MatrixLagMeasure& measure, const HistorySegment& init, double T, double dt,
                                 std::size_t record_stride = 1);

Trajectory integrate_sdde(const PerturbedModel& model, const HistorySegment& init, double dt, double T,
                          std::uint64_t seed, std::size_t record_stride = 1);

// 2|<Psi_1, seg>|^2, or <Psi, seg> in zero-root mode.
double h_of_segment(const SpectralData& spec, const MatrixLagMeasure& measure, const HistorySegment& seg);

// lambda(t) = (1/t) log sup_{s in [t - m r, t]} |x_j(s)| at each requested time.
std::vector<double> lyapunov_estimator(const Trajectory& traj, std::size_t m, double r, std::size_t component,
                                       const std::vector<double>& times);

// Runs fn(i) for i in [0, count) on up to `threads` workers (0 = hardware).
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct EnsembleOptions {
    std::size_t samples = 0;
    double dt = 1e-4;
    double T = 1.0;  // DDE time
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    // first time |x_component| >= passage_level; <= 0 disables
    double passage_level = 0.0;
    std::size_t passage_component = 0;
    // also record 0.5 (x1^2 + (x2/omega)^2) at T when energy_omega > 0 (two-dimensional oscillators)
    double energy_omega = 0.0;
};

struct EnsembleResult {
    std::vector<double> h_final;
    std::vector<double> passage_time;  // +inf when censored
    std::vector<double> energy_final;
    std::vector<std::size_t> flagged;  // trajectories aborted by NaN/overflow
};

EnsembleResult run_dde_ensemble(const PerturbedModel& model, const SpectralData& spec,
                                const std::function<HistorySegment(std::size_t)>& init, const EnsembleOptions& opts);

struct LyapunovOptions {
    std::size_t realizations = 20;
    double dt = 1e-4;
    double T = 1000.0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::size_t window = 5;  // m
    std::size_t component = 0;
    std::vector<double> times;  // must be multiples of r, > m r
};

// Streaming version of lyapunov_estimator for runs too long to store; one row per realization.
std::vector<std::vector<double>> run_lyapunov_ensemble(const PerturbedModel& model, const HistorySegment& init,
                                                       const LyapunovOptions& opts);

}  // namespace sdde
