#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sdde/averaging.hpp"
#include "sdde/config.hpp"
#include "sdde/errors.hpp"
#include "sdde/reduced.hpp"
#include "sdde/report.hpp"
#include "sdde/simulator.hpp"
#include "sdde/spectrum.hpp"
#include "sdde/stats.hpp"

namespace fs = std::filesystem;
using namespace sdde;
using nlohmann::json;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::optional<std::size_t> threads;
    bool quiet = false;
};

struct Context {
    Config cfg;
    Options opts;
    std::string command;
    std::uint64_t seed = 0;
    std::size_t threads = 0;

    ArtifactMeta meta() const { return {command, cfg.hash(), seed}; }
    std::string path(const std::string& name) const { return (fs::path(opts.out_dir) / name).string(); }
    void note(const std::string& s) const {
        if (!opts.quiet) std::cerr << s << "\n";
    }
};

struct Setup {
    ModelBundle bundle;
    CriticalPair pair;
    SpectralData spec;
};

Setup spectral_setup(const Config& cfg) {
    Setup s{model_from_config(cfg), {}, {}};
    const auto& m = s.bundle.model.L0;
    s.pair = locate_critical_pair(m, s.bundle.window);
    s.spec = s.bundle.window.zero_root ? zero_root_eigendata(m, s.bundle.eigen)
                                       : eigendata(m, s.pair.omega_c, s.bundle.eigen);
    return s;
}

WorkspaceOptions workspace_options(const Context& ctx) {
    WorkspaceOptions w;
    w.M = ctx.cfg.count("average.M", w.M);
    w.T_inf_factor = ctx.cfg.num("average.T_inf_factor", w.T_inf_factor);
    w.fund_step = ctx.cfg.num("average.fund_step", w.fund_step);
    w.decay_tol = ctx.cfg.num("average.decay_tol", w.decay_tol);
    w.threads = ctx.threads;
    return w;
}

bool linear_only(const PerturbedModel& m) {
    return m.F && m.F->is_linear_homogeneous() && !m.G && !m.Gq;
}

// The amplitude of x_k on the critical orbit with energy H is |d_k| sqrt(2H).
double passage_level(const Setup& s, double H_star, std::size_t component) {
    return std::abs(s.spec.d(static_cast<Eigen::Index>(component))) * std::sqrt(2.0 * H_star);
}

struct Run {
    double eps, dt, T, h0, H_star, sde_dt;
    std::size_t samples, component;
    bool energy;
};

Run run_params(const Context& ctx, const Setup& s) {
    const auto& c = ctx.cfg;
    Run r{};
    r.eps = s.bundle.model.epsilon;
    require(r.eps > 0.0, ErrorCode::Config, "model.epsilon must be positive for simulations");
    r.T = c.num("sim.T");
    r.dt = c.num("sim.dt", std::min(1e-4, 5e-5 * s.bundle.model.max_delay()));
    r.sde_dt = c.num("sde.dt", 1e-4);
    r.h0 = c.num("sim.h0");
    r.H_star = c.num("sim.H_star", 0.0);
    r.samples = c.count("sim.samples", 500);
    r.component = c.count("sim.component", 0);
    r.energy = c.str("sim.observable", "h") == "energy";
    require(r.T > 0.0 && r.dt > 0.0 && r.sde_dt > 0.0 && r.samples > 0, ErrorCode::Config,
            "sim.T, sim.dt, sde.dt and sim.samples must be positive");
    require(r.h0 >= 0.0 || s.spec.zero_root, ErrorCode::Config, "sim.h0 must be nonnegative");
    require(!r.energy || s.bundle.energy_omega > 0.0, ErrorCode::Config,
            "sim.observable = energy needs an oscillator preset");
    return r;
}

struct DdeSample {
    std::vector<double> h, tau;  // h at T and eps^2 tau, slow time
    std::vector<std::size_t> flagged;
};

DdeSample dde_ensemble(const Context& ctx, const Setup& s, const Run& r) {
    const auto& model = s.bundle.model;
    const double rmax = model.max_delay();
    const std::size_t N = steps_per_delay(rmax, r.dt);
    HistorySegment init = critical_orbit(s.spec, rmax, N, r.h0, 0.0);
    EnsembleOptions o;
    o.samples = r.samples;
    o.dt = r.dt;
    o.T = r.T / (r.eps * r.eps);
    o.seed = ctx.seed;
    o.threads = ctx.threads;
    o.passage_level = r.H_star > 0.0 ? passage_level(s, r.H_star, r.component) : 0.0;
    o.passage_component = r.component;
    o.energy_omega = r.energy ? s.bundle.energy_omega : 0.0;
    auto res = run_dde_ensemble(model, s.spec, [&](std::size_t) { return init; }, o);
    if (!res.flagged.empty()) ctx.note("warning: " + std::to_string(res.flagged.size()) + " DDE paths aborted");
    std::vector<double> tau = res.passage_time;
    for (double& t : tau) t *= r.eps * r.eps;
    return {r.energy ? res.energy_final : res.h_final, tau, res.flagged};
}

ReducedEnsemble sde_ensemble(const Context& ctx, const ReducedSDE& sde, const Run& r) {
    ReducedEnsembleOptions o;
    o.samples = ctx.cfg.count("sde.samples", r.samples);
    o.dt = r.sde_dt;
    o.T = r.T;
    o.seed = ctx.seed ^ 0x5deULL;
    o.threads = ctx.threads;
    o.passage_level = r.H_star;
    return run_reduced_ensemble(sde, r.h0, o);
}

ReducedCoefficients averaged(const Context& ctx, const Setup& s, json* linear = nullptr) {
    AveragingWorkspace ws(s.bundle.model.L0, s.spec, workspace_options(ctx));
    ReducedCoefficients rc = reduce(s.bundle.model, ws);
    if (linear && linear_only(s.bundle.model) && !s.spec.zero_root) {
        if (s.bundle.model.kind == PerturbationKind::White)
            *linear = to_json(averaged_linear_white(s.bundle.model, s.spec));
        else
            *linear = to_json(averaged_linear_gennoise(s.bundle.model, ws));
    }
    return rc;
}

void ensemble_csv(const Context& ctx, const std::string& name, const std::vector<double>& h,
                  const std::vector<double>& tau) {
    CsvWriter w(ctx.path(name), ctx.meta(), {"sample", "h_T", "tau"});
    for (std::size_t i = 0; i < h.size(); ++i) w.row({static_cast<double>(i), h[i], tau[i]});
}

int cmd_spectrum(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    json doc;
    doc["census"] = to_json(s.pair.census);
    doc["eigendata"] = to_json(s.spec);
    CMat bi = biorthogonality(s.spec, s.bundle.model.L0);
    doc["biorthogonality_residual"] = (bi - CMat::Identity(2, 2)).cwiseAbs().maxCoeff();
    write_json(ctx.path("spectrum.json"), doc, ctx.meta());
    ctx.note("omega_c = " + format_double(s.spec.omega_c));
    return 0;
}

int cmd_average(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    json linear;
    ReducedCoefficients rc = averaged(ctx, s, &linear);
    json doc = to_json(rc);
    if (!linear.is_null()) doc["linear_constants"] = linear;
    write_json(ctx.path("average.json"), doc, ctx.meta());
    return 0;
}

int cmd_simulate_dde(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    Run r = run_params(ctx, s);
    if (ctx.cfg.str("sim.mode", "ensemble") == "trajectory") {
        const double rmax = s.bundle.model.max_delay();
        const std::size_t N = steps_per_delay(rmax, r.dt);
        const std::size_t stride = ctx.cfg.count("sim.record_stride", N);
        Trajectory tr = integrate_sdde(s.bundle.model, critical_orbit(s.spec, rmax, N, r.h0, 0.0), r.dt,
                                       r.T / (r.eps * r.eps), ctx.seed, stride);
        std::vector<std::string> cols{"t"};
        for (std::size_t i = 0; i < tr.n; ++i) cols.push_back("x" + std::to_string(i + 1));
        CsvWriter w(ctx.path("dde_trajectory.csv"), ctx.meta(), cols);
        for (std::size_t k = 0; k < tr.size(); ++k) {
            std::vector<double> row{tr.time(k)};
            row.insert(row.end(), tr.at(k), tr.at(k) + tr.n);
            w.row(row);
        }
        require(tr.status == TrajectoryStatus::Ok, ErrorCode::Numeric, "trajectory left the finite range");
        return 0;
    }
    DdeSample d = dde_ensemble(ctx, s, r);
    ensemble_csv(ctx, "dde_ensemble.csv", d.h, d.tau);
    json doc;
    doc["dt"] = r.dt;
    doc["samples"] = r.samples;
    doc["T_slow"] = r.T;
    doc["flagged"] = d.flagged;
    write_json(ctx.path("dde_ensemble.json"), doc, ctx.meta());
    return 0;
}

int cmd_simulate_sde(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    Run r = run_params(ctx, s);
    ReducedSDE sde = ReducedSDE::from(averaged(ctx, s));
    if (ctx.cfg.str("sim.mode", "ensemble") == "trajectory") {
        const std::size_t stride = ctx.cfg.count("sde.record_stride", 100);
        ReducedPath p = integrate_reduced(sde, r.h0, r.sde_dt, r.T, ctx.seed, stride);
        CsvWriter w(ctx.path("sde_trajectory.csv"), ctx.meta(), {"t", "h"});
        for (std::size_t k = 0; k < p.values.size(); ++k) w.row({p.dt * static_cast<double>(k), p.values[k]});
        require(!p.blown_up, ErrorCode::Numeric, "reduced path exceeded the cap");
        return 0;
    }
    ReducedEnsemble e = sde_ensemble(ctx, sde, r);
    ensemble_csv(ctx, "sde_ensemble.csv", e.h_final, e.passage_time);
    return 0;
}

int cmd_compare(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    Run r = run_params(ctx, s);
    ReducedCoefficients rc = averaged(ctx, s);
    ReducedEnsemble e = sde_ensemble(ctx, ReducedSDE::from(rc), r);
    DdeSample d = dde_ensemble(ctx, s, r);
    EmpiricalCDF hd(d.h), hs(e.h_final), td(d.tau), ts(e.passage_time);
    write_cdf_csv(ctx.path("cdf_h_dde.csv"), ctx.meta(), hd);
    write_cdf_csv(ctx.path("cdf_h_sde.csv"), ctx.meta(), hs);
    json doc;
    doc["coefficients"] = to_json(rc);
    doc["ks_h"] = ks_distance(hd, hs);
    doc["samples"] = {{"dde", d.h.size()}, {"sde", e.h_final.size()}};
    doc["flagged"] = d.flagged;
    doc["clamp_count"] = e.clamp_count;
    if (r.H_star > 0.0) {
        write_cdf_csv(ctx.path("cdf_tau_dde.csv"), ctx.meta(), td);
        write_cdf_csv(ctx.path("cdf_tau_sde.csv"), ctx.meta(), ts);
        doc["ks_tau"] = ks_distance(td, ts);
        doc["censored"] = {{"dde", td.censored()}, {"sde", ts.censored()}};
    }
    write_json(ctx.path("compare.json"), doc, ctx.meta());
    ctx.note("KS(h) = " + format_double(doc["ks_h"].get<double>()));
    return 0;
}

int cmd_lyapunov(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    const auto& c = ctx.cfg;
    const PerturbedModel& model = s.bundle.model;
    const double rmax = model.max_delay();
    LyapunovOptions o;
    o.realizations = c.count("lyap.realizations", 20);
    o.dt = c.num("lyap.dt", std::min(1e-4, 5e-5 * rmax));
    o.T = c.num("lyap.T");
    o.seed = ctx.seed;
    o.threads = ctx.threads;
    o.window = c.count("lyap.window", 5);
    o.component = c.count("lyap.component", 0);
    const std::size_t points = c.count("lyap.points", 20);
    require(points >= 1 && o.T > static_cast<double>(o.window) * rmax, ErrorCode::Config,
            "lyap.T must exceed the estimator window");
    // evenly spaced multiples of r ending at T
    const double total = std::floor(o.T / rmax + 1e-9);
    for (std::size_t k = 1; k <= points; ++k) {
        double t = rmax * std::floor(total * static_cast<double>(k) / static_cast<double>(points));
        if (t > static_cast<double>(o.window) * rmax && (o.times.empty() || t > o.times.back())) o.times.push_back(t);
    }
    const std::size_t N = steps_per_delay(rmax, o.dt);
    HistorySegment init = critical_orbit(s.spec, rmax, N, c.num("lyap.h0", 0.5), 0.0);
    auto series = run_lyapunov_ensemble(model, init, o);
    auto box = boxplot_series(series);
    const double pred = dde_lyapunov_prediction(averaged_linear_white(model, s.spec).lambda_avg, model.epsilon);
    CsvWriter w(ctx.path("lyapunov.csv"), ctx.meta(), {"t", "mean", "q25", "q75", "prediction"});
    for (std::size_t k = 0; k < box.size(); ++k) w.row({o.times[k], box[k].mean, box[k].q25, box[k].q75, pred});
    return 0;
}

int cmd_invariant_density(const Context& ctx) {
    Setup s = spectral_setup(ctx.cfg);
    const auto& c = ctx.cfg;
    ReducedCoefficients rc = averaged(ctx, s);
    const Polynomial b = rc.drift();
    const Polynomial& s2 = rc.diffusion_sq;
    // Gamma form needs b = C_b h + C_b2 h^2 and sigma^2 = C_sigma h^2
    bool gamma_form = b.coeff(0) == 0.0 && s2.coeff(0) == 0.0 && s2.coeff(1) == 0.0;
    for (std::size_t k = 3; k < b.c.size(); ++k) gamma_form = gamma_form && b.c[k] == 0.0;
    for (std::size_t k = 3; k < s2.c.size(); ++k) gamma_form = gamma_form && s2.c[k] == 0.0;
    require(gamma_form, ErrorCode::Precondition, "reduced coefficients are not of the Gamma form");
    GammaDensity g = invariant_density(b.coeff(1), b.coeff(2), s2.coeff(2));
    const std::size_t points = c.count("density.points", 200);
    const double hmax = c.num("density.h_max", g.quantile(0.999));
    CsvWriter w(ctx.path("invariant_density.csv"), ctx.meta(), {"h", "pdf", "cdf"});
    for (std::size_t k = 1; k <= points; ++k) {
        double h = hmax * static_cast<double>(k) / static_cast<double>(points);
        w.row({h, g.pdf(h), g.cdf(h)});
    }
    json doc;
    doc["shape"] = g.shape();
    doc["rate"] = g.rate();
    doc["mean"] = g.mean();
    doc["coefficients"] = to_json(rc);
    const std::size_t samples = c.count("density.samples", 0);
    if (samples > 0) {
        ReducedEnsembleOptions o;
        o.samples = samples;
        o.dt = c.num("sde.dt", 1e-3);
        o.T = c.num("density.T");
        o.seed = ctx.seed;
        o.threads = ctx.threads;
        ReducedEnsemble e = run_reduced_ensemble(ReducedSDE::from(rc), c.num("density.h0", g.mean()), o);
        EmpiricalCDF emp(e.h_final);
        write_cdf_csv(ctx.path("density_sde_cdf.csv"), ctx.meta(), emp);
        doc["ks_sde"] = ks_distance(emp, [&](double h) { return g.cdf(h); });
    }
    write_json(ctx.path("invariant_density.json"), doc, ctx.meta());
    return 0;
}

int cmd_threshold(const Context& ctx) {
    ModelBundle b = model_from_config(ctx.cfg);
    require(b.vdp.has_value(), ErrorCode::Config, "threshold needs model.preset = vdp");
    const VdpParams& p = *b.vdp;
    const auto c = vdp_c(p, b.vdp_critical.omega_c);
    ThresholdReport rep = noise_shifted_threshold(b.vdp_critical.beta_c, c, p.eps, p.D_tilde);
    json doc = to_json(rep);
    doc["omega_c"] = b.vdp_critical.omega_c;
    doc["c"] = {c.real(), c.imag()};
    write_json(ctx.path("threshold.json"), doc, ctx.meta());
    std::vector<double> grid = ctx.cfg.has("threshold.eps_grid") ? ctx.cfg.list("threshold.eps_grid")
                                                                 : std::vector<double>{};
    if (!grid.empty()) {
        CsvWriter w(ctx.path("threshold_curve.csv"), ctx.meta(), {"eps", "beta_c_noise"});
        for (double e : grid) w.row({e, noise_shifted_threshold(b.vdp_critical.beta_c, c, e, p.D_tilde).beta_c_noise});
    }
    return 0;
}

int cmd_lyap_surface(const Context& ctx) {
    const auto& c = ctx.cfg;
    std::vector<double> r1s = c.list("surface.r1");
    std::vector<double> gs = c.list("surface.g");
    require(!r1s.empty() && !gs.empty(), ErrorCode::Config, "surface.r1 and surface.g must be non-empty");
    const double sigma0 = c.num("surface.sigma0", 1.0);
    const double eps = c.num("model.epsilon", 0.05);
    PerturbedModel base = scalar_markov_model(gs.front(), sigma0, r1s.front(), eps);
    CriticalPair pair = locate_critical_pair(base.L0);
    SpectralData spec = eigendata(base.L0, pair.omega_c);
    AveragingWorkspace ws(base.L0, spec, workspace_options(ctx));
    CsvWriter w(ctx.path("lyap_surface.csv"), ctx.meta(), {"r1", "g", "lambda_avg"});
    for (double r1 : r1s)
        for (double g : gs) w.row({r1, g, averaged_linear_gennoise(scalar_markov_model(g, sigma0, r1, eps), ws).lambda_avg});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Averaged SDE reduction of stochastic delay equations near oscillatory instability"};
    app.require_subcommand(1);
    Options opts;
    app.add_option("--config", opts.config_path, "configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", opts.seed, "base seed (overrides the config key `seed`)");
    app.add_option("--out", opts.out_dir, "output directory");
    app.add_option("--threads", opts.threads, "worker threads, 0 = auto");
    app.add_flag("--quiet", opts.quiet, "suppress progress notes");
    app.fallthrough();

    using Handler = int (*)(const Context&);
    const std::vector<std::pair<std::string, Handler>> commands{
        {"spectrum", cmd_spectrum},
        {"average", cmd_average},
        {"simulate-dde", cmd_simulate_dde},
        {"simulate-sde", cmd_simulate_sde},
        {"compare", cmd_compare},
        {"lyapunov", cmd_lyapunov},
        {"invariant-density", cmd_invariant_density},
        {"threshold", cmd_threshold},
        {"lyap-surface", cmd_lyap_surface},
    };
    for (const auto& [name, fn] : commands) app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Context ctx;
        ctx.opts = opts;
        ctx.cfg = Config::load(opts.config_path);
        ctx.command = app.get_subcommands().front()->get_name();
        if (opts.seed)
            ctx.seed = *opts.seed;
        else if (ctx.cfg.has("seed"))
            ctx.seed = ctx.cfg.u64("seed", 0);
        else
            fail(ErrorCode::Config, "a seed is required (--seed or config key `seed`)");
        ctx.threads = opts.threads ? *opts.threads : ctx.cfg.count("threads", 0);
        fs::create_directories(opts.out_dir);
        for (const auto& [name, fn] : commands)
            if (name == ctx.command) return fn(ctx);
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << error_name(e.code()) << ": " << e.what() << "\n";
        return exit_status(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: Numeric: " << e.what() << "\n";
        return 3;
    }
}
