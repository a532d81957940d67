#include "sdde/report.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

const char* error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config: return "Config";
        case ErrorCode::Domain: return "Domain";
        case ErrorCode::NoCriticalPair: return "NoCriticalPair";
        case ErrorCode::UnstableExtraRoots: return "UnstableExtraRoots";
        case ErrorCode::WindowTooSmall: return "WindowTooSmall";
        case ErrorCode::DegenerateRoot: return "DegenerateRoot";
        case ErrorCode::NoZeroRoot: return "NoZeroRoot";
        case ErrorCode::CenteringViolated: return "CenteringViolated";
        case ErrorCode::DecayNotReached: return "DecayNotReached";
        case ErrorCode::NotNormalizable: return "NotNormalizable";
        case ErrorCode::Precondition: return "Precondition";
        case ErrorCode::Numeric: return "Numeric";
    }
    return "Unknown";
}

int exit_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config:
        case ErrorCode::Domain:
            return 2;
        case ErrorCode::Numeric:
        case ErrorCode::DecayNotReached:
        case ErrorCode::WindowTooSmall:
            return 3;
        case ErrorCode::NoCriticalPair:
        case ErrorCode::UnstableExtraRoots:
        case ErrorCode::DegenerateRoot:
        case ErrorCode::NoZeroRoot:
        case ErrorCode::CenteringViolated:
        case ErrorCode::NotNormalizable:
        case ErrorCode::Precondition:
            return 4;
    }
    return 1;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

nlohmann::json cjson(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }

nlohmann::json num_or_string(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

}  // namespace

nlohmann::json to_json(const CensusReport& c) {
    nlohmann::json j;
    j["window"] = {{"re_lo", c.re_lo}, {"re_hi", c.re_hi}, {"im_lo", c.im_lo}, {"im_hi", c.im_hi}};
    j["norm_bound"] = c.norm_bound;
    j["total"] = c.total;
    j["cells"] = nlohmann::json::array();
    for (const auto& cell : c.cells)
        j["cells"].push_back({{"re_lo", cell.re_lo}, {"re_hi", cell.re_hi}, {"im_lo", cell.im_lo}, {"im_hi", cell.im_hi},
                              {"count", cell.count}});
    j["roots"] = nlohmann::json::array();
    for (cplx z : c.roots) j["roots"].push_back(cjson(z));
    j["scope"] = c.scope;
    return j;
}

nlohmann::json to_json(const SpectralData& s) {
    nlohmann::json j;
    j["omega_c"] = s.omega_c;
    j["zero_root"] = s.zero_root;
    j["period"] = num_or_string(s.period);
    j["c"] = cjson(s.c);
    auto row = [](const auto& v) {
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(cjson(v(i)));
        return a;
    };
    j["d"] = row(s.d);
    j["d2"] = row(s.d2);
    j["psi_hat"] = {row(s.psi_hat.row(0)), row(s.psi_hat.row(1))};
    j["null_residual"] = s.null_residual;
    return j;
}

nlohmann::json to_json(const Polynomial& p) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t k = 0; k < p.c.size(); ++k) j["h^" + std::to_string(k)] = p.c[k];
    return j;
}

nlohmann::json to_json(const ReducedCoefficients& rc) {
    nlohmann::json j;
    j["zero_root"] = rc.zero_root;
    j["drift"] = to_json(rc.drift());
    j["drift_terms"] = nlohmann::json::array();
    for (const auto& t : rc.drift_terms) j["drift_terms"].push_back({{"tag", provenance_name(t.tag)}, {"coefficients", to_json(t.poly)}});
    j["diffusion_sq"] = to_json(rc.diffusion_sq);
    const auto& m = rc.meta;
    j["quadrature"] = {{"M", m.M},
                       {"T_inf", m.T_inf},
                       {"T_used", m.T_used},
                       {"decay_rate", m.decay_rate},
                       {"tail_bound", m.tail_bound},
                       {"fit_residual", m.fit_residual},
                       {"fundamental_dt", m.fund_dt}};
    return j;
}

nlohmann::json to_json(const LinearConstants& lc) {
    nlohmann::json j;
    nlohmann::json u = nlohmann::json::array();
    for (Eigen::Index i = 0; i < lc.upsilon.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (Eigen::Index k = 0; k < lc.upsilon.cols(); ++k) r.push_back(cjson(lc.upsilon(i, k)));
        u.push_back(r);
    }
    j["upsilon"] = u;
    j["C_b"] = lc.C_b;
    j["C_sigma"] = lc.C_sigma;
    j["lambda_avg"] = lc.lambda_avg;
    j["theta_star"] = lc.theta_star;
    j["stable"] = lc.stable;
    j["R0"] = lc.R0;
    j["R2c"] = lc.R2c;
    j["R1hat"] = cjson(lc.R1hat);
    j["R2hat"] = cjson(lc.R2hat);
    j["tail_bound"] = lc.tail_bound;
    return j;
}

nlohmann::json to_json(const ThresholdReport& t) {
    return {{"beta_c", t.beta_c}, {"beta_c_noise", t.beta_c_noise}, {"sigma1", t.sigma1}, {"sigma2", t.sigma2}, {"effect", t.effect}};
}

std::string ArtifactMeta::header_line() const {
    std::ostringstream os;
    os << "# sdde " << command << " config_hash=0x" << std::hex << config_hash << std::dec << " seed=" << seed;
    return os.str();
}

CsvWriter::CsvWriter(const std::string& path, const ArtifactMeta& meta, const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), width_(columns.size()) {
    require(static_cast<bool>(out_), ErrorCode::Config, "cannot write " + path);
    out_ << meta.header_line() << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    require(values.size() == width_, ErrorCode::Numeric, "CSV row width mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
    out_ << '\n';
}

void write_json(const std::string& path, nlohmann::json doc, const ArtifactMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::Config, "cannot write " + path);
    std::ostringstream hash;
    hash << "0x" << std::hex << meta.config_hash;
    doc["meta"] = {{"command", meta.command}, {"config_hash", hash.str()}, {"seed", meta.seed}};
    out << doc.dump(2) << '\n';
}

void write_cdf_csv(const std::string& path, const ArtifactMeta& meta, const EmpiricalCDF& cdf) {
    CsvWriter w(path, meta, {"x", "cdf"});
    for (double x : cdf.values()) w.row({x, cdf(x)});
}

}  // namespace sdde
