#include "sdde/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

namespace {

class ExprParser {
public:
    explicit ExprParser(const std::string& s) : s_(s) {}

    double run() {
        double v = expr();
        skip();
        if (pos_ != s_.size()) bad("unexpected character");
        return v;
    }

private:
    [[noreturn]] void bad(const std::string& why) const {
        fail(ErrorCode::Config, "cannot parse number '" + s_ + "': " + why);
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    double expr() {
        double v = term();
        for (;;) {
            if (eat('+'))
                v += term();
            else if (eat('-'))
                v -= term();
            else
                return v;
        }
    }
    double term() {
        double v = unary();
        for (;;) {
            if (eat('*'))
                v *= unary();
            else if (eat('/'))
                v /= unary();
            else
                return v;
        }
    }
    double unary() {
        if (eat('-')) return -unary();
        if (eat('+')) return unary();
        double base = atom();
        if (eat('^')) return std::pow(base, unary());
        return base;
    }
    double atom() {
        skip();
        if (eat('(')) {
            double v = expr();
            if (!eat(')')) bad("missing ')'");
            return v;
        }
        if (pos_ >= s_.size()) bad("unexpected end");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin) bad("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            return v;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            std::string name = s_.substr(start, pos_ - start);
            if (name == "pi") return std::numbers::pi;
            if (name == "e") return std::numbers::e;
            if (name == "inf") return std::numeric_limits<double>::infinity();
            if (!eat('(')) bad("unknown name " + name);
            double a = expr();
            if (!eat(')')) bad("missing ')'");
            if (name == "sqrt") return std::sqrt(a);
            if (name == "exp") return std::exp(a);
            if (name == "log") return std::log(a);
            if (name == "sin") return std::sin(a);
            if (name == "cos") return std::cos(a);
            if (name == "abs") return std::abs(a);
            bad("unknown function " + name);
        }
        bad("unexpected character");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string scalar_text(const nlohmann::json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
    if (j.is_number()) return j.dump();
    fail(ErrorCode::Config, "unsupported JSON value " + j.dump());
}

bool all_scalars(const nlohmann::json& a) {
    return std::all_of(a.begin(), a.end(), [](const nlohmann::json& x) { return x.is_primitive() && !x.is_null(); });
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else if (j.is_array()) {
        if (all_scalars(j)) {
            std::string s;
            for (std::size_t i = 0; i < j.size(); ++i) s += (i ? ", " : "") + scalar_text(j[i]);
            out[prefix] = s;
        } else if (std::all_of(j.begin(), j.end(), [](const nlohmann::json& r) { return r.is_array() && all_scalars(r); })) {
            std::string s;
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) s += "; ";
                for (std::size_t k = 0; k < j[i].size(); ++k) s += (k ? ", " : "") + scalar_text(j[i][k]);
            }
            out[prefix] = s;
        } else {
            for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
        }
    } else if (!j.is_null()) {
        out[prefix] = scalar_text(j);
    }
}

}  // namespace

double eval_expression(const std::string& text) {
    std::string t = trim(text);
    require(!t.empty(), ErrorCode::Config, "empty numeric value");
    return ExprParser(t).run();
}

Config Config::parse(const std::string& text) {
    Config c;
    std::string t = trim(text);
    if (!t.empty() && t[0] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(t);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::Config, std::string("invalid JSON config: ") + e.what());
        }
        flatten(j, "", c.kv_);
        return c;
    }
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::Config, "config line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        require(!key.empty(), ErrorCode::Config, "config line " + std::to_string(lineno) + " has an empty key");
        require(!c.kv_.count(key), ErrorCode::Config, "duplicate config key " + key);
        c.kv_[key] = val;
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Config, "cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Config::str(const std::string& key) const {
    auto it = kv_.find(key);
    require(it != kv_.end(), ErrorCode::Config, "missing config key " + key);
    return it->second;
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double Config::num(const std::string& key) const { return eval_expression(str(key)); }

double Config::num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

std::uint64_t Config::u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    std::string s = trim(str(key));
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(s, &used, 0);
        require(used == s.size(), ErrorCode::Config, "");
        return v;
    } catch (const std::exception&) {
        fail(ErrorCode::Config, "config key " + key + " must be an unsigned integer");
    }
}

std::size_t Config::count(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    double v = num(key);
    require(v >= 0.0 && v == std::floor(v), ErrorCode::Config, "config key " + key + " must be a nonnegative integer");
    return static_cast<std::size_t>(v);
}

bool Config::flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string s = trim(str(key));
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail(ErrorCode::Config, "config key " + key + " must be true or false");
}

std::vector<double> Config::list(const std::string& key) const {
    std::string s = str(key);
    std::vector<double> out;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',' || ch == ';') {
            if (!trim(cur).empty()) out.push_back(eval_expression(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

std::vector<std::size_t> Config::indices(const std::string& prefix) const {
    std::vector<std::size_t> out;
    for (auto it = kv_.lower_bound(prefix); it != kv_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
        std::string rest = it->first.substr(prefix.size());
        auto dot = rest.find('.');
        std::string idx = rest.substr(0, dot);
        if (idx.empty() || !std::all_of(idx.begin(), idx.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            fail(ErrorCode::Config, "bad index in config key " + it->first);
        out.push_back(std::stoul(idx));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::uint64_t Config::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [k, v] : kv_) {
        for (char c : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

namespace {

Mat parse_matrix(const Config& cfg, const std::string& key, std::size_t n) {
    std::vector<double> v = cfg.list(key);
    require(v.size() == n * n, ErrorCode::Config, key + " must hold " + std::to_string(n * n) + " entries");
    Mat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i * n + j];
    return m;
}

std::optional<PolyLagFunctional> parse_functional(const Config& cfg, const std::string& name, std::size_t n) {
    const std::string base = "model." + name + ".";
    bool any = false;
    for (const auto& kv : cfg.entries())
        if (kv.first.compare(0, base.size(), base) == 0) any = true;
    if (!any) return std::nullopt;
    std::vector<double> lags = cfg.has(base + "lags") ? cfg.list(base + "lags") : std::vector<double>{0.0};
    std::vector<Monomial> monos;
    for (std::size_t k : cfg.indices(base + "term.")) {
        const std::string p = base + "term." + std::to_string(k) + ".";
        std::vector<double> e = cfg.list(p + "exponents");
        std::vector<double> c = cfg.list(p + "coeff");
        require(e.size() == n * lags.size(), ErrorCode::Config, p + "exponents must hold n * (number of lags) entries");
        require(c.size() == n, ErrorCode::Config, p + "coeff must hold n entries");
        Monomial m;
        for (double x : e) {
            require(x >= 0.0 && x == std::floor(x), ErrorCode::Config, p + "exponents must be nonnegative integers");
            m.exponents.push_back(static_cast<unsigned>(x));
        }
        m.coeff = Eigen::Map<Vec>(c.data(), static_cast<Eigen::Index>(n));
        monos.push_back(std::move(m));
    }
    return PolyLagFunctional(n, lags, monos);
}

NoiseModel parse_noise(const Config& cfg) {
    std::string kind = cfg.str("model.noise.kind", "wiener");
    if (kind == "wiener") return Wiener{};
    if (kind == "two_state") return TwoStateMarkov{cfg.num("model.noise.g"), cfg.num("model.noise.sigma0", 1.0)};
    if (kind == "exp_sum") {
        ExpSumCorrelation e;
        for (std::size_t k : cfg.indices("model.noise.component.")) {
            const std::string p = "model.noise.component." + std::to_string(k) + ".";
            e.components.push_back({cfg.num(p + "weight"), cfg.num(p + "rate")});
        }
        return e;
    }
    fail(ErrorCode::Config, "unknown noise kind " + kind);
}

}  // namespace

ModelBundle model_from_config(const Config& cfg) {
    ModelBundle b;
    b.preset = cfg.str("model.preset", "");
    const double eps = cfg.num("model.epsilon", 0.0);
    if (b.preset == "scalar_verge") {
        b.model = scalar_verge_model(cfg.num("model.gamma_q", 0.0), cfg.num("model.gamma_c", 0.0),
                                     cfg.num("model.sigma", 1.0), eps);
    } else if (b.preset == "scalar_linear") {
        b.model = scalar_linear_white_model(cfg.num("model.r1", 1.0), eps);
    } else if (b.preset == "scalar_markov") {
        b.model = scalar_markov_model(cfg.num("model.g"), cfg.num("model.sigma0", 1.0), cfg.num("model.r1", 1.0), eps);
    } else if (b.preset == "vdp") {
        VdpParams p;
        p.omega0 = cfg.num("model.omega0", p.omega0);
        p.eta = cfg.num("model.eta", p.eta);
        p.kappa = cfg.num("model.kappa", p.kappa);
        p.r = cfg.num("model.r", p.r);
        p.b = cfg.num("model.b", p.b);
        p.D_tilde = cfg.num("model.D_tilde", p.D_tilde);
        p.eps = cfg.num("model.epsilon", p.eps);
        b.vdp = p;
        b.vdp_critical = vdp_critical_beta(p);
        b.vdp_beta = cfg.num("model.beta", b.vdp_critical.beta_c);
        b.model = vdp_model(p, b.vdp_critical.beta_c, b.vdp_beta);
        b.eigen.normalization = Normalization::ComponentOne;
        b.eigen.component = 0;
        b.window.omega_guess = b.vdp_critical.omega_c;
        b.energy_omega = b.vdp_critical.omega_c;
    } else if (b.preset == "no_delay_oscillator") {
        b.model = no_delay_oscillator_model(eps);
        b.eigen = no_delay_oscillator_eigen_options();
    } else if (b.preset.empty()) {
        const std::size_t n = cfg.count("model.dim", 0);
        require(n >= 1, ErrorCode::Config, "model.dim must be a positive integer");
        std::vector<LagTerm> terms;
        for (std::size_t k : cfg.indices("model.L0.term.")) {
            const std::string p = "model.L0.term." + std::to_string(k) + ".";
            terms.push_back({cfg.num(p + "lag"), parse_matrix(cfg, p + "matrix", n)});
        }
        require(!terms.empty(), ErrorCode::Config, "model.L0 needs at least one term");
        std::optional<double> horizon;
        if (cfg.has("model.horizon")) horizon = cfg.num("model.horizon");
        b.model.L0 = MatrixLagMeasure(std::move(terms), horizon);
        std::string kind = cfg.str("model.kind", "white");
        if (kind == "white")
            b.model.kind = PerturbationKind::White;
        else if (kind == "general")
            b.model.kind = PerturbationKind::GeneralNoise;
        else
            fail(ErrorCode::Config, "model.kind must be white or general");
        b.model.F = parse_functional(cfg, "F", n);
        b.model.G = parse_functional(cfg, "G", n);
        b.model.Gq = parse_functional(cfg, "Gq", n);
        b.model.noise = parse_noise(cfg);
        b.model.epsilon = eps;
        b.model.validate();
    } else {
        fail(ErrorCode::Config, "unknown model.preset " + b.preset);
    }
    std::string norm = cfg.str("spectrum.normalization", "");
    if (norm == "unit")
        b.eigen.normalization = Normalization::UnitNorm;
    else if (norm == "component_one")
        b.eigen.normalization = Normalization::ComponentOne;
    else
        require(norm.empty(), ErrorCode::Config, "spectrum.normalization must be unit or component_one");
    b.eigen.component = cfg.count("spectrum.component", b.eigen.component);
    b.eigen.extra_phase = cfg.num("spectrum.phase", 0.0);
    b.window.zero_root = cfg.flag("spectrum.zero_root", false);
    b.window.rho_max = cfg.num("spectrum.rho_max", b.window.rho_max);
    b.window.omega_max = cfg.num("spectrum.omega_max", b.window.omega_max);
    b.window.omega_guess = cfg.num("spectrum.omega_guess", b.window.omega_guess);
    return b;
}

}  // namespace sdde
