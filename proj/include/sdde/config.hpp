#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdde/model.hpp"
#include "sdde/presets.hpp"
#include "sdde/spectrum.hpp"

namespace sdde {

// Arithmetic on numbers, pi, e, + - * / ^, parentheses and sqrt/exp/log/sin/cos/abs.
double eval_expression(const std::string& text);

// Flat dotted-key configuration. Values are kept as text; numbers go through eval_expression.
class Config {
public:
    // Dotted `key = value` lines (# starts a comment) or a JSON document, detected by a leading '{'.
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    std::string str(const std::string& key) const;
    std::string str(const std::string& key, const std::string& fallback) const;
    double num(const std::string& key) const;
    double num(const std::string& key, double fallback) const;
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
    std::size_t count(const std::string& key, std::size_t fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    std::vector<double> list(const std::string& key) const;
    // Sorted numeric indices k for which some key starts with prefix + k + '.'.
    std::vector<std::size_t> indices(const std::string& prefix) const;

    // FNV-1a over the canonical "key=value\n" listing.
    std::uint64_t hash() const;
    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

struct ModelBundle {
    PerturbedModel model;
    EigenOptions eigen;
    ScanWindow window;
    std::string preset;  // empty for explicit models
    std::optional<VdpParams> vdp;
    VdpCritical vdp_critical;
    double vdp_beta = 0.0;
    double energy_omega = 0.0;  // > 0 for two-dimensional oscillators
};

// Reads the model.* and spectrum.* keys.
ModelBundle model_from_config(const Config& cfg);

}  // namespace sdde
