#include "sdde/stats.hpp"

#include <algorithm>
#include <cmath>

#include "sdde/errors.hpp"

namespace sdde {

EmpiricalCDF::EmpiricalCDF(std::vector<double> samples) : size_(samples.size()) {
    require(!samples.empty(), ErrorCode::Config, "empirical CDF needs at least one sample");
    for (double v : samples) {
        if (std::isfinite(v))
            values_.push_back(v);
        else
            ++censored_;
    }
    std::sort(values_.begin(), values_.end());
}

double EmpiricalCDF::operator()(double x) const {
    auto it = std::upper_bound(values_.begin(), values_.end(), x);
    return static_cast<double>(it - values_.begin()) / static_cast<double>(size_);
}

double EmpiricalCDF::left(double x) const {
    auto it = std::lower_bound(values_.begin(), values_.end(), x);
    return static_cast<double>(it - values_.begin()) / static_cast<double>(size_);
}

EmpiricalCDF ecdf(const std::vector<double>& samples) { return EmpiricalCDF(samples); }

double ks_distance(const EmpiricalCDF& a, const EmpiricalCDF& b) {
    double d = 0.0;
    for (const auto* src : {&a.values(), &b.values()})
        for (double x : *src) d = std::max(d, std::abs(a(x) - b(x)));
    // mass left at +inf differs when censoring differs
    double tail_a = static_cast<double>(a.censored()) / static_cast<double>(a.size());
    double tail_b = static_cast<double>(b.censored()) / static_cast<double>(b.size());
    return std::max(d, std::abs(tail_a - tail_b));
}

double ks_distance(const EmpiricalCDF& a, const std::function<double(double)>& cdf) {
    double d = 0.0;
    for (double x : a.values()) {
        double g = cdf(x);
        d = std::max({d, std::abs(a(x) - g), std::abs(a.left(x) - g)});
    }
    double tail = static_cast<double>(a.censored()) / static_cast<double>(a.size());
    return std::max(d, tail);
}

double quantile(std::vector<double> values, double p) {
    require(!values.empty(), ErrorCode::Config, "quantile of an empty sample");
    require(p >= 0.0 && p <= 1.0, ErrorCode::Config, "quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

std::vector<BoxStats> boxplot_series(const std::vector<std::vector<double>>& series) {
    require(series.size() >= 4, ErrorCode::Config, "box statistics need at least 4 series");
    const std::size_t T = series.front().size();
    for (const auto& s : series) require(s.size() == T, ErrorCode::Config, "series lengths differ");
    std::vector<BoxStats> out(T);
    std::vector<double> col(series.size());
    for (std::size_t t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t k = 0; k < series.size(); ++k) {
            col[k] = series[k][t];
            sum += col[k];
        }
        out[t].mean = sum / static_cast<double>(series.size());
        out[t].q25 = quantile(col, 0.25);
        out[t].q75 = quantile(col, 0.75);
    }
    return out;
}

}  // namespace sdde
