#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace sdde {

// Right-continuous empirical CDF. Non-finite samples (+inf, NaN) count as censored:
// they stay in the denominator but never produce a jump.
class EmpiricalCDF {
public:
    explicit EmpiricalCDF(std::vector<double> samples);

    double operator()(double x) const;
    // Value just left of x.
    double left(double x) const;
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return size_; }
    std::size_t censored() const { return censored_; }
    bool degenerate() const { return values_.empty(); }

private:
    std::vector<double> values_;
    std::size_t size_ = 0;
    std::size_t censored_ = 0;
};

EmpiricalCDF ecdf(const std::vector<double>& samples);

double ks_distance(const EmpiricalCDF& a, const EmpiricalCDF& b);
double ks_distance(const EmpiricalCDF& a, const std::function<double(double)>& cdf);

// Linear interpolation between order statistics, h = (n - 1) p.
double quantile(std::vector<double> values, double p);

struct BoxStats {
    double mean = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

// series[k][t]: realization k at time index t; needs at least 4 series of equal length.
std::vector<BoxStats> boxplot_series(const std::vector<std::vector<double>>& series);

}  // namespace sdde
