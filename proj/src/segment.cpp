#include "sdde/segment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

HistorySegment::HistorySegment(std::size_t n, double r, std::size_t intervals)
    : n_(n), intervals_(intervals), r_(r) {
    require(n > 0, ErrorCode::Config, "segment dimension must be positive");
    require(intervals > 0, ErrorCode::Config, "segment needs at least one interval");
    require(r > 0.0 && std::isfinite(r), ErrorCode::Config, "segment span must be positive");
    h_ = r / static_cast<double>(intervals);
    values_.assign((intervals + 1) * n, 0.0);
}

HistorySegment HistorySegment::sample(std::size_t n, double r, std::size_t intervals,
                                      const std::function<void(double, double*)>& f) {
    HistorySegment seg(n, r, intervals);
    for (std::size_t i = 0; i <= intervals; ++i) f(seg.theta(i), seg.node(i));
    return seg;
}

void HistorySegment::set_jump(std::vector<double> v) {
    require(v.size() == n_, ErrorCode::Config, "jump vector has wrong dimension");
    jump_ = std::move(v);
}

GridPosition HistorySegment::locate(double theta) const {
    const double tol = 1e-9 * h_;
    if (theta > tol || theta < -r_ - tol) {
        std::ostringstream os;
        os << "lag " << theta << " outside segment span [" << -r_ << ", 0]";
        fail(ErrorCode::Domain, os.str());
    }
    double p = (theta + r_) / h_;
    double k = std::round(p);
    if (std::abs(p - k) <= 1e-9) {
        auto i = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(intervals_)));
        return {i, 0.0};
    }
    double fl = std::floor(p);
    auto i = static_cast<std::size_t>(std::clamp(fl, 0.0, static_cast<double>(intervals_ - 1)));
    return {i, p - static_cast<double>(i)};
}

void HistorySegment::value_at(double theta, double* out) const {
    GridPosition pos = locate(theta);
    const double* a = node(pos.index);
    if (pos.frac == 0.0) {
        std::copy(a, a + n_, out);
        return;
    }
    const double* b = node(pos.index + 1);
    for (std::size_t c = 0; c < n_; ++c) out[c] = a[c] + pos.frac * (b[c] - a[c]);
}

void HistorySegment::state_at(double theta, double* out) const {
    GridPosition pos = locate(theta);
    if (jump_ && pos.index == intervals_ && pos.frac == 0.0) {
        std::copy(jump_->begin(), jump_->end(), out);
        return;
    }
    value_at(theta, out);
}

double HistorySegment::sup_norm() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    if (jump_)
        for (double v : *jump_) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace sdde
