#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace sdde {

// Position of a lag on a uniform grid: node index plus fractional offset
// towards the next node (frac == 0 means exactly on a node).
struct GridPosition {
    std::size_t index = 0;
    double frac = 0.0;
};

// Uniformly sampled function on [-r, 0]. Node i sits at theta = -r + i*h.
// The optional jump replaces the value at theta = 0; the node at 0 then
// holds the left limit.
class HistorySegment {
public:
    HistorySegment() = default;
    HistorySegment(std::size_t n, double r, std::size_t intervals);

    static HistorySegment sample(std::size_t n, double r, std::size_t intervals,
                                 const std::function<void(double, double*)>& f);

    std::size_t dim() const { return n_; }
    std::size_t intervals() const { return intervals_; }
    std::size_t nodes() const { return intervals_ + 1; }
    double grid_step() const { return h_; }
    double span() const { return r_; }
    double theta(std::size_t i) const { return -r_ + static_cast<double>(i) * h_; }

    double* node(std::size_t i) { return values_.data() + i * n_; }
    const double* node(std::size_t i) const { return values_.data() + i * n_; }
    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

    bool has_jump() const { return jump_.has_value(); }
    const std::vector<double>& jump() const { return *jump_; }
    void set_jump(std::vector<double> v);
    void clear_jump() { jump_.reset(); }

    // Throws a domain error if theta lies outside [-r, 0].
    GridPosition locate(double theta) const;

    // Continuous part at theta (linear interpolation between nodes).
    void value_at(double theta, double* out) const;
    // Value honouring the jump: at theta == 0 returns the jump if present.
    void state_at(double theta, double* out) const;

    double sup_norm() const;

private:
    std::size_t n_ = 0;
    std::size_t intervals_ = 0;
    double r_ = 0.0;
    double h_ = 0.0;
    std::vector<double> values_;
    std::optional<std::vector<double>> jump_;
};

}  // namespace sdde
