#include "gfcsim/features.hpp"

#include "gfcsim/error.hpp"

#include <cmath>

namespace gfc {

double ls_slope(const double* y, std::size_t n, double spacing) {
    if (n < 2) {
        return 0.0;
    }
    const double t_mean = 0.5 * static_cast<double>(n - 1);
    double y_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        y_mean += y[i];
    }
    y_mean /= static_cast<double>(n);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(i) - t_mean;
        num += dt * (y[i] - y_mean);
        den += dt * dt;
    }
    return num / (den * spacing);
}

RateTracker::RateTracker(double sample_period, double window) : period_(sample_period) {
    if (!(sample_period > 0.0) || !(window >= sample_period)) {
        throw Error(ErrorCode::kInvalidParams, "rate window must span at least two samples");
    }
    const auto n = static_cast<std::size_t>(std::llround(window / sample_period)) + 1;
    buffer_.assign(n, 0.0);
}

void RateTracker::reset() {
    head_ = 0;
    count_ = 0;
}

void RateTracker::push(double value) {
    buffer_[head_] = value;
    head_ = (head_ + 1) % buffer_.size();
    if (count_ < buffer_.size()) {
        ++count_;
    }
}

double RateTracker::slope() const {
    std::vector<double> ordered(count_);
    const std::size_t cap = buffer_.size();
    const std::size_t start = (head_ + cap - count_) % cap;
    for (std::size_t i = 0; i < count_; ++i) {
        ordered[i] = buffer_[(start + i) % cap];
    }
    return ls_slope(ordered.data(), ordered.size(), period_);
}

}  // namespace gfc
