#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace gfc {

inline constexpr std::size_t kFeatureCount = 18;

// Ordered PINN input features. The order is part of the record, dataset and
// model-file formats.
enum FeatureIndex : std::size_t {
    kFeatIdM = 0,  // output current, d axis (A)
    kFeatIqM,      // output current, q axis
    kFeatI0M,      // output current, zero sequence
    kFeatIsdM,     // switch-node current, d axis
    kFeatIsqM,
    kFeatIs0M,
    kFeatOmega,    // droop frequency (rad/s)
    kFeatVdM,      // filter capacitor voltage, d axis (V)
    kFeatVqM,
    kFeatV0M,
    kFeatVErr,     // droop voltage reference minus measured magnitude (V)
    kFeatVgd,      // point-of-coupling bus voltage, d axis (V)
    kFeatVgq,
    kFeatVg0,
    kFeatP,        // W
    kFeatQ,        // var
    kFeatRocof,    // Hz/s
    kFeatRocov,    // p.u./s
};

using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "i_d",  "i_q",  "i_0",  "is_d", "is_q", "is_0", "omega", "v_d",   "v_q",
    "v_0",  "v_err", "vg_d", "vg_q", "vg_0", "p",    "q",     "rocof", "rocov",
};

// Causal least-squares slope over the most recent samples of a uniformly
// sampled signal. Used online for the ROCOF and ROCOV features.
class RateTracker {
public:
    RateTracker(double sample_period = 0.01, double window = 0.1);

    void reset();
    void push(double value);
    // Slope per second over the buffered samples; 0 with fewer than two.
    double slope() const;
    std::size_t size() const { return count_; }

private:
    double period_;
    std::vector<double> buffer_;
    std::size_t head_{};
    std::size_t count_{};
};

// Least-squares slope of y over uniformly spaced samples y[first..last].
double ls_slope(const double* y, std::size_t n, double spacing);

}  // namespace gfc
