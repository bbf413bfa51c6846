#pragma once

// Closed-loop GFC controllers used by the scenario runner: the classical
// cascaded droop controller, the same controller with a current-triggered
// active-power setpoint reduction, and a base for controllers that replace
// the inner AC voltage/current loops.

#include "gfcsim/control.hpp"
#include "gfcsim/features.hpp"
#include "gfcsim/network.hpp"

#include <cstdint>
#include <random>

namespace gfc {

struct DroopOptions {
    // Take omega_ref and v_ref from the grid while connected to it.
    bool grid_handoff = true;
    double sample_period = 0.01;  // s, feature and telemetry sampling
    double rate_window = 0.1;     // s, ROCOF/ROCOV estimator window

    // Setpoint reduction: P_ref_eff = P_ref - gain * max(0, I_pu - threshold),
    // filtered with time constant tau.
    bool setpoint_limiter = false;
    double limiter_threshold = 0.9;
    double limiter_gain = 0.5;
    double limiter_tau = 0.05;

    // Exploration dither for data generation: a zero-mean Gaussian offset of
    // `excitation` p.u. of the voltage base per axis, redrawn every sample
    // period, is added to the applied switching voltage. The recorded
    // reference stays the controller's own.
    double excitation = 0.0;
    std::uint64_t excitation_seed = 0;
};

struct InnerLoopOutput {
    DQ0 v_star{};
    bool limiter_active = false;
    DQ0 y_v{};
    DQ0 y_i{};
};

// Builds the 18 ordered features from the rotated measurements.
FeatureVector assemble_features(const Measurements& meas, double omega, const DQ0& v_ref,
                                const DQ0& v_pcc, double rocof, double rocov);

class DroopController : public GfcController {
public:
    DroopController(ConverterParams params, ControlGains gains, DroopOptions options = {});

    void initialize(const OperatingPoint& op) override;
    ControlAction step(const GfcObservation& obs, double dt) override;
    GfcSample telemetry() const override { return sample_; }
    ControllerState controller_state() const override { return ctrl_; }

    const ConverterParams& params() const { return params_; }
    const ControlGains& gains() const { return gains_; }
    const FeatureVector& features() const { return features_; }
    double p_ref_effective() const { return p_ref_eff_; }

protected:
    // AC voltage control, current limitation and current control. The default
    // is the classical cascade.
    virtual InnerLoopOutput inner_loop(const Measurements& meas, const DQ0& v_ref,
                                       const FeatureVector& features, const ControlGains& gains,
                                       double dt);

private:
    ConverterParams params_;
    ControlGains gains_;
    DroopOptions options_;
    ControllerState ctrl_{};
    double p_ref_eff_{};
    RateTracker rocof_;
    RateTracker rocov_;
    double rocof_value_{};
    double rocov_value_{};
    FeatureVector features_{};
    GfcSample sample_{};
    std::mt19937_64 dither_rng_;
    DQ0 dither_{};
};

}  // namespace gfc
