#include "gfcsim/controllers.hpp"

#include "gfcsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gfc {

FeatureVector assemble_features(const Measurements& meas, double omega, const DQ0& v_ref,
                                const DQ0& v_pcc, double rocof, double rocov) {
    FeatureVector x{};
    x[kFeatIdM] = meas.i_dq.d;
    x[kFeatIqM] = meas.i_dq.q;
    x[kFeatI0M] = meas.i_dq.zero;
    x[kFeatIsdM] = meas.i_s_dq.d;
    x[kFeatIsqM] = meas.i_s_dq.q;
    x[kFeatIs0M] = meas.i_s_dq.zero;
    x[kFeatOmega] = omega;
    x[kFeatVdM] = meas.v_dq.d;
    x[kFeatVqM] = meas.v_dq.q;
    x[kFeatV0M] = meas.v_dq.zero;
    x[kFeatVErr] = magnitude(v_ref) - magnitude(meas.v_dq);
    x[kFeatVgd] = v_pcc.d;
    x[kFeatVgq] = v_pcc.q;
    x[kFeatVg0] = v_pcc.zero;
    x[kFeatP] = meas.p;
    x[kFeatQ] = meas.q;
    x[kFeatRocof] = rocof;
    x[kFeatRocov] = rocov;
    return x;
}

DroopController::DroopController(ConverterParams params, ControlGains gains, DroopOptions options)
    : params_(params),
      gains_(gains),
      options_(options),
      p_ref_eff_(gains.p_ref),
      rocof_(options.sample_period, options.rate_window),
      rocov_(options.sample_period, options.rate_window),
      dither_rng_(options.excitation_seed) {
    params_.validate();
    gains_.validate();
    if (!(options_.excitation >= 0.0)) {
        throw Error(ErrorCode::kInvalidParams, "excitation must be non-negative");
    }
    if (options_.setpoint_limiter &&
        !(options_.limiter_threshold > 0.0 && options_.limiter_threshold < 1.2)) {
        throw Error(ErrorCode::kInvalidParams, "limiter threshold must lie in (0, 1.2) p.u.");
    }
}

void DroopController::initialize(const OperatingPoint& op) {
    ctrl_ = op.classic;
    ctrl_.theta = op.theta;
    p_ref_eff_ = gains_.p_ref;
    rocof_.reset();
    rocov_.reset();
    rocof_value_ = 0.0;
    rocov_value_ = 0.0;
    dither_rng_.seed(options_.excitation_seed);
    dither_ = DQ0{};
}

InnerLoopOutput DroopController::inner_loop(const Measurements& meas, const DQ0&,
                                            const FeatureVector&, const ControlGains& g, double dt) {
    const ClassicStep s = classic_controller_step(meas, ctrl_, g, params_, dt);
    return InnerLoopOutput{s.v_star_dq, s.limiter_active, s.next.y_v, s.next.y_i};
}

ControlAction DroopController::step(const GfcObservation& obs, double dt) {
    ControlGains g = gains_;
    if (options_.grid_handoff && obs.grid_connected) {
        g.omega_ref = obs.grid_omega;
        g.v_ref = obs.grid_voltage;
    }
    g.p_ref = p_ref_eff_;

    const double theta = ctrl_.theta;
    Measurements meas = measure(obs.plant, obs.i_out, theta, obs.modulation);
    const double omega = droop_frequency(meas.p, g);
    meas.omega = omega;
    const DQ0 v_ref = droop_voltage(meas.q, g);
    const double v_pu = magnitude(meas.v_dq) / g.voltage_base;

    if (obs.sample_tick) {
        rocof_.push(omega / (2.0 * std::numbers::pi));
        rocov_.push(v_pu);
        rocof_value_ = rocof_.slope();
        rocov_value_ = rocov_.slope();
    }
    features_ = assemble_features(meas, omega, v_ref, ab0_to_dq0(obs.v_pcc, theta), rocof_value_,
                                  rocov_value_);

    const InnerLoopOutput inner = inner_loop(meas, v_ref, features_, g, dt);
    const AlphaBeta0 v_s_ref = dq0_to_ab0(inner.v_star, theta);
    if (options_.excitation > 0.0 && obs.sample_tick) {
        std::normal_distribution<double> noise(0.0, options_.excitation * g.voltage_base);
        dither_.d = noise(dither_rng_);
        dither_.q = noise(dither_rng_);
    }
    ControlAction action;
    if (options_.excitation > 0.0) {
        DQ0 applied = inner.v_star;
        applied.d += dither_.d;
        applied.q += dither_.q;
        action.modulation = modulation(dq0_to_ab0(applied, theta), g.v_dc_ref);
    } else {
        action.modulation = modulation(v_s_ref, g.v_dc_ref);
    }
    action.omega = omega;
    action.i_dc_ref = dc_voltage_control(meas, meas.i_x, g, params_);
    action.dc_slope = -g.k_dc + params_.dc_conductance + meas.i_x / g.v_dc_ref;

    const double i_pu = magnitude(meas.i_s_dq) / params_.rated_peak_current();
    if (obs.sample_tick) {
        sample_.features = features_;
        sample_.v_s_ref = v_s_ref;
        sample_.theta = theta;
        sample_.v_dc = obs.plant.v_dc;
        sample_.i_dc = dc_source_current(obs.plant.i_tau, params_.dc_current_max);
        sample_.frequency = omega / (2.0 * std::numbers::pi);
        sample_.p_ref_effective = p_ref_eff_;
        sample_.i_switch_pu = i_pu;
        sample_.v_pu = v_pu;
        sample_.limiter_active = inner.limiter_active;
    }

    ctrl_.y_v = inner.y_v;
    ctrl_.y_i = inner.y_i;
    ctrl_.theta = theta + dt * omega;
    if (options_.setpoint_limiter) {
        const double target =
            gains_.p_ref - options_.limiter_gain * std::max(0.0, i_pu - options_.limiter_threshold);
        p_ref_eff_ += dt / options_.limiter_tau * (target - p_ref_eff_);
    }
    return action;
}

}  // namespace gfc
