#include "gfcsim/control.hpp"

#include "gfcsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gfc {

void ControlGains::validate() const {
    const double values[] = {k_dc, k_vp, k_vi, k_ip, k_ii, droop_p, droop_q, p_ref,
                             y_v_limit, y_i_limit};
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error(ErrorCode::kInvalidParams, "control gains must be finite and non-negative");
        }
    }
    if (!(omega_ref > 0.0) || !(v_ref > 0.0) || !(v_dc_ref > 0.0) || !(power_base > 0.0) ||
        !(voltage_base > 0.0)) {
        throw Error(ErrorCode::kInvalidParams,
                    "omega_ref, v_ref, v_dc_ref and the power/voltage bases must be positive");
    }
}

ControlGains default_gains(const ConverterParams& params) {
    ControlGains g;
    g.droop_p = 2.0 * std::numbers::pi * 0.05;
    // 1.5 x the frequency droop, both taken per unit of nominal frequency.
    g.droop_q = 1.5 * g.droop_p / params.nominal_omega();
    g.omega_ref = params.nominal_omega();
    g.v_ref = params.nominal_phase_peak();
    g.v_dc_ref = params.dc_voltage_ref;
    g.power_base = params.rated_power;
    g.voltage_base = params.nominal_phase_peak();
    g.y_v_limit = params.ac_current_max / g.k_vi;
    g.y_i_limit = 0.5 * params.dc_voltage_ref / g.k_ii;
    return g;
}

Measurements measure(const ConverterState& state, const AlphaBeta0& i_out, double theta,
                     const AlphaBeta0& m) {
    Measurements meas;
    meas.v_dq = ab0_to_dq0(state.v_filter, theta);
    meas.i_dq = ab0_to_dq0(i_out, theta);
    meas.i_s_dq = ab0_to_dq0(state.i_switch, theta);
    meas.v_dc = state.v_dc;
    meas.i_x = switch_dc_current(m, state.i_switch);
    const PowerPQ pq = instantaneous_pq(state.v_filter, i_out);
    meas.p = pq.p;
    meas.q = pq.q;
    return meas;
}

double droop_frequency(double p, const ControlGains& g) {
    return g.omega_ref + g.droop_p * (g.p_ref - p / g.power_base);
}

DQ0 droop_voltage(double q, const ControlGains& g) {
    return DQ0{g.v_ref - g.droop_q * (q / g.power_base) * g.voltage_base, 0.0, 0.0};
}

double dc_voltage_control(const Measurements& meas, double i_x, const ControlGains& g,
                          const ConverterParams& params) {
    const double v_ref = g.v_dc_ref;
    return g.k_dc * (v_ref - meas.v_dc) + g.p_ref * g.power_base / v_ref +
           params.dc_conductance * meas.v_dc + (meas.v_dc * i_x - meas.p) / v_ref;
}

DQ0 ac_voltage_control(const DQ0& v_dq_ref, const Measurements& meas, const ControllerState& ctrl,
                       const ControlGains& g, const ConverterParams& params) {
    const double c_omega = params.filter_capacitance * meas.omega;
    return meas.i_dq + c_omega * rotate90(meas.v_dq) + g.k_vp * (v_dq_ref - meas.v_dq) +
           g.k_vi * ctrl.y_v;
}

CurrentLimit limit_current(const DQ0& i_star, const DQ0& i_s_m, double i_ac_max) {
    CurrentLimit out;
    if (magnitude(i_s_m) <= i_ac_max) {
        out.i_lim = i_star;
        return out;
    }
    out.active = true;
    const double norm = magnitude(i_star);
    if (norm == 0.0) {
        out.degenerate = true;
        return out;
    }
    out.i_lim = (i_ac_max / norm) * i_star;
    return out;
}

DQ0 ac_current_control(const DQ0& i_lim, const Measurements& meas, const ControllerState& ctrl,
                       const ControlGains& g, const ConverterParams& params) {
    const double l_omega = params.filter_inductance * meas.omega;
    const DQ0 z_i = l_omega * rotate90(meas.i_s_dq) + params.filter_resistance * meas.i_s_dq;
    return meas.v_dq + z_i + g.k_ip * (i_lim - meas.i_s_dq) + g.k_ii * ctrl.y_i;
}

AlphaBeta0 modulation(const AlphaBeta0& v_s_ab_ref, double v_dc_ref) {
    return (2.0 / v_dc_ref) * v_s_ab_ref;
}

namespace {

DQ0 clamp(const DQ0& x, double limit) {
    if (limit <= 0.0) {
        return x;
    }
    return DQ0{std::clamp(x.d, -limit, limit), std::clamp(x.q, -limit, limit),
               std::clamp(x.zero, -limit, limit), x.theta};
}

}  // namespace

ClassicStep classic_controller_step(const Measurements& meas_in, const ControllerState& ctrl,
                                    const ControlGains& g, const ConverterParams& params,
                                    double dt) {
    if (!(dt > 0.0)) {
        throw Error(ErrorCode::kInvalidParams, "controller step requires dt > 0");
    }
    ClassicStep out;
    Measurements meas = meas_in;
    out.omega = droop_frequency(meas.p, g);
    meas.omega = out.omega;
    out.v_dq_ref = droop_voltage(meas.q, g);

    const DQ0 i_star = ac_voltage_control(out.v_dq_ref, meas, ctrl, g, params);
    const CurrentLimit lim = limit_current(i_star, meas.i_s_dq, params.ac_current_max);
    out.limiter_active = lim.active;
    out.degenerate_reference = lim.degenerate;
    out.v_star_dq = ac_current_control(lim.i_lim, meas, ctrl, g, params);

    out.v_s_ab_ref = dq0_to_ab0(out.v_star_dq, ctrl.theta);
    out.modulation = modulation(out.v_s_ab_ref, g.v_dc_ref);
    out.i_dc_ref = dc_voltage_control(meas, meas.i_x, g, params);

    out.next = ctrl;
    if (!(g.anti_windup && lim.active)) {
        out.next.y_v = clamp(ctrl.y_v + dt * (out.v_dq_ref - meas.v_dq), g.y_v_limit);
    }
    out.next.y_i = clamp(ctrl.y_i + dt * (lim.i_lim - meas.i_s_dq), g.y_i_limit);
    out.next.theta = ctrl.theta + dt * out.omega;
    return out;
}

}  // namespace gfc
