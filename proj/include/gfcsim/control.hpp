#pragma once

// Classical cascaded grid-forming control: DC voltage control, P/f and Q/V
// droop, AC voltage PI, AC current limitation, AC current PI and modulation.
// All AC control runs in the dq frame rotating with the droop angle.

#include "gfcsim/converter.hpp"
#include "gfcsim/frames.hpp"

namespace gfc {

struct ControlGains {
    double k_dc = 1.6e3;      // A/V
    double k_vp = 0.52;       // A/V
    double k_vi = 3.48;       // A/(V s)
    double k_ip = 1.48;       // V/A
    double k_ii = 0.4;        // V/(A s)
    double droop_p = 0.0;     // rad/s per p.u. active power (d_g)
    double droop_q = 0.0;     // p.u. voltage per p.u. reactive power (n_q)
    double omega_ref = 0.0;   // rad/s
    double p_ref = 0.3;       // p.u. of power_base
    double v_ref = 0.0;       // V, reference dq voltage magnitude
    double v_dc_ref = 2440.0; // V
    double power_base = 0.0;  // VA per module
    double voltage_base = 0.0;  // V, nominal phase peak
    bool anti_windup = true;
    double y_v_limit = 0.0;   // V s, symmetric clamp on the voltage integrator
    double y_i_limit = 0.0;   // A s, symmetric clamp on the current integrator

    void validate() const;
};

// Gains of the reference design scaled to a converter module.
ControlGains default_gains(const ConverterParams& params);

struct ControllerState {
    DQ0 y_v{};        // AC voltage integrator
    DQ0 y_i{};        // AC current integrator
    double theta{};   // droop angle
};

struct Measurements {
    DQ0 v_dq{};       // filter capacitor voltage
    DQ0 i_dq{};       // output current after the filter
    DQ0 i_s_dq{};     // switch-node current
    double v_dc{};
    double i_x{};     // DC current drawn by the switching stage
    double p{};       // W, module output
    double q{};       // var, module output
    double omega{};   // rad/s, used by the decoupling feed-forwards
};

// Rotates the module quantities into the frame at theta and evaluates P, Q.
Measurements measure(const ConverterState& state, const AlphaBeta0& i_out, double theta,
                     const AlphaBeta0& modulation);

double droop_frequency(double p, const ControlGains& gains);
DQ0 droop_voltage(double q, const ControlGains& gains);

double dc_voltage_control(const Measurements& meas, double i_x, const ControlGains& gains,
                          const ConverterParams& params);

DQ0 ac_voltage_control(const DQ0& v_dq_ref, const Measurements& meas, const ControllerState& ctrl,
                       const ControlGains& gains, const ConverterParams& params);

struct CurrentLimit {
    DQ0 i_lim{};
    bool active = false;
    bool degenerate = false;  // limiting branch hit with a zero reference
};

CurrentLimit limit_current(const DQ0& i_s_star, const DQ0& i_s_dq_m, double i_ac_max);

DQ0 ac_current_control(const DQ0& i_s_lim, const Measurements& meas, const ControllerState& ctrl,
                       const ControlGains& gains, const ConverterParams& params);

AlphaBeta0 modulation(const AlphaBeta0& v_s_ab_ref, double v_dc_ref);

struct ClassicStep {
    AlphaBeta0 modulation{};
    double i_dc_ref{};
    AlphaBeta0 v_s_ab_ref{};
    DQ0 v_star_dq{};
    DQ0 v_dq_ref{};
    double omega{};
    bool limiter_active = false;
    bool degenerate_reference = false;
    ControllerState next{};
};

// One sample of the full cascade. Integrators and the droop angle are
// advanced by dt with the rates evaluated at this sample.
ClassicStep classic_controller_step(const Measurements& meas, const ControllerState& ctrl,
                                    const ControlGains& gains, const ConverterParams& params,
                                    double dt);

}  // namespace gfc
