#pragma once

// Averaged model of one grid-forming converter module: DC link fed by a
// rate-limited, saturating DC source, full-bridge averaged switching stage
// and an LC output filter, all in alpha-beta-0 coordinates.

#include "gfcsim/frames.hpp"

namespace gfc {

// Electrical constants of a single converter module. Currents and powers are
// per module; the network sees n_modules modules in parallel.
struct ConverterParams {
    double dc_capacitance = 0.008;        // F
    double dc_conductance = 0.83e-3;      // S, DC-side losses
    double filter_inductance = 200e-6;    // H
    double filter_capacitance = 300e-6;   // F
    double filter_resistance = 0.001;     // ohm
    double dc_time_constant = 0.05;       // s
    double dc_current_max = 245.9;        // A, 1.2 p.u. of the module DC base
    double ac_current_max = 489.898;      // A, 1.2 x rated peak AC current
    int n_modules = 3;
    double dc_voltage_ref = 2440.0;       // V
    double rated_power = 500e3;           // VA
    double nominal_frequency = 50.0;      // Hz
    double nominal_voltage_ll_rms = 1000; // V

    // Peak phase voltage at nominal line-line RMS voltage.
    double nominal_phase_peak() const;
    // Peak phase current at rated power and nominal voltage.
    double rated_peak_current() const;
    double nominal_omega() const;

    // Throws Error(kInvalidParams) on non-positive constants.
    void validate() const;
};

struct ConverterState {
    double v_dc{};             // DC link voltage
    double i_tau{};            // DC source internal (lagged) current
    AlphaBeta0 i_switch{};     // switch-node (filter inductor) current
    AlphaBeta0 v_filter{};     // filter capacitor voltage = converter output voltage
};

struct ConverterInputs {
    AlphaBeta0 modulation{};
    double i_dc_ref{};
    AlphaBeta0 i_out{};        // per-module current drawn by the network
};

// Hard clamp of the DC source current to +-i_max.
double dc_source_current(double i_tau, double i_max);

// DC current drawn by the switching stage. Carries the three-phase factor so
// that v_dc * i_x equals the AC power at the switch node.
double switch_dc_current(const AlphaBeta0& modulation, const AlphaBeta0& i_switch);

// Switch-node voltage v_s = m v_dc / 2.
AlphaBeta0 switch_voltage(const AlphaBeta0& modulation, double v_dc);

// Time derivative of the module state. Throws Error(kNonFiniteState) if any
// component is not finite.
ConverterState converter_derivative(const ConverterState& state, const ConverterInputs& inputs,
                                    const ConverterParams& params);

AlphaBeta0 aggregate_output(const AlphaBeta0& i_module, int n_modules);

}  // namespace gfc
