#include "gfcsim/converter.hpp"

#include "gfcsim/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace gfc {

double ConverterParams::nominal_phase_peak() const {
    return nominal_voltage_ll_rms * std::sqrt(2.0 / 3.0);
}

double ConverterParams::rated_peak_current() const {
    return rated_power / (1.5 * nominal_phase_peak());
}

double ConverterParams::nominal_omega() const { return 2.0 * std::numbers::pi * nominal_frequency; }

void ConverterParams::validate() const {
    auto require = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw Error(ErrorCode::kInvalidParams,
                        std::string("converter parameter '") + name + "' must be positive");
        }
    };
    require(dc_capacitance, "dc_capacitance");
    require(dc_conductance, "dc_conductance");
    require(filter_inductance, "filter_inductance");
    require(filter_capacitance, "filter_capacitance");
    require(filter_resistance, "filter_resistance");
    require(dc_time_constant, "dc_time_constant");
    require(dc_current_max, "dc_current_max");
    require(ac_current_max, "ac_current_max");
    require(dc_voltage_ref, "dc_voltage_ref");
    require(rated_power, "rated_power");
    require(nominal_frequency, "nominal_frequency");
    require(nominal_voltage_ll_rms, "nominal_voltage_ll_rms");
    if (n_modules < 1) {
        throw Error(ErrorCode::kInvalidParams, "converter parameter 'n_modules' must be >= 1");
    }
}

double dc_source_current(double i_tau, double i_max) {
    if (std::abs(i_tau) < i_max) {
        return i_tau;
    }
    return std::copysign(i_max, i_tau);
}

double switch_dc_current(const AlphaBeta0& m, const AlphaBeta0& i_s) {
    // 3/2 * (1/2) m^T i_s on alpha-beta; the zero sequence carries 3 v0 i0.
    return 0.75 * (m.alpha * i_s.alpha + m.beta * i_s.beta) + 1.5 * m.zero * i_s.zero;
}

AlphaBeta0 switch_voltage(const AlphaBeta0& m, double v_dc) { return 0.5 * v_dc * m; }

ConverterState converter_derivative(const ConverterState& x, const ConverterInputs& u,
                                    const ConverterParams& p) {
    const AlphaBeta0 v_s = switch_voltage(u.modulation, x.v_dc);
    const double i_x = switch_dc_current(u.modulation, x.i_switch);
    const double i_d = dc_source_current(x.i_tau, p.dc_current_max);

    ConverterState dx;
    dx.v_dc = (i_d - p.dc_conductance * x.v_dc - i_x) / p.dc_capacitance;
    dx.i_switch = (1.0 / p.filter_inductance) *
                  (v_s - p.filter_resistance * x.i_switch - x.v_filter);
    dx.v_filter = (1.0 / p.filter_capacitance) * (x.i_switch - u.i_out);
    dx.i_tau = (u.i_dc_ref - x.i_tau) / p.dc_time_constant;

    if (!std::isfinite(dx.v_dc) || !std::isfinite(dx.i_tau) || !is_finite(dx.i_switch) ||
        !is_finite(dx.v_filter)) {
        throw Error(ErrorCode::kNonFiniteState, "converter derivative is not finite");
    }
    return dx;
}

AlphaBeta0 aggregate_output(const AlphaBeta0& i_module, int n_modules) {
    return static_cast<double>(n_modules) * i_module;
}

}  // namespace gfc
