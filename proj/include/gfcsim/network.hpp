#pragma once

// Multi-bus microgrid in the alpha-beta-0 frame and the fixed-step engine
// that couples it to the converter modules and their controllers.
//
// The network is a set of series RL elements (lines, loads, the grid source
// impedance). Voltage nodes are ground, the grid EMF and every GFC filter
// capacitor; all other buses are solved algebraically from Kirchhoff's
// current law, so the only network states are inductor currents.

#include "gfcsim/control.hpp"
#include "gfcsim/converter.hpp"
#include "gfcsim/features.hpp"
#include "gfcsim/frames.hpp"

#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gfc {

struct BranchSpec {
    std::string id;
    std::string from;
    std::string to;
    double resistance{};  // ohm
    double inductance{};  // H
};

// Constant-impedance load between a bus and ground. Loads in a group share the
// group's total apparent power according to their share.
struct LoadSpec {
    std::string id;
    std::string bus;
    double apparent_power{};  // VA at nominal voltage
    double power_factor = 1.0;
    bool connected = true;
    std::string group;
    double share{};
};

struct BreakerSpec {
    std::string id;
    std::string branch;
    bool closed = true;
};

// Ideal three-phase source behind a series impedance.
struct GridSpec {
    bool enabled = true;
    std::string bus;
    double voltage_ll_rms = 1000.0;
    double frequency = 50.0;
    double phase{};
    double resistance = 0.01;
    double inductance = 0.05e-3;

    double phase_peak() const;
    double omega() const;
};

struct GfcSpec {
    std::string id;
    std::string bus;         // filter capacitor node
    std::string pcc_bus;     // feeder-side bus of the coupling branch
    std::string local_load;  // id of the load attached at `bus`
};

struct NetworkModel {
    std::vector<std::string> buses;
    std::vector<BranchSpec> branches;
    std::vector<LoadSpec> loads;
    std::vector<BreakerSpec> breakers;
    GridSpec grid;
    std::vector<GfcSpec> gfcs;
    ConverterParams converter;
    ControlGains gains;

    // Throws Error(kConfig) describing the first inconsistency found.
    void validate() const;

    const LoadSpec* find_load(const std::string& id) const;
    const BreakerSpec* find_breaker(const std::string& id) const;
};

// Four-GFC feeder loosely following the IEEE 13-bus layout at 1 kV.
NetworkModel default_feeder();

struct SeriesRL {
    double resistance{};
    double inductance{};
};

// Series RL drawing `s` at `pf` when fed with the nominal voltage and
// frequency. Throws Error(kInvalidLoad).
SeriesRL load_admittance(double s, double pf, double v_nom_ll_rms, double f_nom);

NetworkModel apply_breaker(NetworkModel model, const std::string& breaker_id, bool closed);
NetworkModel set_load(NetworkModel model, const std::string& load_id, double s, double pf);
NetworkModel set_load_connected(NetworkModel model, const std::string& load_id, bool connected);
// Distributes `s_total` over the loads of `group` by share. Throws
// Error(kConfig) if the group is empty.
NetworkModel set_group_load(NetworkModel model, const std::string& group, double s_total, double pf);
double group_load(const NetworkModel& model, const std::string& group);

// Compiled view of the network for one breaker/load configuration. Maps the
// inductor currents and the voltage-node values linearly to current
// derivatives, bus voltages and GFC output currents.
class NetworkSolver {
public:
    // Throws Error(kSingularNetwork) if an energized sub-network has no
    // voltage source.
    explicit NetworkSolver(const NetworkModel& model);

    std::size_t element_count() const { return elements_.size(); }
    std::size_t gfc_count() const { return gfc_nodes_.size(); }
    std::size_t bus_count() const { return node_names_.size(); }

    // Voltage-node values are ordered [grid EMF, GFC 1..n].
    std::size_t known_count() const { return 1 + gfc_nodes_.size(); }

    // currents/dcurrents: element_count() x 3 (alpha, beta, zero), row-major.
    void derivative(const double* currents, const AlphaBeta0* known, double* dcurrents) const;
    // Aggregate current leaving each GFC capacitor node.
    void gfc_output_currents(const double* currents, const AlphaBeta0* known,
                             AlphaBeta0* out) const;
    AlphaBeta0 bus_voltage(std::size_t node, const double* currents, const AlphaBeta0* known) const;
    // Current of every element, including algebraic (purely resistive) ones.
    AlphaBeta0 element_current(std::size_t element, const double* currents,
                               const AlphaBeta0* known) const;

    // Zeroes inactive elements and projects the remaining inductor currents
    // onto the Kirchhoff-consistent set with the least magnetic-energy change.
    void project_kcl(double* currents) const;

    std::optional<std::size_t> node_index(const std::string& bus) const;
    std::size_t gfc_pcc_node(std::size_t gfc) const { return pcc_nodes_[gfc]; }
    bool gfc_grid_connected(std::size_t gfc) const { return gfc_grid_connected_[gfc]; }
    bool element_active(std::size_t e) const { return elements_[e].active; }
    bool element_inductive(std::size_t e) const {
        return elements_[e].active && elements_[e].inductance > 0.0;
    }
    // Non-ground end of an element.
    std::size_t element_node(std::size_t e) const {
        return elements_[e].from != 0 ? elements_[e].from : elements_[e].to;
    }

    struct PowerBalance {
        double injected{};  // grid EMF + GFC capacitor nodes
        double loads{};
        double losses{};    // I^2 R in lines and the grid impedance
    };
    PowerBalance power_balance(const double* currents, const AlphaBeta0* known) const;

    // Sinusoidal steady state at `omega` for the given voltage-node phasors
    // (space-vector convention x_alpha + j x_beta = X e^{j omega t}).
    struct Phasors {
        std::vector<std::complex<double>> nodes;     // per bus
        std::vector<std::complex<double>> elements;  // per element
        std::vector<std::complex<double>> gfc_out;   // aggregate per GFC
    };
    Phasors solve_phasors(double omega, const std::vector<std::complex<double>>& known) const;

    // Connected component id of each node over active elements (ground excluded).
    const std::vector<int>& components() const { return component_; }
    std::size_t grid_node() const { return grid_node_; }
    std::size_t gfc_node(std::size_t g) const { return gfc_nodes_[g]; }

private:
    enum class ElementKind { kBranch, kLoad, kGrid };
    struct Element {
        ElementKind kind;
        std::size_t from;
        std::size_t to;
        double resistance;
        double inductance;
        bool active;
    };

    bool is_known(std::size_t node) const { return known_slot_[node] >= 0; }

    std::vector<std::string> node_names_;
    std::vector<Element> elements_;
    std::vector<int> known_slot_;  // -1 for internal nodes; ground uses -2
    std::vector<std::size_t> gfc_nodes_;
    std::vector<std::size_t> pcc_nodes_;
    std::vector<bool> gfc_grid_connected_;
    std::vector<int> component_;
    std::size_t grid_node_{};

    // Row-major dense maps.
    std::size_t n_el_{};
    std::size_t n_known_{};
    std::vector<double> a_ii_;     // n_el x n_el
    std::vector<double> a_iv_;     // n_el x n_known
    std::vector<double> node_i_;   // n_nodes x n_el
    std::vector<double> node_v_;   // n_nodes x n_known
    std::vector<double> out_i_;    // n_gfc x n_el
    std::vector<double> out_v_;    // n_gfc x n_known
    std::vector<std::size_t> kcl_nodes_;  // internal nodes whose KCL involves inductors only
    std::vector<double> projection_;      // n_el x n_el, column-major; empty if identity
};

// ---------------------------------------------------------------------------
// Closed-loop simulation

struct GfcObservation {
    double time{};
    ConverterState plant{};
    AlphaBeta0 i_out{};       // per module
    AlphaBeta0 v_pcc{};
    AlphaBeta0 modulation{};  // modulation applied at this instant
    bool grid_connected = false;
    double grid_omega{};
    double grid_voltage{};    // phase peak
    bool sample_tick = false; // recording instant
};

// The modulation is held in the controller's rotating frame: over the step
// it rotates at `omega` from its value at the step start. The DC current
// reference follows the DC voltage within the step with slope dc_slope
// (d i_dc_ref / d v_dc), so the DC voltage law acts on the live voltage.
struct ControlAction {
    AlphaBeta0 modulation{};
    double omega{};
    double i_dc_ref{};
    double dc_slope{};
};

// One recorded sample of a GFC.
struct GfcSample {
    FeatureVector features{};
    AlphaBeta0 v_s_ref{};         // switching voltage reference, alpha-beta
    double theta{};
    double v_dc{};
    double i_dc{};                // DC source current after saturation
    double frequency{};           // Hz
    double p_ref_effective{};     // p.u.
    double i_switch_pu{};         // |i_s,dq| over rated peak current
    double v_pu{};                // |v_dq| over nominal phase peak
    bool limiter_active = false;
};

// Steady operating point handed to a controller at initialization.
struct OperatingPoint {
    double theta{};
    double omega{};
    ControllerState classic{};
    AlphaBeta0 modulation{};
};

class GfcController {
public:
    virtual ~GfcController() = default;
    virtual void initialize(const OperatingPoint& op) = 0;
    // Called once per integration step with the state at the step start; the
    // returned action is held over the step.
    virtual ControlAction step(const GfcObservation& obs, double dt) = 0;
    // Telemetry of the most recent step.
    virtual GfcSample telemetry() const = 0;
    virtual ControllerState controller_state() const = 0;
};

struct SystemState {
    std::vector<ConverterState> converters;
    std::vector<double> currents;  // element_count() x 3
    double time{};
};

struct Event {
    enum class Kind { kBreaker, kLoad, kLoadGroup, kLoadConnect };
    double time{};
    Kind kind = Kind::kBreaker;
    std::string target;
    bool closed = true;          // breaker / connect state
    double apparent_power{};     // load, load group
    double power_factor = 1.0;
};

struct SimOptions {
    double dt = 20e-6;
    double sample_period = 0.01;
    double horizon = 9.0;
    bool steady_start = true;
};

struct RunRecord {
    std::string scenario_id;
    std::vector<std::string> gfc_names;
    std::vector<double> time;
    std::vector<std::vector<GfcSample>> samples;  // [gfc][sample]
    bool diverged = false;
    double divergence_time = std::numeric_limits<double>::quiet_NaN();
    std::string divergence_reason;
    double rated_power{};
    double nominal_frequency{};
    double p_ref_nominal{};
};

// Integrates the system over fixed steps. Owns the plant, network and
// controllers of one scenario.
class Simulator {
public:
    Simulator(NetworkModel model, std::vector<std::unique_ptr<GfcController>> controllers,
              SimOptions options);

    // Places every island at its sinusoidal steady state (or a flat start)
    // and initializes the controllers from it.
    void initialize();

    // One RK4 step: control() followed by integrate().
    void step();
    // Samples every controller at the current state.
    void control();
    // Advances the plant and network by dt with the held control actions.
    // Throws Error(kNonFiniteState) on a non-finite state or a collapsed DC
    // link; the state is left at the start of the failing step.
    void integrate();

    void apply_event(const Event& ev);

    const SystemState& state() const { return state_; }
    SystemState& mutable_state() { return state_; }
    const NetworkModel& model() const { return model_; }
    const NetworkSolver& solver() const { return *solver_; }
    const GfcController& controller(std::size_t g) const { return *controllers_[g]; }
    std::size_t step_index() const { return step_index_; }
    double dt() const { return options_.dt; }

    // Voltage-node values at the current state.
    std::vector<AlphaBeta0> known_voltages() const;
    GfcObservation observe(std::size_t g) const;

    // Recorded telemetry of the last step for GFC g, with plant quantities.
    GfcSample sample(std::size_t g) const;

private:
    void rebuild_solver(bool project);
    AlphaBeta0 grid_emf(double t) const;
    void evaluate(double t, const std::vector<double>& x, std::vector<double>& dx) const;
    void pack(std::vector<double>& x) const;
    void unpack(const std::vector<double>& x);

    NetworkModel model_;
    std::vector<std::unique_ptr<GfcController>> controllers_;
    SimOptions options_;
    std::unique_ptr<NetworkSolver> solver_;
    SystemState state_;
    std::vector<ControlAction> actions_;
    std::vector<double> action_v_dc_;
    std::size_t step_index_{};
    std::size_t samples_per_tick_{};
    double action_time_{};

    mutable std::vector<AlphaBeta0> scratch_known_;
    mutable std::vector<AlphaBeta0> scratch_out_;
    std::vector<double> x0_, k1_, k2_, k3_, k4_, xs_;
};

using ControllerFactory =
    std::function<std::vector<std::unique_ptr<GfcController>>(const NetworkModel&)>;

// Runs a timeline of events over the horizon, sampling every
// options.sample_period. Divergence stops the run and is reported in the
// record together with the partial trace.
RunRecord simulate(const NetworkModel& model, const std::vector<Event>& events,
                   const ControllerFactory& make_controllers, const SimOptions& options,
                   const std::string& scenario_id = "");

// CSV export: time, per-GFC blocks of the 18 features followed by
// vs_alpha_ref, vs_beta_ref, v_dc, i_dc, f, and a trailing diverged flag.
std::vector<std::string> record_csv_header(const RunRecord& record);
void write_record_csv(const RunRecord& record, const std::string& path);

}  // namespace gfc
