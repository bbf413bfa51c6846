#pragma once

// Case-study orchestration: scenario timelines, controller selection, run
// metrics, training-data sweeps, controller comparisons and load bisection.

#include "gfcsim/controllers.hpp"
#include "gfcsim/network.hpp"
#include "gfcsim/pinn.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gfc {

enum class ControllerKind { kDroop, kRef11, kPinn };

// Accepts "droop", "ref11" and "pinn" (and the long forms "droop-classic",
// "droop-with-ref11-limiter"). Throws Error(kConfig).
ControllerKind parse_controller_kind(const std::string& name);
std::string controller_kind_name(ControllerKind kind);
// Label used in reports; the limiter baseline is marked as a reconstruction.
std::string controller_label(ControllerKind kind);

// Grid-connected start with CB1 closed and CB2-CB5 open, the GFCs coupled to
// the feeder at t_couple, and the microgrid islanded by opening CB1 at
// t_island.
std::vector<Event> default_timeline(double t_couple = 0.8, double t_island = 5.5);

struct ScenarioSpec {
    std::string id = "scenario";
    NetworkModel topology = default_feeder();
    std::vector<Event> events = default_timeline();
    ControllerKind controller = ControllerKind::kDroop;
    std::string model_path;  // PINN model file
    std::uint64_t seed{};
    SimOptions sim{};
    DroopOptions droop{};
    // Start of the post-disturbance metrics window.
    double disturbance_time = 5.5;

    // Throws Error(kConfig) if events are unsorted, outside the horizon or
    // refer to unknown elements.
    void validate() const;
};

// Default feeder and timeline with the microgrid load group at s_total.
ScenarioSpec case_scenario(double mg_load_va, double power_factor = 0.97);

ControllerFactory make_controller_factory(ControllerKind kind,
                                          std::shared_ptr<const PinnModel> model = nullptr,
                                          DroopOptions options = {});

// Runs the scenario with its own controller kind. A PINN scenario uses
// `model` if given, else loads spec.model_path.
RunRecord run_scenario(const ScenarioSpec& spec, std::shared_ptr<const PinnModel> model = nullptr);

// ---------------------------------------------------------------------------
// Metrics

struct RateSeries {
    std::vector<double> rocof;  // Hz/s
    std::vector<double> rocov;  // p.u./s
};

// Least-squares slope of y over a centered window of `window` seconds at every
// sample; the window is truncated at the record ends. Throws
// Error(kRecordTooShort) if the window spans fewer than two samples or the
// series is shorter than two samples.
std::vector<double> centered_slope(const std::vector<double>& y, double sample_period, double window);

RateSeries rocof_rocov(const std::vector<double>& frequency_hz, const std::vector<double>& voltage_pu,
                       double sample_period, double window = 0.1);
RateSeries rocof_rocov(const RunRecord& record, std::size_t gfc, double window = 0.1);

struct MetricsOptions {
    double disturbance_time = 5.5;
    double final_window = 1.0;       // s, end-of-run averaging window
    double rate_window = 0.1;        // s
    double voltage_tolerance = 0.05; // p.u., stability threshold
};

struct GfcMetrics {
    std::string gfc;
    double frequency_nadir{};          // Hz, after the disturbance
    double final_frequency{};          // Hz, mean over the final window
    double peak_rocof{};               // Hz/s
    double peak_rocov{};               // p.u./s
    double peak_voltage_deviation{};   // p.u., max |v - 1| after the disturbance
    double final_voltage_deviation{};  // p.u., max |v - 1| over the final window
    double mean_power{};               // p.u., mean P over the final window
    double setpoint_drift{};           // p.u., |mean effective P_ref - P_ref|
    double peak_switch_current{};      // p.u. of rated peak current
    double peak_dc_current{};          // A, after saturation
    double final_dc_current{};         // A, mean over the final window
    bool stable = false;
};

struct MetricsReport {
    std::string scenario_id;
    std::string controller;
    bool diverged = false;
    double divergence_time{};
    std::vector<GfcMetrics> gfcs;
    // Worst value of every metric over the GFCs.
    GfcMetrics worst;
    bool stable = false;
};

// Deterministic function of the record. Quantities are NaN where the run
// ended before the window they need.
MetricsReport extract_metrics(const RunRecord& record, const MetricsOptions& options = {});

std::vector<std::string> metrics_csv_header();
// One row per GFC plus a "worst" row.
std::vector<std::vector<std::string>> metrics_csv_rows(const MetricsReport& report);
void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::string& path);

// ---------------------------------------------------------------------------
// Training data

struct SweepConfig {
    std::size_t runs = 50;
    std::uint64_t seed = 1;
    NetworkModel topology = default_feeder();
    std::vector<Event> events = default_timeline();
    SimOptions sim{};
    DroopOptions droop{};
    std::string mg_group = "mg";
    double mg_capacity = 6e6;          // VA
    double mg_fraction_min = 0.1;
    double mg_fraction_max = 1.0;
    double mg_power_factor = 0.97;
    double local_capacity = 1.5e6;     // VA per GFC
    double local_fraction_min = 0.0;
    double local_fraction_max = 0.9;
    double local_power_factor = 1.0;
    // Exploration dither of the teacher, p.u. of the voltage base.
    double excitation = 0.02;
    unsigned workers = 0;              // 0: hardware concurrency

    void validate() const;
};

struct SweepDraw {
    std::string scenario_id;
    double mg_load{};                  // VA
    std::vector<double> local_loads;   // VA, one per GFC
    std::uint64_t excitation_seed{};
};

// The load draws of a sweep, fixed by its seed.
std::vector<SweepDraw> draw_sweep(const SweepConfig& cfg);

struct SweepRun {
    SweepDraw draw;
    bool diverged = false;
    double divergence_time{};
    std::string divergence_reason;
};

struct Dataset {
    TrainingSet set;
    std::vector<SweepRun> runs;
    std::uint64_t seed{};
    double excitation{};
};

// Runs the timeline under classic droop for every draw. Diverged runs are
// listed but contribute no trajectories. Throws Error(kAllRunsDiverged).
Dataset generate_dataset(const SweepConfig& cfg,
                         const std::function<void(const SweepRun&)>& progress = {});

// One trajectory per GFC of a record.
std::vector<Trajectory> record_trajectories(const RunRecord& record);

// Directory layout: manifest.json and trajectories.csv.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Comparison and load search

struct ComparisonEntry {
    ControllerKind kind{};
    RunRecord record;
    MetricsReport metrics;
};

struct ComparisonDelta {
    std::string label;  // "<controller>-<baseline>"
    double frequency{};          // Hz, final frequency
    double power{};              // p.u., mean power
    double peak_deviation{};     // p.u.
    double peak_rocof{};         // Hz/s
    double setpoint_drift{};     // p.u.
};

struct Comparison {
    std::vector<ComparisonEntry> entries;
    // Each controller against the first, on worst-GFC metrics.
    std::vector<ComparisonDelta> deltas;
};

Comparison compare(const ScenarioSpec& spec, const std::vector<ControllerKind>& kinds,
                   std::shared_ptr<const PinnModel> model = nullptr,
                   const MetricsOptions& options = {});
void write_comparison_csv(const Comparison& cmp, const std::string& path);

struct BoundarySearch {
    double stable_load{};
    double unstable_load{};
    std::vector<std::pair<double, bool>> trials;  // (load, stable)
};

// Bisects [lo, hi] for the load where `stable_at` turns false, assuming
// stable_at(lo) and !stable_at(hi) (both are checked). Stops when
// (unstable - stable) <= rel_tol * stable. Throws Error(kConfig) if the
// bracket is invalid.
BoundarySearch bisect_stability(const std::function<bool(double)>& stable_at, double lo, double hi,
                                double rel_tol);

}  // namespace gfc
