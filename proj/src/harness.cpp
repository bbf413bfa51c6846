#include "gfcsim/harness.hpp"

#include "gfcsim/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace gfc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

ControllerKind parse_controller_kind(const std::string& name) {
    if (name == "droop" || name == "droop-classic") {
        return ControllerKind::kDroop;
    }
    if (name == "ref11" || name == "droop-with-ref11-limiter") {
        return ControllerKind::kRef11;
    }
    if (name == "pinn") {
        return ControllerKind::kPinn;
    }
    throw Error(ErrorCode::kConfig, "unknown controller '" + name + "' (expected droop, ref11 or pinn)");
}

std::string controller_kind_name(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::kDroop:
            return "droop";
        case ControllerKind::kRef11:
            return "ref11";
        case ControllerKind::kPinn:
            return "pinn";
    }
    return "unknown";
}

std::string controller_label(ControllerKind kind) {
    return kind == ControllerKind::kRef11 ? "ref11-limiter (reconstruction)" : controller_kind_name(kind);
}

std::vector<Event> default_timeline(double t_couple, double t_island) {
    std::vector<Event> ev;
    for (const char* cb : {"CB2", "CB3", "CB4", "CB5"}) {
        ev.push_back(Event{t_couple, Event::Kind::kBreaker, cb, true});
    }
    ev.push_back(Event{t_island, Event::Kind::kBreaker, "CB1", false});
    return ev;
}

void ScenarioSpec::validate() const {
    topology.validate();
    if (!(sim.horizon > 0.0) || !(sim.dt > 0.0) || !(sim.sample_period >= sim.dt)) {
        throw Error(ErrorCode::kConfig, "scenario '" + id + "': invalid horizon, dt or sample period");
    }
    double last = 0.0;
    for (const auto& ev : events) {
        if (!(ev.time >= 0.0) || ev.time > sim.horizon) {
            throw Error(ErrorCode::kConfig, "scenario '" + id + "': event at t=" + std::to_string(ev.time) +
                                                " lies outside [0, horizon]");
        }
        if (ev.time < last) {
            throw Error(ErrorCode::kConfig, "scenario '" + id + "': events are not sorted by time");
        }
        last = ev.time;
        switch (ev.kind) {
            case Event::Kind::kBreaker:
                if (!topology.find_breaker(ev.target)) {
                    throw Error(ErrorCode::kConfig, "scenario '" + id + "': unknown breaker '" + ev.target + "'");
                }
                break;
            case Event::Kind::kLoad:
            case Event::Kind::kLoadConnect:
                if (!topology.find_load(ev.target)) {
                    throw Error(ErrorCode::kConfig, "scenario '" + id + "': unknown load '" + ev.target + "'");
                }
                break;
            case Event::Kind::kLoadGroup: {
                const bool found = std::any_of(topology.loads.begin(), topology.loads.end(),
                                               [&](const LoadSpec& l) { return l.group == ev.target; });
                if (!found) {
                    throw Error(ErrorCode::kConfig,
                                "scenario '" + id + "': unknown load group '" + ev.target + "'");
                }
                break;
            }
        }
    }
    if (controller == ControllerKind::kRef11 &&
        !(droop.limiter_threshold > 0.0 && droop.limiter_threshold < 1.2)) {
        throw Error(ErrorCode::kConfig, "limiter threshold must lie in (0, 1.2) p.u.");
    }
}

ScenarioSpec case_scenario(double mg_load_va, double power_factor) {
    ScenarioSpec spec;
    spec.topology = set_group_load(default_feeder(), "mg", mg_load_va, power_factor);
    char id[64];
    std::snprintf(id, sizeof id, "mg-%.6g-MVA", mg_load_va / 1e6);
    spec.id = id;
    return spec;
}

ControllerFactory make_controller_factory(ControllerKind kind, std::shared_ptr<const PinnModel> model,
                                          DroopOptions options) {
    if (kind == ControllerKind::kPinn && !model) {
        throw Error(ErrorCode::kConfig, "the pinn controller needs a model");
    }
    options.setpoint_limiter = kind == ControllerKind::kRef11;
    return [kind, model, options](const NetworkModel& net) {
        std::vector<std::unique_ptr<GfcController>> out;
        for (std::size_t g = 0; g < net.gfcs.size(); ++g) {
            DroopOptions o = options;
            o.excitation_seed = options.excitation_seed + g;
            if (kind == ControllerKind::kPinn) {
                out.push_back(std::make_unique<PinnController>(model, net.converter, net.gains, o));
            } else {
                out.push_back(std::make_unique<DroopController>(net.converter, net.gains, o));
            }
        }
        return out;
    };
}

RunRecord run_scenario(const ScenarioSpec& spec, std::shared_ptr<const PinnModel> model) {
    spec.validate();
    if (spec.controller == ControllerKind::kPinn && !model) {
        if (spec.model_path.empty()) {
            throw Error(ErrorCode::kConfig, "scenario '" + spec.id + "' uses the pinn controller but names no model");
        }
        model = std::make_shared<PinnModel>(load_model(spec.model_path));
    }
    return simulate(spec.topology, spec.events, make_controller_factory(spec.controller, model, spec.droop),
                    spec.sim, spec.id);
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<double> centered_slope(const std::vector<double>& y, double sample_period, double window) {
    const auto half = static_cast<std::ptrdiff_t>(std::llround(0.5 * window / sample_period));
    if (half < 1) {
        throw Error(ErrorCode::kRecordTooShort, "rate window spans fewer than two samples");
    }
    const auto n = static_cast<std::ptrdiff_t>(y.size());
    if (n < 2) {
        throw Error(ErrorCode::kRecordTooShort, "record has fewer than two samples");
    }
    std::vector<double> out(y.size());
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, k - half);
        const std::ptrdiff_t hi = std::min(n - 1, k + half);
        out[static_cast<std::size_t>(k)] =
            ls_slope(y.data() + lo, static_cast<std::size_t>(hi - lo + 1), sample_period);
    }
    return out;
}

RateSeries rocof_rocov(const std::vector<double>& frequency_hz, const std::vector<double>& voltage_pu,
                       double sample_period, double window) {
    if (frequency_hz.size() != voltage_pu.size()) {
        throw Error(ErrorCode::kShapeMismatch, "frequency and voltage series differ in length");
    }
    return RateSeries{centered_slope(frequency_hz, sample_period, window),
                      centered_slope(voltage_pu, sample_period, window)};
}

namespace {

double record_period(const RunRecord& record) {
    if (record.time.size() < 2) {
        throw Error(ErrorCode::kRecordTooShort, "record has fewer than two samples");
    }
    return record.time[1] - record.time[0];
}

}  // namespace

RateSeries rocof_rocov(const RunRecord& record, std::size_t gfc, double window) {
    const double period = record_period(record);
    std::vector<double> f, v;
    for (const auto& s : record.samples.at(gfc)) {
        f.push_back(s.frequency);
        v.push_back(s.v_pu);
    }
    return rocof_rocov(f, v, period, window);
}

MetricsReport extract_metrics(const RunRecord& record, const MetricsOptions& options) {
    MetricsReport rep;
    rep.scenario_id = record.scenario_id;
    rep.diverged = record.diverged;
    rep.divergence_time = record.diverged ? record.divergence_time : kNaN;

    const std::size_t n = record.time.size();
    const double horizon_end = n ? record.time.back() : 0.0;
    const double period = n >= 2 ? record.time[1] - record.time[0] : 0.0;
    // The final window is only meaningful if the record reaches the horizon.
    const double final_start = horizon_end + period - options.final_window;

    for (std::size_t g = 0; g < record.samples.size(); ++g) {
        const auto& trace = record.samples[g];
        GfcMetrics m;
        m.gfc = g < record.gfc_names.size() ? record.gfc_names[g] : "GFC" + std::to_string(g + 1);
        RateSeries rates;
        if (n >= 2) {
            try {
                rates = rocof_rocov(record, g, options.rate_window);
            } catch (const Error&) {
                rates = {};
            }
        }
        double nadir = kNaN, peak_rocof = kNaN, peak_rocov = kNaN, peak_dev = kNaN;
        double peak_is = kNaN, peak_idc = kNaN;
        double final_dev = kNaN, f_sum = 0, p_sum = 0, pref_sum = 0, idc_sum = 0;
        std::size_t n_final = 0;
        auto fmax = [](double a, double b) { return std::isnan(a) ? b : std::max(a, b); };
        auto fmin = [](double a, double b) { return std::isnan(a) ? b : std::min(a, b); };
        for (std::size_t k = 0; k < n; ++k) {
            const GfcSample& s = trace[k];
            const double t = record.time[k];
            const double dev = std::abs(s.v_pu - 1.0);
            if (t > options.disturbance_time) {
                nadir = fmin(nadir, s.frequency);
                peak_dev = fmax(peak_dev, dev);
                peak_is = fmax(peak_is, s.i_switch_pu);
                peak_idc = fmax(peak_idc, s.i_dc);
                if (!rates.rocof.empty()) {
                    peak_rocof = fmax(peak_rocof, std::abs(rates.rocof[k]));
                    peak_rocov = fmax(peak_rocov, std::abs(rates.rocov[k]));
                }
            }
            if (!record.diverged && t >= final_start - 1e-9) {
                ++n_final;
                final_dev = fmax(final_dev, dev);
                f_sum += s.frequency;
                p_sum += s.features[kFeatP] / record.rated_power;
                pref_sum += s.p_ref_effective;
                idc_sum += s.i_dc;
            }
        }
        m.frequency_nadir = nadir;
        m.peak_rocof = peak_rocof;
        m.peak_rocov = peak_rocov;
        m.peak_voltage_deviation = peak_dev;
        m.peak_switch_current = peak_is;
        m.peak_dc_current = peak_idc;
        if (n_final > 0) {
            const double nf = static_cast<double>(n_final);
            m.final_voltage_deviation = final_dev;
            m.final_frequency = f_sum / nf;
            m.mean_power = p_sum / nf;
            m.setpoint_drift = std::abs(pref_sum / nf - record.p_ref_nominal);
            m.final_dc_current = idc_sum / nf;
        } else {
            m.final_voltage_deviation = m.final_frequency = m.mean_power = m.setpoint_drift =
                m.final_dc_current = kNaN;
        }
        m.stable = !record.diverged && n_final > 0 && final_dev <= options.voltage_tolerance;
        rep.gfcs.push_back(m);
    }

    GfcMetrics w;
    w.gfc = "worst";
    if (!rep.gfcs.empty()) {
        w = rep.gfcs.front();
        w.gfc = "worst";
        auto lo = [](double a, double b) { return std::isnan(a) || std::isnan(b) ? kNaN : std::min(a, b); };
        auto hi = [](double a, double b) { return std::isnan(a) || std::isnan(b) ? kNaN : std::max(a, b); };
        for (std::size_t g = 1; g < rep.gfcs.size(); ++g) {
            const GfcMetrics& m = rep.gfcs[g];
            w.frequency_nadir = lo(w.frequency_nadir, m.frequency_nadir);
            w.final_frequency = lo(w.final_frequency, m.final_frequency);
            w.peak_rocof = hi(w.peak_rocof, m.peak_rocof);
            w.peak_rocov = hi(w.peak_rocov, m.peak_rocov);
            w.peak_voltage_deviation = hi(w.peak_voltage_deviation, m.peak_voltage_deviation);
            w.final_voltage_deviation = hi(w.final_voltage_deviation, m.final_voltage_deviation);
            w.mean_power = hi(w.mean_power, m.mean_power);
            w.setpoint_drift = hi(w.setpoint_drift, m.setpoint_drift);
            w.peak_switch_current = hi(w.peak_switch_current, m.peak_switch_current);
            w.peak_dc_current = hi(w.peak_dc_current, m.peak_dc_current);
            w.final_dc_current = hi(w.final_dc_current, m.final_dc_current);
            w.stable = w.stable && m.stable;
        }
    }
    rep.worst = w;
    rep.stable = !rep.gfcs.empty() && w.stable;
    return rep;
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) {
        return "";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string join(const std::vector<std::string>& cols) {
    std::string line;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) {
            line += ',';
        }
        line += cols[i];
    }
    return line;
}

void write_lines(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    }
    out << join(header) << '\n';
    for (const auto& r : rows) {
        out << join(r) << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
    }
}

}  // namespace

std::vector<std::string> metrics_csv_header() {
    return {"scenario",          "controller",         "gfc",
            "diverged",          "divergence_time_s",  "stable",
            "frequency_nadir_hz", "final_frequency_hz", "peak_rocof_hz_per_s",
            "peak_rocov_pu_per_s", "peak_voltage_deviation_pu", "final_voltage_deviation_pu",
            "mean_power_pu",     "setpoint_drift_pu",  "peak_switch_current_pu",
            "peak_dc_current_a", "final_dc_current_a"};
}

std::vector<std::vector<std::string>> metrics_csv_rows(const MetricsReport& report) {
    std::vector<std::vector<std::string>> rows;
    auto row = [&](const GfcMetrics& m) {
        rows.push_back({report.scenario_id, report.controller, m.gfc, report.diverged ? "1" : "0",
                        fmt(report.divergence_time), m.stable ? "1" : "0", fmt(m.frequency_nadir),
                        fmt(m.final_frequency), fmt(m.peak_rocof), fmt(m.peak_rocov),
                        fmt(m.peak_voltage_deviation), fmt(m.final_voltage_deviation), fmt(m.mean_power),
                        fmt(m.setpoint_drift), fmt(m.peak_switch_current), fmt(m.peak_dc_current),
                        fmt(m.final_dc_current)});
    };
    for (const auto& m : report.gfcs) {
        row(m);
    }
    row(report.worst);
    return rows;
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
        for (auto& row : metrics_csv_rows(r)) {
            rows.push_back(std::move(row));
        }
    }
    write_lines(path, metrics_csv_header(), rows);
}

// ---------------------------------------------------------------------------
// Training data

void SweepConfig::validate() const {
    topology.validate();
    if (runs < 1) {
        throw Error(ErrorCode::kConfig, "a sweep needs at least one run");
    }
    if (!(mg_capacity > 0.0) || !(0.0 <= mg_fraction_min && mg_fraction_min <= mg_fraction_max) ||
        !(local_capacity >= 0.0) || !(0.0 <= local_fraction_min && local_fraction_min <= local_fraction_max)) {
        throw Error(ErrorCode::kConfig, "invalid sweep load ranges");
    }
    if (!(excitation >= 0.0)) {
        throw Error(ErrorCode::kConfig, "sweep excitation must be non-negative");
    }
    if (!(mg_power_factor > 0.0 && mg_power_factor <= 1.0) ||
        !(local_power_factor > 0.0 && local_power_factor <= 1.0)) {
        throw Error(ErrorCode::kConfig, "sweep power factors must lie in (0, 1]");
    }
    if (!std::any_of(topology.loads.begin(), topology.loads.end(),
                     [&](const LoadSpec& l) { return l.group == mg_group; })) {
        throw Error(ErrorCode::kConfig, "sweep load group '" + mg_group + "' not in the topology");
    }
    for (const auto& g : topology.gfcs) {
        if (!g.local_load.empty() && !topology.find_load(g.local_load)) {
            throw Error(ErrorCode::kConfig, "local load '" + g.local_load + "' not in the topology");
        }
    }
    ScenarioSpec probe;
    probe.topology = topology;
    probe.events = events;
    probe.sim = sim;
    probe.validate();
}

std::vector<SweepDraw> draw_sweep(const SweepConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> mg(cfg.mg_fraction_min, cfg.mg_fraction_max);
    std::uniform_real_distribution<double> local(cfg.local_fraction_min, cfg.local_fraction_max);
    const int width = std::max<int>(4, static_cast<int>(std::to_string(cfg.runs - 1).size()));
    std::vector<SweepDraw> draws;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        SweepDraw d;
        char id[32];
        std::snprintf(id, sizeof id, "run%0*zu", width, r);
        d.scenario_id = id;
        d.excitation_seed = rng();
        d.mg_load = mg(rng) * cfg.mg_capacity;
        for (std::size_t g = 0; g < cfg.topology.gfcs.size(); ++g) {
            d.local_loads.push_back(local(rng) * cfg.local_capacity);
        }
        draws.push_back(std::move(d));
    }
    return draws;
}

std::vector<Trajectory> record_trajectories(const RunRecord& record) {
    std::vector<Trajectory> out;
    for (std::size_t g = 0; g < record.samples.size(); ++g) {
        Trajectory t;
        t.scenario_id = record.scenario_id;
        t.gfc = record.gfc_names.at(g);
        for (std::size_t k = 0; k < record.time.size(); ++k) {
            const GfcSample& s = record.samples[g][k];
            t.time.push_back(record.time[k]);
            t.features.push_back(s.features);
            t.targets_ab.push_back({s.v_s_ref.alpha, s.v_s_ref.beta});
            t.theta.push_back(s.theta);
        }
        out.push_back(std::move(t));
    }
    return out;
}

Dataset generate_dataset(const SweepConfig& cfg, const std::function<void(const SweepRun&)>& progress) {
    cfg.validate();
    const std::vector<SweepDraw> draws = draw_sweep(cfg);
    std::vector<RunRecord> records(draws.size());
    std::vector<SweepRun> runs(draws.size());

    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    std::exception_ptr failure;
    auto worker = [&]() {
        for (std::size_t i = next++; i < draws.size(); i = next++) {
            try {
                const SweepDraw& d = draws[i];
                NetworkModel net = set_group_load(cfg.topology, cfg.mg_group, d.mg_load, cfg.mg_power_factor);
                for (std::size_t g = 0; g < net.gfcs.size(); ++g) {
                    if (!net.gfcs[g].local_load.empty()) {
                        net = set_load(std::move(net), net.gfcs[g].local_load, d.local_loads[g],
                                       cfg.local_power_factor);
                    }
                }
                DroopOptions opts = cfg.droop;
                opts.excitation = cfg.excitation;
                opts.excitation_seed = d.excitation_seed;
                records[i] = simulate(net, cfg.events,
                                      make_controller_factory(ControllerKind::kDroop, nullptr, opts), cfg.sim,
                                      d.scenario_id);
                runs[i] = SweepRun{d, records[i].diverged,
                                   records[i].diverged ? records[i].divergence_time : kNaN,
                                   records[i].divergence_reason};
                if (progress) {
                    std::lock_guard<std::mutex> lock(progress_mutex);
                    progress(runs[i]);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = draws.size();
            }
        }
    };
    unsigned n_workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    n_workers = static_cast<unsigned>(std::min<std::size_t>(n_workers, draws.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    Dataset data;
    data.seed = cfg.seed;
    data.excitation = cfg.excitation;
    data.set.sample_period = cfg.sim.sample_period;
    data.runs = runs;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].diverged) {
            continue;
        }
        for (auto& t : record_trajectories(records[i])) {
            data.set.trajectories.push_back(std::move(t));
        }
    }
    if (data.set.trajectories.empty()) {
        throw Error(ErrorCode::kAllRunsDiverged, "all " + std::to_string(draws.size()) + " sweep runs diverged");
    }
    return data;
}

namespace {

using nlohmann::json;

const char* kTrajectoryFile = "trajectories.csv";
const char* kManifestFile = "manifest.json";

std::vector<std::string> trajectory_header() {
    std::vector<std::string> cols{"scenario", "gfc", "time"};
    for (const auto& f : kFeatureNames) {
        cols.emplace_back(f);
    }
    cols.insert(cols.end(), {"vs_alpha_ref", "vs_beta_ref", "theta"});
    return cols;
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::kIo, "cannot create directory '" + dir + "': " + ec.message());
    }
    json manifest;
    manifest["format"] = "gfcsim-dataset";
    manifest["version"] = 1;
    manifest["seed"] = data.seed;
    manifest["sample_period"] = data.set.sample_period;
    manifest["excitation"] = data.excitation;
    manifest["trajectories"] = data.set.trajectories.size();
    manifest["samples"] = data.set.sample_count();
    json runs = json::array();
    for (const auto& r : data.runs) {
        json jr{{"scenario", r.draw.scenario_id},
                {"mg_load_va", r.draw.mg_load},
                {"local_loads_va", r.draw.local_loads},
                {"excitation_seed", r.draw.excitation_seed},
                {"diverged", r.diverged}};
        if (r.diverged) {
            jr["divergence_time"] = r.divergence_time;
            jr["divergence_reason"] = r.divergence_reason;
        }
        runs.push_back(jr);
    }
    manifest["runs"] = runs;
    {
        std::ofstream out(std::filesystem::path(dir) / kManifestFile);
        if (!out) {
            throw Error(ErrorCode::kIo, "cannot write the dataset manifest in '" + dir + "'");
        }
        out << manifest.dump(1) << '\n';
    }

    const std::string path = (std::filesystem::path(dir) / kTrajectoryFile).string();
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    }
    std::fprintf(f, "%s\n", join(trajectory_header()).c_str());
    for (const auto& t : data.set.trajectories) {
        for (std::size_t k = 0; k < t.size(); ++k) {
            std::fprintf(f, "%s,%s,%.17g", t.scenario_id.c_str(), t.gfc.c_str(), t.time[k]);
            for (double x : t.features[k]) {
                std::fprintf(f, ",%.17g", x);
            }
            std::fprintf(f, ",%.17g,%.17g,%.17g\n", t.targets_ab[k][0], t.targets_ab[k][1], t.theta[k]);
        }
    }
    if (std::fclose(f) != 0) {
        throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
    }
}

Dataset load_dataset(const std::string& dir) {
    Dataset data;
    const auto manifest_path = std::filesystem::path(dir) / kManifestFile;
    std::ifstream min(manifest_path);
    if (!min) {
        throw Error(ErrorCode::kIo, "no dataset manifest at '" + manifest_path.string() + "'");
    }
    try {
        const json m = json::parse(min);
        if (m.at("format").get<std::string>() != "gfcsim-dataset") {
            throw Error(ErrorCode::kConfig, "'" + dir + "' is not a dataset directory");
        }
        data.seed = m.at("seed").get<std::uint64_t>();
        data.set.sample_period = m.at("sample_period").get<double>();
        data.excitation = m.value("excitation", 0.0);
        for (const auto& jr : m.at("runs")) {
            SweepRun r;
            r.draw.scenario_id = jr.at("scenario").get<std::string>();
            r.draw.mg_load = jr.at("mg_load_va").get<double>();
            r.draw.local_loads = jr.at("local_loads_va").get<std::vector<double>>();
            r.draw.excitation_seed = jr.value("excitation_seed", std::uint64_t{0});
            r.diverged = jr.at("diverged").get<bool>();
            r.divergence_time = jr.value("divergence_time", kNaN);
            r.divergence_reason = jr.value("divergence_reason", std::string());
            data.runs.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kConfig, "malformed dataset manifest: " + std::string(e.what()));
    }

    const auto path = std::filesystem::path(dir) / kTrajectoryFile;
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
    }
    std::string line;
    std::getline(in, line);
    if (line != join(trajectory_header())) {
        throw Error(ErrorCode::kConfig, "'" + path.string() + "' has an unexpected header");
    }
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cols.push_back(cell);
        }
        if (cols.size() != 3 + kFeatureCount + 3) {
            throw Error(ErrorCode::kConfig, path.string() + ":" + std::to_string(line_no) + ": wrong column count");
        }
        auto key = std::make_pair(cols[0], cols[1]);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, data.set.trajectories.size()).first;
            Trajectory t;
            t.scenario_id = cols[0];
            t.gfc = cols[1];
            data.set.trajectories.push_back(std::move(t));
        }
        Trajectory& t = data.set.trajectories[it->second];
        try {
            t.time.push_back(std::stod(cols[2]));
            FeatureVector x{};
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                x[i] = std::stod(cols[3 + i]);
            }
            t.features.push_back(x);
            t.targets_ab.push_back({std::stod(cols[3 + kFeatureCount]), std::stod(cols[4 + kFeatureCount])});
            t.theta.push_back(std::stod(cols[5 + kFeatureCount]));
        } catch (const std::exception&) {
            throw Error(ErrorCode::kConfig, path.string() + ":" + std::to_string(line_no) + ": bad number");
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Comparison and load search

Comparison compare(const ScenarioSpec& spec, const std::vector<ControllerKind>& kinds,
                   std::shared_ptr<const PinnModel> model, const MetricsOptions& options) {
    if (kinds.empty()) {
        throw Error(ErrorCode::kConfig, "compare needs at least one controller");
    }
    const bool needs_model = std::find(kinds.begin(), kinds.end(), ControllerKind::kPinn) != kinds.end();
    if (needs_model && !model) {
        if (spec.model_path.empty()) {
            throw Error(ErrorCode::kConfig, "comparison includes pinn but no model was given");
        }
        model = std::make_shared<PinnModel>(load_model(spec.model_path));
    }
    Comparison cmp;
    for (ControllerKind kind : kinds) {
        ScenarioSpec s = spec;
        s.controller = kind;
        ComparisonEntry e;
        e.kind = kind;
        e.record = run_scenario(s, model);
        e.metrics = extract_metrics(e.record, options);
        e.metrics.controller = controller_label(kind);
        cmp.entries.push_back(std::move(e));
    }
    const GfcMetrics& base = cmp.entries.front().metrics.worst;
    for (std::size_t i = 1; i < cmp.entries.size(); ++i) {
        const GfcMetrics& m = cmp.entries[i].metrics.worst;
        ComparisonDelta d;
        d.label = controller_kind_name(cmp.entries[i].kind) + "-" + controller_kind_name(cmp.entries[0].kind);
        d.frequency = m.final_frequency - base.final_frequency;
        d.power = m.mean_power - base.mean_power;
        d.peak_deviation = m.peak_voltage_deviation - base.peak_voltage_deviation;
        d.peak_rocof = m.peak_rocof - base.peak_rocof;
        d.setpoint_drift = m.setpoint_drift - base.setpoint_drift;
        cmp.deltas.push_back(d);
    }
    return cmp;
}

void write_comparison_csv(const Comparison& cmp, const std::string& path) {
    std::vector<std::string> header = metrics_csv_header();
    header.insert(header.end(), {"delta_frequency_hz", "delta_power_pu", "delta_peak_deviation_pu",
                                 "delta_peak_rocof_hz_per_s", "delta_setpoint_drift_pu"});
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : cmp.entries) {
        for (auto& r : metrics_csv_rows(e.metrics)) {
            r.resize(header.size());
            rows.push_back(std::move(r));
        }
    }
    const std::string scenario = cmp.entries.empty() ? "" : cmp.entries.front().metrics.scenario_id;
    for (const auto& d : cmp.deltas) {
        std::vector<std::string> r(header.size());
        r[0] = scenario;
        r[1] = "delta:" + d.label;
        r[2] = "worst";
        const std::size_t base = metrics_csv_header().size();
        r[base] = fmt(d.frequency);
        r[base + 1] = fmt(d.power);
        r[base + 2] = fmt(d.peak_deviation);
        r[base + 3] = fmt(d.peak_rocof);
        r[base + 4] = fmt(d.setpoint_drift);
        rows.push_back(std::move(r));
    }
    write_lines(path, header, rows);
}

BoundarySearch bisect_stability(const std::function<bool(double)>& stable_at, double lo, double hi,
                                double rel_tol) {
    if (!(lo > 0.0) || !(hi > lo) || !(rel_tol > 0.0)) {
        throw Error(ErrorCode::kConfig, "bisection needs 0 < lo < hi and a positive tolerance");
    }
    BoundarySearch out;
    const bool s_lo = stable_at(lo);
    out.trials.emplace_back(lo, s_lo);
    if (!s_lo) {
        throw Error(ErrorCode::kConfig, "bisection lower bound is not stable");
    }
    const bool s_hi = stable_at(hi);
    out.trials.emplace_back(hi, s_hi);
    if (s_hi) {
        throw Error(ErrorCode::kConfig, "bisection upper bound is stable");
    }
    while (hi - lo > rel_tol * lo) {
        const double mid = 0.5 * (lo + hi);
        const bool s = stable_at(mid);
        out.trials.emplace_back(mid, s);
        (s ? lo : hi) = mid;
    }
    out.stable_load = lo;
    out.unstable_load = hi;
    return out;
}

}  // namespace gfc
