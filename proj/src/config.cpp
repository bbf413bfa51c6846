#include "gfcsim/config.hpp"

#include "gfcsim/error.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace gfc {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(what + ": " + e.what());
    }
}

std::string parent_dir(const std::string& path) {
    const auto p = std::filesystem::path(path).parent_path();
    return p.empty() ? "." : p.string();
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string();
}

// Rejects keys outside `allowed` so that typos do not pass silently.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        fail(where + " must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            fail(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) {
        fail(where + ": missing key '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(where + ": key '" + key + "' has the wrong type");
    }
}

template <typename T>
void get_opt(const json& j, const std::string& key, T& out, const std::string& where) {
    if (j.contains(key)) {
        out = get<T>(j, key, where);
    }
}

#define GFC_CONVERTER_FIELDS(X)                                                                   \
    X(dc_capacitance) X(dc_conductance) X(filter_inductance) X(filter_capacitance)                \
    X(filter_resistance) X(dc_time_constant) X(dc_current_max) X(ac_current_max) X(n_modules)     \
    X(dc_voltage_ref) X(rated_power) X(nominal_frequency) X(nominal_voltage_ll_rms)

#define GFC_GAIN_FIELDS(X)                                                                         \
    X(k_dc) X(k_vp) X(k_vi) X(k_ip) X(k_ii) X(droop_p) X(droop_q) X(omega_ref) X(p_ref) X(v_ref)   \
    X(v_dc_ref) X(power_base) X(voltage_base) X(anti_windup) X(y_v_limit) X(y_i_limit)

#define GFC_KEY(name) #name,
#define GFC_READ(name) get_opt(j, #name, out.name, where);
#define GFC_WRITE(name) j[#name] = v.name;

ConverterParams parse_converter(const json& j, ConverterParams out) {
    const std::string where = "converter";
    check_keys(j, {GFC_CONVERTER_FIELDS(GFC_KEY)}, where);
    GFC_CONVERTER_FIELDS(GFC_READ)
    return out;
}

ControlGains parse_gains(const json& j, ControlGains out) {
    const std::string where = "gains";
    check_keys(j, {GFC_GAIN_FIELDS(GFC_KEY)}, where);
    GFC_GAIN_FIELDS(GFC_READ)
    return out;
}

json converter_json(const ConverterParams& v) {
    json j;
    GFC_CONVERTER_FIELDS(GFC_WRITE)
    return j;
}

json gains_json(const ControlGains& v) {
    json j;
    GFC_GAIN_FIELDS(GFC_WRITE)
    return j;
}

#undef GFC_KEY
#undef GFC_READ
#undef GFC_WRITE

NetworkModel topology_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() != "default") {
            fail("topology string must be \"default\" or a file path handled by the caller");
        }
        return default_feeder();
    }
    check_keys(j, {"buses", "branches", "loads", "breakers", "grid", "gfcs", "converter", "gains"}, "topology");
    NetworkModel m;
    m.buses = get<std::vector<std::string>>(j, "buses", "topology");
    for (const auto& b : get<json>(j, "branches", "topology")) {
        const std::string w = "topology.branches";
        check_keys(b, {"id", "from", "to", "resistance", "inductance"}, w);
        m.branches.push_back({get<std::string>(b, "id", w), get<std::string>(b, "from", w),
                              get<std::string>(b, "to", w), get<double>(b, "resistance", w),
                              get<double>(b, "inductance", w)});
    }
    if (j.contains("loads")) {
        for (const auto& l : j["loads"]) {
            const std::string w = "topology.loads";
            check_keys(l, {"id", "bus", "apparent_power", "power_factor", "connected", "group", "share"}, w);
            LoadSpec ld;
            ld.id = get<std::string>(l, "id", w);
            ld.bus = get<std::string>(l, "bus", w);
            ld.apparent_power = get<double>(l, "apparent_power", w);
            get_opt(l, "power_factor", ld.power_factor, w);
            get_opt(l, "connected", ld.connected, w);
            get_opt(l, "group", ld.group, w);
            get_opt(l, "share", ld.share, w);
            m.loads.push_back(ld);
        }
    }
    if (j.contains("breakers")) {
        for (const auto& b : j["breakers"]) {
            const std::string w = "topology.breakers";
            check_keys(b, {"id", "branch", "closed"}, w);
            BreakerSpec cb{get<std::string>(b, "id", w), get<std::string>(b, "branch", w), true};
            get_opt(b, "closed", cb.closed, w);
            m.breakers.push_back(cb);
        }
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        const std::string w = "topology.grid";
        check_keys(g, {"enabled", "bus", "voltage_ll_rms", "frequency", "phase", "resistance", "inductance"}, w);
        get_opt(g, "enabled", m.grid.enabled, w);
        get_opt(g, "bus", m.grid.bus, w);
        get_opt(g, "voltage_ll_rms", m.grid.voltage_ll_rms, w);
        get_opt(g, "frequency", m.grid.frequency, w);
        get_opt(g, "phase", m.grid.phase, w);
        get_opt(g, "resistance", m.grid.resistance, w);
        get_opt(g, "inductance", m.grid.inductance, w);
    } else {
        m.grid.enabled = false;
    }
    for (const auto& g : get<json>(j, "gfcs", "topology")) {
        const std::string w = "topology.gfcs";
        check_keys(g, {"id", "bus", "pcc_bus", "local_load"}, w);
        GfcSpec s{get<std::string>(g, "id", w), get<std::string>(g, "bus", w), "", ""};
        get_opt(g, "pcc_bus", s.pcc_bus, w);
        get_opt(g, "local_load", s.local_load, w);
        m.gfcs.push_back(s);
    }
    if (j.contains("converter")) {
        m.converter = parse_converter(j["converter"], m.converter);
    }
    // Gains default to the ones derived from the converter ratings.
    m.gains = default_gains(m.converter);
    if (j.contains("gains")) {
        m.gains = parse_gains(j["gains"], m.gains);
    }
    try {
        m.validate();
    } catch (const Error& e) {
        fail(std::string("topology: ") + e.what());
    }
    return m;
}

NetworkModel topology_ref(const json& j, const std::string& base_dir) {
    if (j.is_string() && j.get<std::string>() != "default") {
        return load_topology(resolve(base_dir, j.get<std::string>()));
    }
    return topology_from_json(j);
}

std::vector<Event> events_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() != "default") {
            fail("timeline must be \"default\" or a list of events");
        }
        return default_timeline();
    }
    if (!j.is_array()) {
        fail("timeline must be \"default\" or a list of events");
    }
    std::vector<Event> out;
    for (const auto& e : j) {
        const std::string w = "timeline event";
        check_keys(e, {"time", "breaker", "state", "load", "load_group", "apparent_power", "power_factor",
                       "connected"},
                   w);
        Event ev;
        ev.time = get<double>(e, "time", w);
        if (e.contains("breaker")) {
            ev.kind = Event::Kind::kBreaker;
            ev.target = get<std::string>(e, "breaker", w);
            const std::string state = get<std::string>(e, "state", w);
            if (state != "open" && state != "close") {
                fail(w + ": breaker state must be \"open\" or \"close\"");
            }
            ev.closed = state == "close";
        } else if (e.contains("load_group")) {
            ev.kind = Event::Kind::kLoadGroup;
            ev.target = get<std::string>(e, "load_group", w);
            ev.apparent_power = get<double>(e, "apparent_power", w);
            get_opt(e, "power_factor", ev.power_factor, w);
        } else if (e.contains("load") && e.contains("connected")) {
            ev.kind = Event::Kind::kLoadConnect;
            ev.target = get<std::string>(e, "load", w);
            ev.closed = get<bool>(e, "connected", w);
        } else if (e.contains("load")) {
            ev.kind = Event::Kind::kLoad;
            ev.target = get<std::string>(e, "load", w);
            ev.apparent_power = get<double>(e, "apparent_power", w);
            get_opt(e, "power_factor", ev.power_factor, w);
        } else {
            fail(w + " needs one of breaker, load or load_group");
        }
        out.push_back(ev);
    }
    return out;
}

// Scenario-level load settings applied on top of the topology.
NetworkModel apply_load_settings(NetworkModel m, const json& j) {
    if (j.contains("mg_load")) {
        const json& g = j["mg_load"];
        const std::string w = "mg_load";
        check_keys(g, {"group", "apparent_power", "power_factor"}, w);
        std::string group = "mg";
        double pf = 0.97;
        get_opt(g, "group", group, w);
        get_opt(g, "power_factor", pf, w);
        try {
            m = set_group_load(std::move(m), group, get<double>(g, "apparent_power", w), pf);
        } catch (const Error& e) {
            fail(std::string("mg_load: ") + e.what());
        }
    }
    if (j.contains("loads")) {
        for (const auto& [id, l] : j["loads"].items()) {
            const std::string w = "loads." + id;
            check_keys(l, {"apparent_power", "power_factor", "connected"}, w);
            try {
                if (l.contains("apparent_power")) {
                    double pf = m.find_load(id) ? m.find_load(id)->power_factor : 1.0;
                    get_opt(l, "power_factor", pf, w);
                    m = set_load(std::move(m), id, get<double>(l, "apparent_power", w), pf);
                }
                if (l.contains("connected")) {
                    m = set_load_connected(std::move(m), id, get<bool>(l, "connected", w));
                }
            } catch (const Error& e) {
                fail(w + ": " + e.what());
            }
        }
    }
    return m;
}

void read_sim_options(const json& j, SimOptions& sim, const std::string& where) {
    get_opt(j, "horizon", sim.horizon, where);
    get_opt(j, "dt", sim.dt, where);
    get_opt(j, "sample_period", sim.sample_period, where);
    if (!(sim.dt > 0.0) || !(sim.sample_period > 0.0) || !(sim.horizon > 0.0)) {
        fail(where + ": horizon, dt and sample_period must be positive");
    }
    const double ratio = sim.sample_period / sim.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
        fail(where + ": sample_period must be a whole multiple of dt");
    }
}

void read_droop_options(const json& j, DroopOptions& d, const std::string& where) {
    get_opt(j, "rate_window", d.rate_window, where);
    get_opt(j, "grid_handoff", d.grid_handoff, where);
    if (j.contains("limiter")) {
        const json& l = j["limiter"];
        check_keys(l, {"threshold", "gain", "tau"}, where + ".limiter");
        get_opt(l, "threshold", d.limiter_threshold, where);
        get_opt(l, "gain", d.limiter_gain, where);
        get_opt(l, "tau", d.limiter_tau, where);
    }
}

}  // namespace

NetworkModel parse_topology(const std::string& json_text) {
    return topology_from_json(parse_text(json_text, "topology"));
}

NetworkModel load_topology(const std::string& path) {
    return topology_from_json(parse_text(read_file(path), path));
}

std::string topology_to_json(const NetworkModel& m) {
    json j;
    j["buses"] = m.buses;
    j["branches"] = json::array();
    for (const auto& b : m.branches) {
        j["branches"].push_back(
            {{"id", b.id}, {"from", b.from}, {"to", b.to}, {"resistance", b.resistance}, {"inductance", b.inductance}});
    }
    j["loads"] = json::array();
    for (const auto& l : m.loads) {
        j["loads"].push_back({{"id", l.id},
                              {"bus", l.bus},
                              {"apparent_power", l.apparent_power},
                              {"power_factor", l.power_factor},
                              {"connected", l.connected},
                              {"group", l.group},
                              {"share", l.share}});
    }
    j["breakers"] = json::array();
    for (const auto& b : m.breakers) {
        j["breakers"].push_back({{"id", b.id}, {"branch", b.branch}, {"closed", b.closed}});
    }
    j["grid"] = {{"enabled", m.grid.enabled},         {"bus", m.grid.bus},
                 {"voltage_ll_rms", m.grid.voltage_ll_rms}, {"frequency", m.grid.frequency},
                 {"phase", m.grid.phase},             {"resistance", m.grid.resistance},
                 {"inductance", m.grid.inductance}};
    j["gfcs"] = json::array();
    for (const auto& g : m.gfcs) {
        j["gfcs"].push_back({{"id", g.id}, {"bus", g.bus}, {"pcc_bus", g.pcc_bus}, {"local_load", g.local_load}});
    }
    j["converter"] = converter_json(m.converter);
    j["gains"] = gains_json(m.gains);
    return j.dump(1);
}

ScenarioSpec parse_scenario(const std::string& json_text, const std::string& base_dir) {
    const json j = parse_text(json_text, "scenario");
    check_keys(j, {"id", "topology", "mg_load", "loads", "timeline", "horizon", "dt", "sample_period", "controller",
                   "model", "seed", "disturbance_time", "rate_window", "grid_handoff", "limiter"},
               "scenario");
    ScenarioSpec s;
    get_opt(j, "id", s.id, "scenario");
    s.topology = topology_ref(j.value("topology", json("default")), base_dir);
    s.topology = apply_load_settings(std::move(s.topology), j);
    s.events = events_from_json(j.value("timeline", json("default")));
    read_sim_options(j, s.sim, "scenario");
    if (j.contains("controller")) {
        s.controller = parse_controller_kind(get<std::string>(j, "controller", "scenario"));
    }
    if (j.contains("model")) {
        s.model_path = resolve(base_dir, get<std::string>(j, "model", "scenario"));
    }
    get_opt(j, "seed", s.seed, "scenario");
    get_opt(j, "disturbance_time", s.disturbance_time, "scenario");
    read_droop_options(j, s.droop, "scenario");
    s.validate();
    return s;
}

ScenarioSpec load_scenario(const std::string& path) {
    return parse_scenario(read_file(path), parent_dir(path));
}

SweepConfig parse_sweep(const std::string& json_text, const std::string& base_dir) {
    const json j = parse_text(json_text, "sweep");
    const std::string w = "sweep";
    check_keys(j, {"runs", "seed", "topology", "timeline", "horizon", "dt", "sample_period", "mg_group", "mg_capacity",
                   "mg_fraction", "mg_power_factor", "local_capacity", "local_fraction", "local_power_factor",
                   "excitation", "workers", "rate_window", "grid_handoff"},
               w);
    SweepConfig c;
    get_opt(j, "runs", c.runs, w);
    get_opt(j, "seed", c.seed, w);
    c.topology = topology_ref(j.value("topology", json("default")), base_dir);
    c.events = events_from_json(j.value("timeline", json("default")));
    read_sim_options(j, c.sim, w);
    read_droop_options(j, c.droop, w);
    get_opt(j, "mg_group", c.mg_group, w);
    get_opt(j, "mg_capacity", c.mg_capacity, w);
    get_opt(j, "mg_power_factor", c.mg_power_factor, w);
    get_opt(j, "local_capacity", c.local_capacity, w);
    get_opt(j, "local_power_factor", c.local_power_factor, w);
    get_opt(j, "excitation", c.excitation, w);
    get_opt(j, "workers", c.workers, w);
    auto range = [&](const char* key, double& lo, double& hi) {
        if (j.contains(key)) {
            const auto r = get<std::vector<double>>(j, key, w);
            if (r.size() != 2) {
                fail(w + ": '" + key + "' must be [min, max]");
            }
            lo = r[0];
            hi = r[1];
        }
    };
    range("mg_fraction", c.mg_fraction_min, c.mg_fraction_max);
    range("local_fraction", c.local_fraction_min, c.local_fraction_max);
    c.validate();
    return c;
}

SweepConfig load_sweep(const std::string& path) { return parse_sweep(read_file(path), parent_dir(path)); }

TrainConfig parse_train_config(const std::string& json_text) {
    const json j = parse_text(json_text, "training config");
    const std::string w = "training config";
    check_keys(j, {"iterations", "learning_rate", "beta1", "beta2", "epsilon", "lr_final_fraction", "hidden", "seed",
                   "batches", "window", "holdout_fraction", "heldout_every", "lambda", "penalty_mode", "i_peak",
                   "physics_units", "voltage_base"},
               w);
    TrainConfig c;
    get_opt(j, "iterations", c.iterations, w);
    get_opt(j, "learning_rate", c.adam.lr, w);
    get_opt(j, "beta1", c.adam.beta1, w);
    get_opt(j, "beta2", c.adam.beta2, w);
    get_opt(j, "epsilon", c.adam.eps, w);
    get_opt(j, "lr_final_fraction", c.lr_final_fraction, w);
    get_opt(j, "hidden", c.hidden, w);
    get_opt(j, "seed", c.seed, w);
    get_opt(j, "batches", c.batches, w);
    get_opt(j, "window", c.window, w);
    get_opt(j, "holdout_fraction", c.holdout_fraction, w);
    get_opt(j, "heldout_every", c.heldout_every, w);
    get_opt(j, "i_peak", c.i_peak, w);
    get_opt(j, "voltage_base", c.voltage_base, w);
    if (j.contains("physics_units")) {
        const auto units = get<std::string>(j, "physics_units", w);
        if (units == "per_unit") {
            c.physics_units = PhysicsUnits::kPerUnit;
        } else if (units == "normalized") {
            c.physics_units = PhysicsUnits::kNormalized;
        } else {
            fail(w + ": physics_units must be \"per_unit\" or \"normalized\"");
        }
    }
    if (j.contains("lambda")) {
        const json& l = j["lambda"];
        check_keys(l, {"pde", "current", "rocof", "rocov"}, w + ".lambda");
        get_opt(l, "pde", c.lambdas.pde, w);
        get_opt(l, "current", c.lambdas.current, w);
        get_opt(l, "rocof", c.lambdas.rocof, w);
        get_opt(l, "rocov", c.lambdas.rocov, w);
    }
    if (j.contains("penalty_mode")) {
        const auto mode = get<std::string>(j, "penalty_mode", w);
        if (mode == "literal") {
            c.penalty_mode = PenaltyMode::kLiteral;
        } else if (mode == "reweight") {
            c.penalty_mode = PenaltyMode::kReweight;
        } else {
            fail(w + ": penalty_mode must be \"literal\" or \"reweight\"");
        }
    }
    if (c.iterations < 1 || c.batches < 1 || c.window < 2 || !(c.adam.lr > 0.0) || c.hidden.empty() ||
        !(c.holdout_fraction >= 0.0 && c.holdout_fraction < 1.0) || !(c.lr_final_fraction > 0.0) ||
        c.lambdas.pde < 0.0 || c.lambdas.current < 0.0 || c.lambdas.rocof < 0.0 || c.lambdas.rocov < 0.0 || c.voltage_base < 0.0) {
        fail(w + ": values out of range");
    }
    for (int h : c.hidden) {
        if (h < 1) {
            fail(w + ": hidden layer sizes must be positive");
        }
    }
    return c;
}

TrainConfig load_train_config(const std::string& path) { return parse_train_config(read_file(path)); }

}  // namespace gfc
