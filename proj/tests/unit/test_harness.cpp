#include "gfcsim/error.hpp"
#include "gfcsim/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace gfc;

namespace {

constexpr double kPi = std::numbers::pi;

RunRecord synthetic_record(std::size_t n, double period) {
    RunRecord r;
    r.scenario_id = "synthetic";
    r.gfc_names = {"GFC1", "GFC2"};
    r.rated_power = 500e3;
    r.nominal_frequency = 50.0;
    r.p_ref_nominal = 0.3;
    r.samples.resize(2);
    for (std::size_t k = 0; k < n; ++k) {
        r.time.push_back(static_cast<double>(k) * period);
        for (auto& trace : r.samples) {
            GfcSample s;
            s.frequency = 50.0;
            s.v_pu = 1.0;
            s.p_ref_effective = 0.3;
            s.features[kFeatP] = 0.3 * 500e3;
            s.i_dc = 100.0;
            s.i_switch_pu = 0.3;
            trace.push_back(s);
        }
    }
    return r;
}

std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "gfcsim-tests" / name;
    std::filesystem::remove_all(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("rate of change of a linear frequency ramp") {
    std::vector<double> f, v;
    for (int k = 0; k <= 500; ++k) {
        f.push_back(50.0 - 0.1 * (k * 0.01) / 5.0);
        v.push_back(1.0);
    }
    const RateSeries r = rocof_rocov(f, v, 0.01);
    for (std::size_t k = 0; k < f.size(); ++k) {
        REQUIRE(r.rocof[k] == doctest::Approx(-0.02).epsilon(1e-9));
        REQUIRE(std::abs(r.rocov[k]) < 1e-12);
    }
}

TEST_CASE("rate estimate of a sinusoid is within one percent of its peak") {
    std::vector<double> f, v;
    for (int k = 0; k <= 300; ++k) {
        const double t = k * 0.01;
        f.push_back(50.0 + 0.1 * std::sin(2 * kPi * t));
        v.push_back(1.0);
    }
    const RateSeries r = rocof_rocov(f, v, 0.01, 0.1);
    double peak = 0.0;
    for (std::size_t k = 10; k + 10 < f.size(); ++k) {
        peak = std::max(peak, std::abs(r.rocof[k]));
    }
    CHECK(peak == doctest::Approx(0.2 * kPi).epsilon(0.01));
}

TEST_CASE("short records") {
    try {
        centered_slope({1.0}, 0.01, 0.1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kRecordTooShort);
    }
    CHECK_THROWS_AS(centered_slope({1.0, 2.0, 3.0}, 0.01, 0.005), Error);
    const auto s = centered_slope({1.0, 2.0}, 0.01, 0.1);
    CHECK(s[0] == doctest::Approx(100.0));
}

TEST_CASE("metrics of a steady record") {
    const RunRecord r = synthetic_record(900, 0.01);
    const MetricsReport m = extract_metrics(r);
    REQUIRE(m.gfcs.size() == 2);
    CHECK(m.stable);
    CHECK_FALSE(m.diverged);
    CHECK(m.worst.peak_voltage_deviation == 0.0);
    CHECK(m.worst.peak_rocof == 0.0);
    CHECK(m.worst.peak_rocov == 0.0);
    CHECK(m.worst.setpoint_drift == doctest::Approx(0.0));
    CHECK(m.worst.final_frequency == doctest::Approx(50.0));
    CHECK(m.worst.frequency_nadir == 50.0);
    CHECK(m.worst.mean_power == doctest::Approx(0.3));
    const MetricsReport again = extract_metrics(r);
    CHECK(std::memcmp(&again.worst.final_frequency, &m.worst.final_frequency, sizeof(double)) == 0);
}

TEST_CASE("metrics flag a sagging end state") {
    RunRecord r = synthetic_record(900, 0.01);
    for (std::size_t k = 0; k < r.time.size(); ++k) {
        if (r.time[k] > 6.0) {
            r.samples[1][k].v_pu = 0.93;
            r.samples[1][k].p_ref_effective = 0.2;
        }
    }
    const MetricsReport m = extract_metrics(r);
    CHECK(m.gfcs[0].stable);
    CHECK_FALSE(m.gfcs[1].stable);
    CHECK_FALSE(m.stable);
    CHECK(m.worst.final_voltage_deviation == doctest::Approx(0.07));
    CHECK(m.worst.setpoint_drift == doctest::Approx(0.1));

    r.diverged = true;
    r.divergence_time = 7.0;
    CHECK_FALSE(extract_metrics(r).stable);
}

TEST_CASE("metrics csv shape") {
    const MetricsReport m = extract_metrics(synthetic_record(900, 0.01));
    const auto header = metrics_csv_header();
    const auto rows = metrics_csv_rows(m);
    CHECK(header.front() == "scenario");
    CHECK(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.size() == header.size());
    }
    CHECK(rows.back()[2] == "worst");
}

TEST_CASE("sweep draws stay inside the configured ranges") {
    SweepConfig cfg;
    cfg.runs = 10000;
    cfg.seed = 42;
    const auto draws = draw_sweep(cfg);
    REQUIRE(draws.size() == 10000);
    for (const auto& d : draws) {
        REQUIRE(d.mg_load >= 0.1 * 6e6);
        REQUIRE(d.mg_load <= 1.0 * 6e6);
        REQUIRE(d.local_loads.size() == 4);
        for (double l : d.local_loads) {
            REQUIRE(l >= 0.0);
            REQUIRE(l <= 0.9 * 1.5e6);
        }
    }
    const auto again = draw_sweep(cfg);
    CHECK(again[9999].mg_load == draws[9999].mg_load);
    CHECK(again[9999].scenario_id == draws[9999].scenario_id);
}

TEST_CASE("bisection over load") {
    const BoundarySearch b = bisect_stability([](double load) { return load < 6.21e6; }, 5e6, 7e6, 1e-3);
    CHECK(b.stable_load < 6.21e6);
    CHECK(b.unstable_load >= 6.21e6);
    CHECK(b.unstable_load / b.stable_load <= 1.001);
    CHECK_THROWS_AS(bisect_stability([](double) { return true; }, 5e6, 7e6, 1e-3), Error);
}

TEST_CASE("controller names") {
    CHECK(parse_controller_kind("droop") == ControllerKind::kDroop);
    CHECK(parse_controller_kind("droop-classic") == ControllerKind::kDroop);
    CHECK(parse_controller_kind("droop-with-ref11-limiter") == ControllerKind::kRef11);
    CHECK(parse_controller_kind("pinn") == ControllerKind::kPinn);
    CHECK_THROWS_AS(parse_controller_kind("vsm"), Error);
    CHECK(controller_label(ControllerKind::kRef11).find("reconstruction") != std::string::npos);
    CHECK_THROWS_AS(make_controller_factory(ControllerKind::kPinn), Error);
}

TEST_CASE("scenario validation") {
    ScenarioSpec spec = case_scenario(5.94e6);
    CHECK(spec.id == "mg-5.94-MVA");
    CHECK_NOTHROW(spec.validate());
    spec.events.push_back({10.0, Event::Kind::kBreaker, "CB1", true});
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = case_scenario(5.94e6);
    spec.events.push_back({1.0, Event::Kind::kBreaker, "CB7", true});
    CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("the limiter variant matches droop below its threshold") {
    ScenarioSpec spec = case_scenario(3e6);
    spec.sim.horizon = 1.5;
    spec.events.resize(4);
    const RunRecord droop = run_scenario(spec);
    spec.controller = ControllerKind::kRef11;
    const RunRecord ref11 = run_scenario(spec);
    REQUIRE(droop.time.size() == ref11.time.size());
    for (std::size_t k = 0; k < droop.time.size(); ++k) {
        REQUIRE(ref11.samples[0][k].v_dc == doctest::Approx(droop.samples[0][k].v_dc).epsilon(1e-5));
        REQUIRE(ref11.samples[0][k].p_ref_effective == doctest::Approx(0.3).epsilon(1e-3));
    }
}

TEST_CASE("comparing a controller with itself gives zero deltas") {
    ScenarioSpec spec = case_scenario(5.94e6);
    spec.sim.horizon = 1.5;
    spec.events.resize(4);
    MetricsOptions opt;
    opt.disturbance_time = 0.8;
    const Comparison c = compare(spec, {ControllerKind::kDroop, ControllerKind::kDroop}, nullptr, opt);
    REQUIRE(c.deltas.size() == 1);
    CHECK(c.deltas[0].frequency == 0.0);
    CHECK(c.deltas[0].power == 0.0);
    CHECK(c.deltas[0].peak_deviation == 0.0);
    CHECK(c.deltas[0].peak_rocof == 0.0);
    CHECK(c.deltas[0].setpoint_drift == 0.0);
}

TEST_CASE("a one-run sweep yields 900 samples per GFC and reproduces bit for bit") {
    SweepConfig cfg;
    cfg.runs = 1;
    cfg.seed = 3;
    cfg.mg_fraction_min = cfg.mg_fraction_max = 0.99;
    cfg.local_fraction_min = cfg.local_fraction_max = 0.25;
    const Dataset a = generate_dataset(cfg);
    REQUIRE(a.set.trajectories.size() == 4);
    for (const auto& t : a.set.trajectories) {
        CHECK(t.size() == 900);
    }
    CHECK(a.runs[0].draw.mg_load == doctest::Approx(5.94e6));

    const std::string d1 = temp_dir("ds1");
    save_dataset(a, d1);
    const Dataset back = load_dataset(d1);
    REQUIRE(back.set.trajectories.size() == 4);
    CHECK(std::memcmp(back.set.trajectories[2].features.data(), a.set.trajectories[2].features.data(),
                      900 * sizeof(FeatureVector)) == 0);
    CHECK(back.set.trajectories[2].theta == a.set.trajectories[2].theta);

    const Dataset b = generate_dataset(cfg);
    const std::string d2 = temp_dir("ds2");
    save_dataset(b, d2);
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(d1 + "/trajectories.csv") == slurp(d2 + "/trajectories.csv"));
    CHECK(slurp(d1 + "/manifest.json") == slurp(d2 + "/manifest.json"));
}
