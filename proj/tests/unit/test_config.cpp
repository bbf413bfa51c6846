#include "gfcsim/config.hpp"
#include "gfcsim/error.hpp"

#include <doctest.h>

using namespace gfc;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("default topology round trips through json") {
    const NetworkModel a = parse_topology(R"("default")");
    const NetworkModel b = parse_topology(topology_to_json(a));
    CHECK(b.buses == a.buses);
    CHECK(b.branches.size() == a.branches.size());
    CHECK(b.loads.size() == a.loads.size());
    CHECK(b.gfcs.size() == 4);
    CHECK(b.gains.k_vp == a.gains.k_vp);
    CHECK(b.converter.dc_current_max == a.converter.dc_current_max);
    CHECK(topology_to_json(b) == topology_to_json(a));
}

TEST_CASE("scenario files") {
    const ScenarioSpec s = parse_scenario(R"({
        "id": "case2",
        "topology": "default",
        "mg_load": {"apparent_power": 5.942e6, "power_factor": 0.97},
        "controller": "pinn",
        "model": "models/pinn.json",
        "horizon": 9.0
    })", "/data");
    CHECK(s.id == "case2");
    CHECK(s.controller == ControllerKind::kPinn);
    CHECK(s.model_path == "/data/models/pinn.json");
    CHECK(group_load(s.topology, "mg") == doctest::Approx(5.942e6));
    CHECK(s.events.size() == 5);

    const ScenarioSpec t = parse_scenario(R"({
        "timeline": [
            {"time": 0.5, "breaker": "CB2", "state": "close"},
            {"time": 1.0, "load_group": "mg", "apparent_power": 3e6, "power_factor": 0.9},
            {"time": 1.5, "load": "L1", "connected": false}
        ],
        "horizon": 2.0
    })");
    REQUIRE(t.events.size() == 3);
    CHECK(t.events[0].kind == Event::Kind::kBreaker);
    CHECK(t.events[1].kind == Event::Kind::kLoadGroup);
    CHECK(t.events[2].kind == Event::Kind::kLoadConnect);
    CHECK_FALSE(t.events[2].closed);
}

TEST_CASE("scenario errors name the problem") {
    CHECK(code_of([] { parse_scenario(R"({"horizon": 9, "colour": 1})"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { parse_scenario("{not json"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { parse_scenario(R"({"controller": "fuzzy"})"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { parse_scenario(R"({"dt": 3e-5})"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { parse_scenario(R"({"timeline": [{"time": 20, "breaker": "CB1", "state": "open"}]})"); }) ==
          ErrorCode::kConfig);
    CHECK(code_of([] { load_scenario("/nonexistent/scenario.json"); }) == ErrorCode::kIo);
    try {
        parse_scenario(R"({"colour": 1})");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("colour") != std::string::npos);
    }
}

TEST_CASE("sweep files") {
    const SweepConfig c = parse_sweep(R"({"runs": 7, "seed": 5, "mg_fraction": [0.2, 0.8], "excitation": 0.01})");
    CHECK(c.runs == 7);
    CHECK(c.seed == 5);
    CHECK(c.mg_fraction_min == 0.2);
    CHECK(c.mg_fraction_max == 0.8);
    CHECK(c.excitation == 0.01);
    CHECK(parse_sweep("{}").excitation == 0.02);
    CHECK(code_of([] { parse_sweep(R"({"mg_fraction": [0.9, 0.1]})"); }) == ErrorCode::kConfig);
}

TEST_CASE("training files") {
    const TrainConfig c = parse_train_config(R"({
        "iterations": 100,
        "learning_rate": 0.002,
        "hidden": [16, 16],
        "lambda": {"pde": 0.01, "current": 1.0, "rocof": 0.1, "rocov": 0.1},
        "penalty_mode": "reweight",
        "physics_units": "normalized"
    })");
    CHECK(c.iterations == 100);
    CHECK(c.adam.lr == 0.002);
    CHECK(c.hidden == std::vector<int>{16, 16});
    CHECK(c.lambdas.pde == 0.01);
    CHECK(c.penalty_mode == PenaltyMode::kReweight);
    CHECK(c.physics_units == PhysicsUnits::kNormalized);
    CHECK(code_of([] { parse_train_config(R"({"penalty_mode": "soft"})"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { parse_train_config(R"({"lambda": {"pde": -1}})"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { parse_train_config(R"({"hidden": [0]})"); }) == ErrorCode::kConfig);
}
