#include "gfcsim/gfcsim.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiverged = 1;
constexpr int kExitConfig = 2;

int exit_code(gfcsim_status status) {
    switch (status) {
        case GFCSIM_OK:
            return kExitOk;
        case GFCSIM_ERR_DIVERGED:
        case GFCSIM_ERR_NON_FINITE_STATE:
        case GFCSIM_ERR_ALL_RUNS_DIVERGED:
            return kExitDiverged;
        default:
            return kExitConfig;
    }
}

// Thrown out of a subcommand to leave with a given exit code.
struct Exit {
    int code;
};

void check(gfcsim_status status, const char* what) {
    if (status != GFCSIM_OK) {
        std::fprintf(stderr, "gfcsim: %s failed [%s]: %s\n", what, gfcsim_status_name(status), gfcsim_last_error());
        throw Exit{exit_code(status)};
    }
}

template <typename T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(ptr); }
    T** out() { return &ptr; }
    T* get() const { return ptr; }
};

using Scenario = Handle<gfcsim_scenario, gfcsim_scenario_free>;
using Model = Handle<gfcsim_model, gfcsim_model_free>;
using Record = Handle<gfcsim_record, gfcsim_record_free>;
using Sweep = Handle<gfcsim_sweep, gfcsim_sweep_free>;
using Dataset = Handle<gfcsim_dataset, gfcsim_dataset_free>;
using TrainConfig = Handle<gfcsim_train_config, gfcsim_train_config_free>;

void print_metrics(const char* label, const gfcsim_record* rec) {
    gfcsim_metrics m{};
    check(gfcsim_record_metrics(rec, &m), "metrics");
    std::printf("%-8s stable=%d diverged=%d nadir=%.4f Hz f_final=%.4f Hz peak_rocof=%.4f Hz/s "
                "peak_dev=%.4f pu final_dev=%.4f pu P=%.4f pu drift=%.4f pu\n",
                label, m.stable, m.diverged, m.frequency_nadir_hz, m.final_frequency_hz, m.peak_rocof_hz_per_s,
                m.peak_voltage_deviation_pu, m.final_voltage_deviation_pu, m.mean_power_pu, m.setpoint_drift_pu);
}

int finish_run(const gfcsim_record* rec) {
    int diverged = 0;
    double t_div = NAN;
    check(gfcsim_record_info(rec, nullptr, nullptr, &diverged, &t_div), "record");
    if (diverged) {
        std::fprintf(stderr, "gfcsim: run diverged at t=%.4f s\n", t_div);
        return kExitDiverged;
    }
    return kExitOk;
}

struct SimulateArgs {
    std::string scenario, controller = "droop", model, out;
};

int cmd_simulate(const SimulateArgs& a) {
    Scenario sc;
    check(gfcsim_scenario_load(a.scenario.c_str(), sc.out()), "loading the scenario");
    check(gfcsim_scenario_set_controller(sc.get(), a.controller.c_str()), "selecting the controller");
    Model model;
    if (!a.model.empty()) {
        check(gfcsim_model_load(a.model.c_str(), model.out()), "loading the model");
    }
    Record rec;
    check(gfcsim_run(sc.get(), model.get(), rec.out()), "simulation");
    check(gfcsim_record_write_csv(rec.get(), a.out.c_str()), "writing the record");
    print_metrics(a.controller.c_str(), rec.get());
    return finish_run(rec.get());
}

struct GenDataArgs {
    std::string sweep, out;
    std::size_t runs = 50;
    std::uint64_t seed = 1;
};

void on_sweep_run(const char* id, double mg_load_va, int diverged, void*) {
    std::fprintf(stderr, "%s  MG load %.3f MVA  %s\n", id, mg_load_va / 1e6, diverged ? "diverged" : "ok");
}

int cmd_gen_data(const GenDataArgs& a) {
    Sweep sw;
    check(gfcsim_sweep_load(a.sweep.c_str(), sw.out()), "loading the sweep");
    check(gfcsim_sweep_set_runs(sw.get(), a.runs, a.seed), "configuring the sweep");
    Dataset ds;
    check(gfcsim_generate_dataset(sw.get(), on_sweep_run, nullptr, ds.out()), "data generation");
    check(gfcsim_dataset_save(ds.get(), a.out.c_str()), "writing the dataset");
    std::size_t traj = 0, samples = 0, runs = 0, diverged = 0;
    check(gfcsim_dataset_info(ds.get(), &traj, &samples, &runs, &diverged), "dataset");
    std::printf("%zu runs (%zu diverged, excluded): %zu trajectories, %zu samples -> %s\n", runs, diverged, traj,
                samples, a.out.c_str());
    return kExitOk;
}

struct TrainArgs {
    std::string data, config, out, log;
};

void on_train_iteration(int iteration, double total, double heldout, void*) {
    if (iteration % 100 == 0) {
        if (std::isnan(heldout)) {
            std::fprintf(stderr, "iteration %5d  loss %.6g\n", iteration, total);
        } else {
            std::fprintf(stderr, "iteration %5d  loss %.6g  held-out MSE %.6g\n", iteration, total, heldout);
        }
    }
}

int cmd_train(const TrainArgs& a) {
    Dataset ds;
    check(gfcsim_dataset_load(a.data.c_str(), ds.out()), "loading the dataset");
    TrainConfig cfg;
    check(gfcsim_train_config_load(a.config.c_str(), cfg.out()), "loading the training config");
    const std::string log = a.log.empty() ? a.out + ".log.csv" : a.log;
    Model model;
    check(gfcsim_train(ds.get(), cfg.get(), log.c_str(), on_train_iteration, nullptr, model.out()), "training");
    check(gfcsim_model_save(model.get(), a.out.c_str()), "writing the model");
    double train_mse = NAN, heldout_mse = NAN;
    int iterations = 0;
    check(gfcsim_model_info(model.get(), &train_mse, &heldout_mse, &iterations), "model");
    std::printf("%d iterations: training MSE %.6g, held-out MSE %.6g -> %s (log %s)\n", iterations, train_mse,
                heldout_mse, a.out.c_str(), log.c_str());
    return kExitOk;
}

struct EvaluateArgs {
    std::string scenario, model, report, out;
};

int cmd_evaluate(const EvaluateArgs& a) {
    Scenario sc;
    check(gfcsim_scenario_load(a.scenario.c_str(), sc.out()), "loading the scenario");
    check(gfcsim_scenario_set_controller(sc.get(), "pinn"), "selecting the controller");
    Model model;
    check(gfcsim_model_load(a.model.c_str(), model.out()), "loading the model");
    Record rec;
    check(gfcsim_run(sc.get(), model.get(), rec.out()), "simulation");
    check(gfcsim_record_write_metrics_csv(rec.get(), a.report.c_str()), "writing the report");
    if (!a.out.empty()) {
        check(gfcsim_record_write_csv(rec.get(), a.out.c_str()), "writing the record");
    }
    print_metrics("pinn", rec.get());
    return finish_run(rec.get());
}

struct CompareArgs {
    std::string scenario, controllers = "droop,ref11,pinn", model, report;
};

int cmd_compare(const CompareArgs& a) {
    Scenario sc;
    check(gfcsim_scenario_load(a.scenario.c_str(), sc.out()), "loading the scenario");
    Model model;
    if (!a.model.empty()) {
        check(gfcsim_model_load(a.model.c_str(), model.out()), "loading the model");
    }
    int any_diverged = 0;
    check(gfcsim_compare(sc.get(), a.controllers.c_str(), model.get(), a.report.c_str(), &any_diverged),
          "comparison");
    std::printf("comparison of %s written to %s\n", a.controllers.c_str(), a.report.c_str());
    if (any_diverged) {
        std::fprintf(stderr, "gfcsim: at least one controller diverged\n");
        return kExitDiverged;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grid-forming converter microgrid simulator with a PINN controller"};
    app.set_version_flag("--version", std::string(gfcsim_version()));
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run one scenario and write its record CSV");
    simulate->add_option("--scenario", sim.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--controller", sim.controller, "Controller")
        ->check(CLI::IsMember({"droop", "ref11", "pinn"}))
        ->capture_default_str();
    simulate->add_option("--model", sim.model, "PINN model file")->check(CLI::ExistingFile);
    simulate->add_option("--out", sim.out, "Record CSV")->required();

    GenDataArgs gen;
    auto* gen_data = app.add_subcommand("gen-data", "Generate a training set from a droop load sweep");
    gen_data->add_option("--sweep", gen.sweep, "Sweep JSON file")->required()->check(CLI::ExistingFile);
    gen_data->add_option("--runs", gen.runs, "Number of runs")->check(CLI::PositiveNumber)->capture_default_str();
    gen_data->add_option("--seed", gen.seed, "Sweep seed")->capture_default_str();
    gen_data->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train a PINN model on a generated dataset");
    train->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--config", tr.config, "Training config JSON file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", tr.out, "Model file")->required();
    train->add_option("--log", tr.log, "Training log CSV (default <out>.log.csv)");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Run a scenario under the PINN controller and report metrics");
    evaluate->add_option("--scenario", ev.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--model", ev.model, "PINN model file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--report", ev.report, "Metrics CSV")->required();
    evaluate->add_option("--out", ev.out, "Optional record CSV");

    CompareArgs cmp;
    auto* compare = app.add_subcommand("compare", "Run several controllers on one scenario and report deltas");
    compare->add_option("--scenario", cmp.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    compare->add_option("--controllers", cmp.controllers, "Comma-separated controllers")->capture_default_str();
    compare->add_option("--model", cmp.model, "PINN model file")->check(CLI::ExistingFile);
    compare->add_option("--report", cmp.report, "Comparison CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*simulate) {
            return cmd_simulate(sim);
        }
        if (*gen_data) {
            return cmd_gen_data(gen);
        }
        if (*train) {
            return cmd_train(tr);
        }
        if (*evaluate) {
            return cmd_evaluate(ev);
        }
        if (*compare) {
            return cmd_compare(cmp);
        }
    } catch (const Exit& e) {
        return e.code;
    }
    return kExitConfig;
}
