#include "gfcsim/gfcsim.h"

#include "gfcsim/config.hpp"
#include "gfcsim/error.hpp"
#include "gfcsim/harness.hpp"
#include "gfcsim/pinn.hpp"

#include <cmath>
#include <exception>
#include <memory>
#include <new>
#include <sstream>
#include <string>

struct gfcsim_scenario {
    gfc::ScenarioSpec spec;
};

struct gfcsim_model {
    std::shared_ptr<const gfc::PinnModel> model;
};

struct gfcsim_record {
    gfc::RunRecord record;
    gfc::ControllerKind kind{};
};

struct gfcsim_sweep {
    gfc::SweepConfig config;
};

struct gfcsim_dataset {
    gfc::Dataset data;
};

struct gfcsim_train_config {
    gfc::TrainConfig config;
};

namespace {

thread_local std::string g_last_error;

gfcsim_status fail(gfcsim_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Runs fn and converts exceptions into status codes.
template <typename Fn>
gfcsim_status guarded(Fn&& fn) {
    try {
        fn();
        return GFCSIM_OK;
    } catch (const gfc::Error& e) {
        return fail(static_cast<gfcsim_status>(static_cast<int>(e.code())), e.what());
    } catch (const std::bad_alloc&) {
        return fail(GFCSIM_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(GFCSIM_ERR_INTERNAL, e.what());
    }
}

#define GFCSIM_REQUIRE(cond)                                                        \
    do {                                                                            \
        if (!(cond)) {                                                              \
            return fail(GFCSIM_ERR_INVALID_ARGUMENT, "invalid argument: " #cond);  \
        }                                                                           \
    } while (0)

std::shared_ptr<const gfc::PinnModel> model_of(const gfcsim_model* m) {
    return m ? m->model : nullptr;
}

}  // namespace

extern "C" {

const char* gfcsim_version(void) { return "1.0.0"; }

const char* gfcsim_status_name(gfcsim_status status) {
    switch (status) {
        case GFCSIM_OK:
            return "Ok";
        case GFCSIM_ERR_INVALID_ARGUMENT:
            return "InvalidArgument";
        case GFCSIM_ERR_INTERNAL:
            return "Internal";
        default:
            if (status >= GFCSIM_ERR_NON_FINITE_STATE && status <= GFCSIM_ERR_IO) {
                return gfc::error_code_name(static_cast<gfc::ErrorCode>(status));
            }
            return "Unknown";
    }
}

const char* gfcsim_last_error(void) { return g_last_error.c_str(); }

gfcsim_status gfcsim_scenario_load(const char* path, gfcsim_scenario** out) {
    GFCSIM_REQUIRE(path && out);
    return guarded([&] { *out = new gfcsim_scenario{gfc::load_scenario(path)}; });
}

gfcsim_status gfcsim_scenario_default(double mg_load_va, gfcsim_scenario** out) {
    GFCSIM_REQUIRE(out);
    return guarded([&] { *out = new gfcsim_scenario{gfc::case_scenario(mg_load_va)}; });
}

gfcsim_status gfcsim_scenario_set_controller(gfcsim_scenario* s, const char* kind) {
    GFCSIM_REQUIRE(s && kind);
    return guarded([&] { s->spec.controller = gfc::parse_controller_kind(kind); });
}

gfcsim_status gfcsim_scenario_set_horizon(gfcsim_scenario* s, double horizon_s) {
    GFCSIM_REQUIRE(s && horizon_s > 0.0);
    return guarded([&] {
        gfc::ScenarioSpec next = s->spec;
        next.sim.horizon = horizon_s;
        std::erase_if(next.events, [&](const gfc::Event& e) { return e.time > horizon_s; });
        next.validate();
        s->spec = std::move(next);
    });
}

void gfcsim_scenario_free(gfcsim_scenario* s) { delete s; }

gfcsim_status gfcsim_run(const gfcsim_scenario* s, const gfcsim_model* model, gfcsim_record** out) {
    GFCSIM_REQUIRE(s && out);
    return guarded([&] {
        auto rec = std::make_unique<gfcsim_record>();
        rec->record = gfc::run_scenario(s->spec, model_of(model));
        rec->kind = s->spec.controller;
        *out = rec.release();
    });
}

gfcsim_status gfcsim_record_info(const gfcsim_record* r, size_t* samples, size_t* gfcs, int* diverged,
                                 double* divergence_time_s) {
    GFCSIM_REQUIRE(r);
    if (samples) {
        *samples = r->record.time.size();
    }
    if (gfcs) {
        *gfcs = r->record.samples.size();
    }
    if (diverged) {
        *diverged = r->record.diverged ? 1 : 0;
    }
    if (divergence_time_s) {
        *divergence_time_s = r->record.divergence_time;
    }
    return GFCSIM_OK;
}

gfcsim_status gfcsim_record_metrics(const gfcsim_record* r, gfcsim_metrics* out) {
    GFCSIM_REQUIRE(r && out);
    return guarded([&] {
        const gfc::MetricsReport rep = gfc::extract_metrics(r->record);
        const gfc::GfcMetrics& w = rep.worst;
        *out = gfcsim_metrics{w.frequency_nadir,
                              w.final_frequency,
                              w.peak_rocof,
                              w.peak_rocov,
                              w.peak_voltage_deviation,
                              w.final_voltage_deviation,
                              w.mean_power,
                              w.setpoint_drift,
                              w.peak_switch_current,
                              w.peak_dc_current,
                              w.final_dc_current,
                              rep.stable ? 1 : 0,
                              rep.diverged ? 1 : 0,
                              rep.divergence_time};
    });
}

gfcsim_status gfcsim_record_write_csv(const gfcsim_record* r, const char* path) {
    GFCSIM_REQUIRE(r && path);
    return guarded([&] { gfc::write_record_csv(r->record, path); });
}

gfcsim_status gfcsim_record_write_metrics_csv(const gfcsim_record* r, const char* path) {
    GFCSIM_REQUIRE(r && path);
    return guarded([&] {
        gfc::MetricsReport rep = gfc::extract_metrics(r->record);
        rep.controller = gfc::controller_label(r->kind);
        gfc::write_metrics_csv({rep}, path);
    });
}

void gfcsim_record_free(gfcsim_record* r) { delete r; }

gfcsim_status gfcsim_compare(const gfcsim_scenario* s, const char* controllers, const gfcsim_model* model,
                             const char* report_path, int* any_diverged) {
    GFCSIM_REQUIRE(s && controllers && report_path);
    return guarded([&] {
        std::vector<gfc::ControllerKind> kinds;
        std::stringstream ss(controllers);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                kinds.push_back(gfc::parse_controller_kind(item));
            }
        }
        const gfc::Comparison cmp = gfc::compare(s->spec, kinds, model_of(model));
        gfc::write_comparison_csv(cmp, report_path);
        if (any_diverged) {
            *any_diverged = 0;
            for (const auto& e : cmp.entries) {
                *any_diverged |= e.record.diverged ? 1 : 0;
            }
        }
    });
}

gfcsim_status gfcsim_sweep_load(const char* path, gfcsim_sweep** out) {
    GFCSIM_REQUIRE(path && out);
    return guarded([&] { *out = new gfcsim_sweep{gfc::load_sweep(path)}; });
}

gfcsim_status gfcsim_sweep_default(gfcsim_sweep** out) {
    GFCSIM_REQUIRE(out);
    return guarded([&] { *out = new gfcsim_sweep{gfc::SweepConfig{}}; });
}

gfcsim_status gfcsim_sweep_set_runs(gfcsim_sweep* s, size_t runs, uint64_t seed) {
    GFCSIM_REQUIRE(s && runs >= 1);
    s->config.runs = runs;
    s->config.seed = seed;
    return GFCSIM_OK;
}

gfcsim_status gfcsim_sweep_set_horizon(gfcsim_sweep* s, double horizon_s) {
    GFCSIM_REQUIRE(s && horizon_s > 0.0);
    return guarded([&] {
        gfc::SweepConfig next = s->config;
        next.sim.horizon = horizon_s;
        std::erase_if(next.events, [&](const gfc::Event& e) { return e.time > horizon_s; });
        next.validate();
        s->config = std::move(next);
    });
}

void gfcsim_sweep_free(gfcsim_sweep* s) { delete s; }

gfcsim_status gfcsim_generate_dataset(const gfcsim_sweep* s, gfcsim_sweep_progress progress, void* user,
                                      gfcsim_dataset** out) {
    GFCSIM_REQUIRE(s && out);
    return guarded([&] {
        auto d = std::make_unique<gfcsim_dataset>();
        d->data = gfc::generate_dataset(s->config, [&](const gfc::SweepRun& r) {
            if (progress) {
                progress(r.draw.scenario_id.c_str(), r.draw.mg_load, r.diverged ? 1 : 0, user);
            }
        });
        *out = d.release();
    });
}

gfcsim_status gfcsim_dataset_save(const gfcsim_dataset* d, const char* dir) {
    GFCSIM_REQUIRE(d && dir);
    return guarded([&] { gfc::save_dataset(d->data, dir); });
}

gfcsim_status gfcsim_dataset_load(const char* dir, gfcsim_dataset** out) {
    GFCSIM_REQUIRE(dir && out);
    return guarded([&] { *out = new gfcsim_dataset{gfc::load_dataset(dir)}; });
}

gfcsim_status gfcsim_dataset_info(const gfcsim_dataset* d, size_t* trajectories, size_t* samples, size_t* runs,
                                  size_t* diverged_runs) {
    GFCSIM_REQUIRE(d);
    if (trajectories) {
        *trajectories = d->data.set.trajectories.size();
    }
    if (samples) {
        *samples = d->data.set.sample_count();
    }
    if (runs) {
        *runs = d->data.runs.size();
    }
    if (diverged_runs) {
        *diverged_runs = 0;
        for (const auto& r : d->data.runs) {
            *diverged_runs += r.diverged ? 1 : 0;
        }
    }
    return GFCSIM_OK;
}

void gfcsim_dataset_free(gfcsim_dataset* d) { delete d; }

gfcsim_status gfcsim_train_config_load(const char* path, gfcsim_train_config** out) {
    GFCSIM_REQUIRE(path && out);
    return guarded([&] { *out = new gfcsim_train_config{gfc::load_train_config(path)}; });
}

gfcsim_status gfcsim_train_config_default(gfcsim_train_config** out) {
    GFCSIM_REQUIRE(out);
    return guarded([&] { *out = new gfcsim_train_config{gfc::TrainConfig{}}; });
}

gfcsim_status gfcsim_train_config_set_iterations(gfcsim_train_config* c, int iterations) {
    GFCSIM_REQUIRE(c && iterations >= 1);
    c->config.iterations = iterations;
    return GFCSIM_OK;
}

void gfcsim_train_config_free(gfcsim_train_config* c) { delete c; }

gfcsim_status gfcsim_train(const gfcsim_dataset* d, const gfcsim_train_config* c, const char* log_path,
                           gfcsim_train_progress progress, void* user, gfcsim_model** out) {
    GFCSIM_REQUIRE(d && c && out);
    return guarded([&] {
        gfc::TrainResult result = gfc::train(d->data.set, c->config, [&](const gfc::TrainLogRow& row) {
            if (progress) {
                progress(row.iteration, row.loss.total, row.heldout_mse, user);
            }
        });
        if (log_path) {
            gfc::write_train_log_csv(result.log, log_path);
        }
        *out = new gfcsim_model{std::make_shared<const gfc::PinnModel>(std::move(result.model))};
    });
}

gfcsim_status gfcsim_model_load(const char* path, gfcsim_model** out) {
    GFCSIM_REQUIRE(path && out);
    return guarded([&] { *out = new gfcsim_model{std::make_shared<const gfc::PinnModel>(gfc::load_model(path))}; });
}

gfcsim_status gfcsim_model_save(const gfcsim_model* m, const char* path) {
    GFCSIM_REQUIRE(m && path);
    return guarded([&] { gfc::save_model(*m->model, path); });
}

gfcsim_status gfcsim_model_predict(const gfcsim_model* m, const double features[GFCSIM_FEATURE_COUNT],
                                   double out_dq[2]) {
    GFCSIM_REQUIRE(m && features && out_dq);
    return guarded([&] {
        gfc::FeatureVector x{};
        std::copy(features, features + gfc::kFeatureCount, x.begin());
        const auto y = m->model->predict_dq(x);
        out_dq[0] = y[0];
        out_dq[1] = y[1];
    });
}

gfcsim_status gfcsim_model_info(const gfcsim_model* m, double* final_train_mse, double* final_heldout_mse,
                                int* iterations) {
    GFCSIM_REQUIRE(m);
    if (final_train_mse) {
        *final_train_mse = m->model->meta.final_train_mse;
    }
    if (final_heldout_mse) {
        *final_heldout_mse = m->model->meta.final_heldout_mse;
    }
    if (iterations) {
        *iterations = m->model->meta.iterations;
    }
    return GFCSIM_OK;
}

void gfcsim_model_free(gfcsim_model* m) { delete m; }

}  // extern "C"
