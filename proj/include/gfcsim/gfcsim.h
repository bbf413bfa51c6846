#ifndef GFCSIM_H
#define GFCSIM_H

/*
 * C interface of the gfcsim library: scenarios, closed-loop runs, metrics,
 * training-data sweeps, PINN training and models.
 *
 * Objects are opaque handles created by *_load / *_default / *_create calls and
 * released with the matching *_free (which accept NULL). Every fallible call
 * returns a gfcsim_status; on failure gfcsim_last_error() describes the cause
 * for the calling thread until its next failing call.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GFCSIM_API __declspec(dllexport)
#else
#define GFCSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gfcsim_status {
    GFCSIM_OK = 0,
    GFCSIM_ERR_NON_FINITE_STATE = 1,
    GFCSIM_ERR_INVALID_PARAMS = 2,
    GFCSIM_ERR_INVALID_LOAD = 3,
    GFCSIM_ERR_UNKNOWN_BREAKER = 4,
    GFCSIM_ERR_SINGULAR_NETWORK = 5,
    GFCSIM_ERR_SHAPE_MISMATCH = 6,
    GFCSIM_ERR_EMPTY_BATCH = 7,
    GFCSIM_ERR_TRAJECTORY_TOO_SHORT = 8,
    GFCSIM_ERR_DIVERGED = 9,
    GFCSIM_ERR_CORRUPT_MODEL = 10,
    GFCSIM_ERR_RECORD_TOO_SHORT = 11,
    GFCSIM_ERR_ALL_RUNS_DIVERGED = 12,
    GFCSIM_ERR_CONFIG = 13,
    GFCSIM_ERR_IO = 14,
    GFCSIM_ERR_INVALID_ARGUMENT = 100,
    GFCSIM_ERR_INTERNAL = 101
} gfcsim_status;

#define GFCSIM_FEATURE_COUNT 18

typedef struct gfcsim_scenario gfcsim_scenario;
typedef struct gfcsim_model gfcsim_model;
typedef struct gfcsim_record gfcsim_record;
typedef struct gfcsim_sweep gfcsim_sweep;
typedef struct gfcsim_dataset gfcsim_dataset;
typedef struct gfcsim_train_config gfcsim_train_config;

/* Worst-GFC metrics of a run. NaN where the run ended too early. */
typedef struct gfcsim_metrics {
    double frequency_nadir_hz;
    double final_frequency_hz;
    double peak_rocof_hz_per_s;
    double peak_rocov_pu_per_s;
    double peak_voltage_deviation_pu;
    double final_voltage_deviation_pu;
    double mean_power_pu;
    double setpoint_drift_pu;
    double peak_switch_current_pu;
    double peak_dc_current_a;
    double final_dc_current_a;
    int stable;
    int diverged;
    double divergence_time_s;
} gfcsim_metrics;

GFCSIM_API const char* gfcsim_version(void);
GFCSIM_API const char* gfcsim_status_name(gfcsim_status status);
GFCSIM_API const char* gfcsim_last_error(void);

/* Scenarios */
GFCSIM_API gfcsim_status gfcsim_scenario_load(const char* path, gfcsim_scenario** out);
/* Default feeder and timeline with the microgrid load group at mg_load_va. */
GFCSIM_API gfcsim_status gfcsim_scenario_default(double mg_load_va, gfcsim_scenario** out);
/* kind: "droop", "ref11" or "pinn". */
GFCSIM_API gfcsim_status gfcsim_scenario_set_controller(gfcsim_scenario* s, const char* kind);
GFCSIM_API gfcsim_status gfcsim_scenario_set_horizon(gfcsim_scenario* s, double horizon_s);
GFCSIM_API void gfcsim_scenario_free(gfcsim_scenario* s);

/* Closed-loop runs. model may be NULL unless the controller is "pinn" and the
 * scenario names no model file. A diverged run still returns GFCSIM_OK with a
 * record whose diverged flag is set. */
GFCSIM_API gfcsim_status gfcsim_run(const gfcsim_scenario* s, const gfcsim_model* model, gfcsim_record** out);
GFCSIM_API gfcsim_status gfcsim_record_info(const gfcsim_record* r, size_t* samples, size_t* gfcs, int* diverged,
                                            double* divergence_time_s);
GFCSIM_API gfcsim_status gfcsim_record_metrics(const gfcsim_record* r, gfcsim_metrics* out);
GFCSIM_API gfcsim_status gfcsim_record_write_csv(const gfcsim_record* r, const char* path);
/* Per-GFC and worst-GFC metrics rows. */
GFCSIM_API gfcsim_status gfcsim_record_write_metrics_csv(const gfcsim_record* r, const char* path);
GFCSIM_API void gfcsim_record_free(gfcsim_record* r);

/* Runs every controller of the comma-separated list on the scenario and writes
 * side-by-side metrics with deltas against the first. any_diverged may be NULL. */
GFCSIM_API gfcsim_status gfcsim_compare(const gfcsim_scenario* s, const char* controllers, const gfcsim_model* model,
                                        const char* report_path, int* any_diverged);

/* Training-data sweeps */
GFCSIM_API gfcsim_status gfcsim_sweep_load(const char* path, gfcsim_sweep** out);
GFCSIM_API gfcsim_status gfcsim_sweep_default(gfcsim_sweep** out);
GFCSIM_API gfcsim_status gfcsim_sweep_set_runs(gfcsim_sweep* s, size_t runs, uint64_t seed);
GFCSIM_API gfcsim_status gfcsim_sweep_set_horizon(gfcsim_sweep* s, double horizon_s);
GFCSIM_API void gfcsim_sweep_free(gfcsim_sweep* s);

/* Called after each sweep run: scenario id, MG load in VA, diverged flag. */
typedef void (*gfcsim_sweep_progress)(const char* scenario_id, double mg_load_va, int diverged, void* user);
GFCSIM_API gfcsim_status gfcsim_generate_dataset(const gfcsim_sweep* s, gfcsim_sweep_progress progress, void* user,
                                                 gfcsim_dataset** out);
GFCSIM_API gfcsim_status gfcsim_dataset_save(const gfcsim_dataset* d, const char* dir);
GFCSIM_API gfcsim_status gfcsim_dataset_load(const char* dir, gfcsim_dataset** out);
GFCSIM_API gfcsim_status gfcsim_dataset_info(const gfcsim_dataset* d, size_t* trajectories, size_t* samples,
                                             size_t* runs, size_t* diverged_runs);
GFCSIM_API void gfcsim_dataset_free(gfcsim_dataset* d);

/* Training */
GFCSIM_API gfcsim_status gfcsim_train_config_load(const char* path, gfcsim_train_config** out);
GFCSIM_API gfcsim_status gfcsim_train_config_default(gfcsim_train_config** out);
GFCSIM_API gfcsim_status gfcsim_train_config_set_iterations(gfcsim_train_config* c, int iterations);
GFCSIM_API void gfcsim_train_config_free(gfcsim_train_config* c);

/* Called after every iteration with the iteration number, total loss and the
 * held-out MSE (NaN when not evaluated). */
typedef void (*gfcsim_train_progress)(int iteration, double total_loss, double heldout_mse, void* user);
/* log_path may be NULL; otherwise the per-iteration loss log is written there. */
GFCSIM_API gfcsim_status gfcsim_train(const gfcsim_dataset* d, const gfcsim_train_config* c, const char* log_path,
                                      gfcsim_train_progress progress, void* user, gfcsim_model** out);

/* Models */
GFCSIM_API gfcsim_status gfcsim_model_load(const char* path, gfcsim_model** out);
GFCSIM_API gfcsim_status gfcsim_model_save(const gfcsim_model* m, const char* path);
/* Rotating-frame switching-voltage reference (d, q) for raw features. */
GFCSIM_API gfcsim_status gfcsim_model_predict(const gfcsim_model* m, const double features[GFCSIM_FEATURE_COUNT],
                                              double out_dq[2]);
GFCSIM_API gfcsim_status gfcsim_model_info(const gfcsim_model* m, double* final_train_mse, double* final_heldout_mse,
                                           int* iterations);
GFCSIM_API void gfcsim_model_free(gfcsim_model* m);

#ifdef __cplusplus
}
#endif

#endif
