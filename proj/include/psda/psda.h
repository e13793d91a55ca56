/* C interface to the PSDA library.
 *
 * Objects are opaque handles released with the matching *_free function. Every call
 * returns a psda_status; on failure psda_last_error() describes the problem for the
 * calling thread. Strings returned through char** out-parameters are heap copies the
 * caller releases with psda_string_free.
 */
#ifndef PSDA_PSDA_H
#define PSDA_PSDA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PSDA_API __declspec(dllexport)
#else
#define PSDA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum psda_status {
  PSDA_OK = 0,
  PSDA_ERR_INVALID_ARGUMENT = 1,
  PSDA_ERR_CONFIG = 2,
  PSDA_ERR_NOT_FOUND = 3,
  PSDA_ERR_NUMERIC = 4,
  PSDA_ERR_IO = 5,
  PSDA_ERR_STATE = 6,
  PSDA_ERR_INTERNAL = 7
} psda_status;

typedef struct psda_scenario psda_scenario;
typedef struct psda_mission psda_mission;
typedef struct psda_server psda_server;

PSDA_API const char* psda_version(void);
/* Message of the last failed call on this thread; empty string if none. */
PSDA_API const char* psda_last_error(void);
PSDA_API void psda_string_free(char* s);

/* Scenarios */
PSDA_API psda_status psda_scenario_load(const char* path, psda_scenario** out);
PSDA_API psda_status psda_scenario_parse(const char* toml_text, psda_scenario** out);
/* name: "default" or "challenging" */
PSDA_API psda_status psda_scenario_builtin(const char* name, psda_scenario** out);
PSDA_API void psda_scenario_free(psda_scenario* s);

/* Batch runs. modalities is a comma-separated list (NULL or "" = all five); threads 0
 * uses every core. When out_dir is non-NULL, report.json and records/<modality>_<seed>.json
 * are written there. report_json (optional) receives the report. */
PSDA_API psda_status psda_run_batch(const psda_scenario* s, const char* modalities, int runs, uint64_t base_seed, int threads,
                                    const char* out_dir, char** report_json);

/* PSDA runs over the Cartesian grid of true x assumed FP rates (one value for both imagers).
 * When out_dir is non-NULL, fp_grid.json is written there. */
PSDA_API psda_status psda_fp_grid(const psda_scenario* s, const double* true_fp, size_t n_true, const double* assumed_fp,
                                  size_t n_assumed, int runs, uint64_t base_seed, int threads, const char* out_dir,
                                  char** report_json);

/* Reads <dir>/records/ *.json and writes plot CSVs to <dir>/plots. */
PSDA_API psda_status psda_export_plots(const char* dir);

/* Single missions. modality NULL keeps the scenario's modality. */
PSDA_API psda_status psda_mission_create(const psda_scenario* s, const char* modality, uint64_t seed, int simulate_human,
                                         psda_mission** out);
/* Advances up to n steps (stops at termination); events_json (optional) lists one entry per step.
 * Stepping an already finished mission is PSDA_ERR_STATE. */
PSDA_API psda_status psda_mission_step(psda_mission* m, int n, char** events_json);
/* Fuses an observation given in the wire format at the current step. */
PSDA_API psda_status psda_mission_observe(psda_mission* m, const char* observation_json, char** event_json);
PSDA_API psda_status psda_mission_finished(const psda_mission* m, int* finished);
PSDA_API psda_status psda_mission_record(const psda_mission* m, char** record_json);
PSDA_API void psda_mission_free(psda_mission* m);

/* gamma_out must hold n + 1 values: gamma_0 .. gamma_n. dictionary_size is H. */
PSDA_API psda_status psda_gamma(const double* normalizers, size_t n, double false_positive_rate, int dictionary_size,
                                double* gamma_out);

/* Session bridge. port 0 picks a free port; psda_server_start returns once listening. */
PSDA_API psda_status psda_server_start(const char* address, uint16_t port, int threads, psda_server** out);
PSDA_API psda_status psda_server_port(const psda_server* s, uint16_t* port);
/* Blocks until psda_server_stop is called from another thread. */
PSDA_API psda_status psda_server_wait(psda_server* s);
PSDA_API psda_status psda_server_stop(psda_server* s);
PSDA_API void psda_server_free(psda_server* s);

#ifdef __cplusplus
}
#endif

#endif
