#ifndef FLOWSPLAT_H
#define FLOWSPLAT_H

/* C interface to the flowsplat RGB-D SLAM engine. All functions return a
 * status code; on failure fsp_last_error() holds a diagnostic for the
 * calling thread. Objects returned through out-parameters are owned by the
 * caller and released with the matching destroy function. */

#include <stddef.h>
#include <stdint.h>

#ifndef FSP_API
#if defined(_WIN32)
#define FSP_API
#else
#define FSP_API __attribute__((visibility("default")))
#endif
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fsp_status {
  FSP_OK = 0,
  FSP_ERROR_INPUT = 1,   /* bad arguments or violated preconditions */
  FSP_ERROR_IO = 2,      /* file system failures, missing datasets */
  FSP_ERROR_PARSE = 3,   /* malformed files (config, indexes, scene specs) */
  FSP_ERROR_NUMERIC = 4, /* non-finite values or singular matrices */
  FSP_ERROR_INTERNAL = 5
} fsp_status;

FSP_API const char* fsp_version(void);

/* Message from the most recent failing call on this thread ("" if none). */
FSP_API const char* fsp_last_error(void);

/* ------------------------------------------------------------------ */
/* Configuration                                                       */

typedef struct fsp_config fsp_config;

/* Fresh configuration with built-in defaults. */
FSP_API fsp_status fsp_config_create(fsp_config** out);

/* Loads a key=value file ('#' comments); unknown keys are errors. */
FSP_API fsp_status fsp_config_load(const char* path, fsp_config** out);

/* Applies one "key=value" assignment. Setting preset=<name> also resets
 * that preset's stride and intrinsics defaults. */
FSP_API fsp_status fsp_config_set(fsp_config* config, const char* assignment);

/* Copies the current value of `key` into buf as a NUL-terminated string
 * (truncating to cap - 1 characters). */
FSP_API fsp_status fsp_config_get(const fsp_config* config, const char* key, char* buf, size_t cap);

FSP_API void fsp_config_destroy(fsp_config* config);

/* ------------------------------------------------------------------ */
/* Pipeline                                                            */

typedef struct fsp_run_stats {
  int32_t frames_processed;
  int32_t keyframes;
  uint64_t final_primitives;
  double ate_rmse_m;   /* NaN when no ground truth was available */
  double total_seconds;
  uint64_t config_hash;
} fsp_run_stats;

/* Runs tracking, dynamic-object filtering and mapping over the configured
 * input and writes all artifacts into the configured output directory. */
FSP_API fsp_status fsp_run(const fsp_config* config, fsp_run_stats* stats /* may be NULL */);

/* Runs the pipeline without writing run artifacts, then dumps the
 * per-object rendering-loss flows recorded during coarse tracking to a CSV
 * file (columns frame,object_id,iteration,loss). */
FSP_API fsp_status fsp_dump_loss_flows(const fsp_config* config, const char* csv_path);

/* ------------------------------------------------------------------ */
/* Tools                                                               */

/* Absolute trajectory error between two TUM-format trajectory files after
 * rigid alignment; writes a text report and a per-frame error CSV. Output
 * paths may be NULL to skip the corresponding file. */
FSP_API fsp_status fsp_evaluate(const char* estimated_path, const char* groundtruth_path,
                        const char* report_path, const char* errors_csv_path,
                        double association_tolerance, double* rmse_out /* may be NULL */);

/* Renders a synthetic scene description (JSON) into a TUM-layout dataset
 * directory (rgb/, depth/, masks/, index files, groundtruth.txt). */
FSP_API fsp_status fsp_synthesize(const char* spec_path, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* FLOWSPLAT_H */
