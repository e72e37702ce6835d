/* Copyright 2026 The cl4ac-cpp Authors
 * License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
 *
 * C interface to the cl4ac audio captioning library.
 *
 * Every function that can fail returns a cl4ac_status. On failure a
 * message is available from cl4ac_last_error() on the same thread until
 * the next call. Strings returned through char** belong to the caller and
 * are released with cl4ac_string_free().
 */
#ifndef CL4AC_CL4AC_H_
#define CL4AC_CL4AC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CL4AC_API __declspec(dllexport)
#else
#define CL4AC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes for the command line tool. */
typedef enum cl4ac_status {
  CL4AC_OK = 0,
  CL4AC_ERR_INTERNAL = 1,  /* contract violation or bug */
  CL4AC_ERR_INPUT = 2,     /* bad file, config or data */
  CL4AC_ERR_NUMERIC = 3,   /* non-finite loss, domain error */
  CL4AC_ERR_GRADCHECK = 4  /* gradient verification failed */
} cl4ac_status;

CL4AC_API const char* cl4ac_version(void);
CL4AC_API const char* cl4ac_last_error(void);
CL4AC_API void cl4ac_string_free(char* s);

/* Log sink: level 0 = info, 1 = warning. NULL restores the stderr sink. */
typedef void (*cl4ac_log_fn)(int level, const char* message, void* user);
CL4AC_API void cl4ac_set_log_callback(cl4ac_log_fn fn, void* user);

/* ---- Run configuration ---- */
typedef struct cl4ac_config cl4ac_config;

/* path == NULL gives the defaults. */
CL4AC_API cl4ac_status cl4ac_config_load(const char* path, cl4ac_config** out);
CL4AC_API cl4ac_status cl4ac_config_from_json(const char* json, cl4ac_config** out);
/* Sets one field, e.g. ("train.seed", "7") or ("train.use_cl", "false").
 * The value is JSON text. The config is left unchanged on error. */
CL4AC_API cl4ac_status cl4ac_config_set(cl4ac_config* cfg, const char* dotted_key, const char* json_value);
/* Fully resolved config as JSON. */
CL4AC_API cl4ac_status cl4ac_config_to_json(const cl4ac_config* cfg, char** out);
CL4AC_API void cl4ac_config_free(cl4ac_config* cfg);

/* ---- Commands ---- */

/* Synthetic WAVs plus manifest.csv in out_dir. grammars: "tone", "noise" or "both". */
CL4AC_API cl4ac_status cl4ac_synth(const char* out_dir, size_t n_clips, uint64_t seed, const char* grammars,
                                   double duration_seconds);
CL4AC_API cl4ac_status cl4ac_prepare(const cl4ac_config* cfg);
CL4AC_API cl4ac_status cl4ac_train(const cl4ac_config* cfg);

/* Writes report.csv and report.json to out_dir; *report_json may be NULL. */
CL4AC_API cl4ac_status cl4ac_evaluate(const char* checkpoint, const char* manifest_csv, const char* audio_root,
                                      const char* out_dir, size_t max_len, int references_as_candidates,
                                      char** report_json);

/* Runs the gradient suite. *table receives the result table even when the
 * status is CL4AC_ERR_GRADCHECK. inject_fault names an op whose backward is
 * sabotaged for the run (NULL or "" for none). */
CL4AC_API cl4ac_status cl4ac_gradcheck(const char* inject_fault, char** table);

/* ---- Trained models ---- */
typedef struct cl4ac_model cl4ac_model;

CL4AC_API cl4ac_status cl4ac_model_load(const char* checkpoint, cl4ac_model** out);
/* Greedy caption; max_len 0 uses the model limit. */
CL4AC_API cl4ac_status cl4ac_model_caption(cl4ac_model* model, const char* wav_path, size_t max_len,
                                           char** caption);
CL4AC_API size_t cl4ac_model_vocab_size(const cl4ac_model* model);
CL4AC_API void cl4ac_model_free(cl4ac_model* model);

#ifdef __cplusplus
}
#endif

#endif /* CL4AC_CL4AC_H_ */
