#ifndef PROMPTLEARN_H
#define PROMPTLEARN_H

#include <stddef.h>
#include <stdint.h>

#if defined(PL_BUILDING_LIBRARY)
#define PL_API __attribute__((visibility("default")))
#else
#define PL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pl_status {
  PL_OK = 0,
  PL_ERR_INVALID_ARGUMENT = 1,
  PL_ERR_IO = 2,
  PL_ERR_PARSE = 3,
  PL_ERR_CONFIG = 4,
  PL_ERR_NETWORK = 5,
  PL_ERR_PROTOCOL = 6,
  PL_ERR_LEAKAGE = 7,
  PL_ERR_INTERNAL = 8
} pl_status;

/* Strings returned through char** out-parameters are owned by the caller and
   released with pl_string_free. */

PL_API const char* pl_version(void);
PL_API const char* pl_status_name(pl_status status);
/* Message of the last failed call on this thread; "" if none. */
PL_API const char* pl_last_error(void);
PL_API void pl_string_free(char* s);

typedef struct pl_catalog pl_catalog;

PL_API pl_status pl_catalog_load(const char* path, pl_catalog** out);
PL_API pl_status pl_catalog_parse(const char* json_text, pl_catalog** out);
PL_API size_t pl_catalog_size(const pl_catalog* catalog);
PL_API void pl_catalog_free(pl_catalog* catalog);

/* Label index named by a chat reply, or -1 if none can be recovered. */
PL_API int pl_parse_index_response(const pl_catalog* catalog, const char* reply);

/* Report JSON for a predictions JSONL document. */
PL_API pl_status pl_evaluate_predictions(const pl_catalog* catalog, const char* predictions_jsonl,
                                         char** report_json);

/* Markdown table for a grid results document; *n_warnings counts missing cells. */
PL_API pl_status pl_render_grid_report(const char* grid_json, char** markdown, size_t* n_warnings);

typedef struct pl_experiment pl_experiment;

PL_API pl_status pl_experiment_open(const char* config_path, pl_experiment** out);
/* Relative paths in config_json resolve against base_dir (NULL: "."). */
PL_API pl_status pl_experiment_open_json(const char* config_json, const char* base_dir, pl_experiment** out);
PL_API void pl_experiment_close(pl_experiment* exp);

/* Overrides apply to the next run. */
PL_API pl_status pl_experiment_set_seed(pl_experiment* exp, uint64_t seed);
PL_API pl_status pl_experiment_set_output_dir(pl_experiment* exp, const char* dir);
/* "train_dev", "validation" or "test". */
PL_API pl_status pl_experiment_set_eval_split(pl_experiment* exp, const char* split);

/* pl_evaluate_predictions against the config's catalog. */
PL_API pl_status pl_experiment_evaluate(pl_experiment* exp, const char* predictions_jsonl, char** report_json);

PL_API pl_status pl_run_split(pl_experiment* exp, char** split_json);
PL_API pl_status pl_run_sample(pl_experiment* exp, char** selection_json);
PL_API pl_status pl_run_render(pl_experiment* exp, const char* split, const char* template_id, char** prompts_jsonl);
/* Zero-shot, or few-shot when the backend is toy. Writes predictions.jsonl and
   report.json to the output directory. */
PL_API pl_status pl_run_classify(pl_experiment* exp, char** report_json);
PL_API pl_status pl_run_grid(pl_experiment* exp, char** grid_json);

#ifdef __cplusplus
}
#endif

#endif
