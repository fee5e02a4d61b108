#ifndef FUSELEARN_H
#define FUSELEARN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FUSELEARN_BUILDING_LIBRARY)
#    define FL_API __declspec(dllexport)
#  else
#    define FL_API __declspec(dllimport)
#  endif
#else
#  define FL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the CLI. */
typedef enum fl_status {
  FL_OK = 0,
  FL_ERROR_USAGE = 1,
  FL_ERROR_DATA = 2,
  FL_ERROR_NUMERIC = 3,
  FL_ERROR_INTERNAL = 4
} fl_status;

FL_API const char* fl_version(void);

/* Details of the last failure on the calling thread. The strings stay valid
   until the next failing call on that thread. */
FL_API const char* fl_last_error(void);
FL_API const char* fl_last_error_kind(void);
FL_API size_t fl_last_error_line(void); /* 0 when not tied to an input line */

/* Strings returned through char** outputs are released with this. */
FL_API void fl_string_free(char* s);

/* Pipeline stages. Option arguments are JSON objects; NULL or "" selects
   defaults. Unknown keys are ignored. */
FL_API fl_status fl_synth_run(const char* config_json, const char* out_dir);
FL_API fl_status fl_synth_default_config(char** out_json);
FL_API fl_status fl_featurize_run(const char* manifest_path, const char* out_dir, const char* options_json);
FL_API fl_status fl_evaluate_run(const char* features_dir, const char* out_dir, const char* options_json);
/* format: "text", "csv" or "json". plot_csv may be NULL. */
FL_API fl_status fl_report_render(const char* report_dir, const char* format, char** out_summary,
                                  char** out_plot_csv);

/* Option string helpers used by front ends. */
FL_API fl_status fl_parse_interval_ms(const char* text, int64_t* out_ms);
/* Merges "gaze=30,mouse=20" style rates into a featurize options object. */
FL_API fl_status fl_featurize_options_with_rates(const char* options_json, const char* rates, char** out_json);

/* Regression models. kind: "cart", "rf" or "gbdt". x is row-major rows x cols. */
typedef struct fl_model fl_model;

FL_API fl_status fl_model_fit(const char* kind, const char* params_json, const double* x, size_t rows, size_t cols,
                              const double* y, uint64_t seed, fl_model** out);
FL_API fl_status fl_model_predict(const fl_model* model, const double* x, size_t rows, size_t cols, double* out);
FL_API fl_status fl_model_to_json(const fl_model* model, char** out_json);
FL_API fl_status fl_model_from_json(const char* json, fl_model** out);
FL_API void fl_model_free(fl_model* model);

/* Learning-unit-state label from raw evaluations. weights may be NULL for
   the defaults (mastery, self, class). */
FL_API fl_status fl_lus_label(double mastery, double self_eval, double class_eval, const double* weights3,
                              double* out);
FL_API fl_status fl_r2_score(const double* truth, const double* pred, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
