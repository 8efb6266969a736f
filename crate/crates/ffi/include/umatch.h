#ifndef UMATCH_H
#define UMATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every call.
 */
typedef enum UmStatus {
  UM_STATUS_OK = 0,
  UM_STATUS_NULL_POINTER = 1,
  UM_STATUS_INVALID_ARGUMENT = 2,
  UM_STATUS_IO = 3,
  UM_STATUS_DATA = 4,
  UM_STATUS_CONFIG = 5,
  UM_STATUS_NUMERIC = 6,
  UM_STATUS_CHECKPOINT = 7,
  UM_STATUS_PANIC = 8,
} UmStatus;

/*
 A loaded dataset in raw units.
 */
typedef struct UmDataset UmDataset;

/*
 A trained or loaded model.
 */
typedef struct UmModel UmModel;

/*
 Summary metrics. `rmse` and `aw` are in raw target units.
 */
typedef struct UmReport {
  double alpha;
  double rmse;
  double ce;
  double coverage;
  double aw;
  size_t n_samples;
} UmReport;

/*
 Message of the last failed call on this thread ("" after a success).
 The pointer stays valid until the next call on the same thread.
 */
const char *um_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *um_version(void);

/*
 Loads a headed CSV whose last column is the target.

 # Safety
 `path` must be a NUL-terminated string and `out_dataset` a valid pointer.
 */
enum UmStatus um_dataset_load_csv(const char *path, struct UmDataset **out_dataset);

/*
 Synthetic heteroscedastic data: `noise` 0 is linear, 1 sinusoidal.

 # Safety
 `out_dataset` must be a valid pointer.
 */
enum UmStatus um_dataset_synthetic(size_t n,
                                   uint64_t seed,
                                   size_t dim,
                                   uint32_t noise,
                                   struct UmDataset **out_dataset);

/*
 Row and feature counts.

 # Safety
 `dataset` must come from this library; the out pointers must be valid.
 */
enum UmStatus um_dataset_shape(const struct UmDataset *dataset,
                               size_t *out_rows,
                               size_t *out_features);

/*
 # Safety
 `dataset` must be null or come from this library, and not be used after.
 */
void um_dataset_free(struct UmDataset *dataset);

/*
 Splits `dataset` with `seed`, trains `method` at coverage `alpha`, and
 evaluates on the held-out rows. `config` is null or `key = value` lines
 using the CLI option names (e.g. `max_outer = 20`).

 Methods: `sigma_fit`, `iqr_fit`, `hnn`, `quantile`, `mc_dropout`.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum UmStatus um_train(const struct UmDataset *dataset,
                       const char *method,
                       double alpha,
                       uint64_t seed,
                       const char *config,
                       struct UmModel **out_model);

/*
 Held-out metrics from training. Fails for a loaded model.

 # Safety
 `model` must come from this library; `out_report` must be valid.
 */
enum UmStatus um_model_report(const struct UmModel *model, struct UmReport *out_report);

/*
 Metrics of the model on every row of `dataset`, at the trained level.
 Features are matched by position.

 # Safety
 Handles must come from this library; `out_report` must be valid.
 */
enum UmStatus um_model_evaluate(const struct UmModel *model,
                                const struct UmDataset *dataset,
                                struct UmReport *out_report);

/*
 Point predictions and interval bounds, in raw target units, for
 `n_rows` row-major feature rows of width `n_features`. Each output
 array holds `n_rows` values.

 # Safety
 `features` must hold `n_rows * n_features` values and each output
 array `n_rows` values.
 */
enum UmStatus um_model_predict(const struct UmModel *model,
                               const double *features,
                               size_t n_rows,
                               size_t n_features,
                               double *out_y_hat,
                               double *out_lower,
                               double *out_upper);

/*
 Coverage level the model was trained for.

 # Safety
 `model` must come from this library; `out_alpha` must be valid.
 */
enum UmStatus um_model_alpha(const struct UmModel *model, double *out_alpha);

/*
 Number of outer training iterations recorded (0 for loaded models).

 # Safety
 `model` must come from this library; `out_len` must be valid.
 */
enum UmStatus um_model_trace_len(const struct UmModel *model, size_t *out_len);

/*
 Writes a text checkpoint.

 # Safety
 `model` must come from this library; `path` NUL-terminated.
 */
enum UmStatus um_model_save(const struct UmModel *model, const char *path);

/*
 Reads a checkpoint written by [`um_model_save`] or the CLI.

 # Safety
 `path` must be NUL-terminated and `out_model` valid.
 */
enum UmStatus um_model_load(const char *path, struct UmModel **out_model);

/*
 # Safety
 `model` must be null or come from this library, and not be used after.
 */
void um_model_free(struct UmModel *model);

/*
 Two-sided standard normal quantile: `P(|Z| <= z) = alpha`.

 # Safety
 `out_z` must be valid.
 */
enum UmStatus um_z_score(double alpha, double *out_z);

/*
 `|alpha - coverage|` of the intervals `[lower, upper]` over `n` samples.

 # Safety
 Each array must hold `n` values; `out_ce` must be valid.
 */
enum UmStatus um_calibration_error(const double *y,
                                   const double *lower,
                                   const double *upper,
                                   size_t n,
                                   double alpha,
                                   double *out_ce);

#endif  /* UMATCH_H */
