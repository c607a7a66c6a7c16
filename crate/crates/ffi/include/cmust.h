#ifndef CMUST_H
#define CMUST_H

/* Generated by cbindgen from the cmust-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CmustStatus {
  CMUST_STATUS_OK = 0,
  CMUST_STATUS_NULL_POINTER = 1,
  CMUST_STATUS_INVALID_UTF8 = 2,
  CMUST_STATUS_CONFIG = 3,
  CMUST_STATUS_IO = 4,
  CMUST_STATUS_SHAPE = 5,
  CMUST_STATUS_DIVERGED = 6,
  CMUST_STATUS_BUFFER_TOO_SMALL = 7,
  CMUST_STATUS_INTERNAL = 8,
  CMUST_STATUS_PANIC = 9,
} CmustStatus;

/**
 * A dataset windowed for one model.
 */
typedef struct CmustDataset CmustDataset;

/**
 * A loaded checkpoint: network, task prompt and metadata.
 */
typedef struct CmustModel CmustModel;

/**
 * Test-split metrics in data units.
 */
typedef struct CmustMetrics {
  double mae;
  double mape;
  size_t windows;
  size_t elements;
} CmustMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cmust_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cmust_version(void);

/**
 * Loads a checkpoint directory into `*out`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CmustStatus cmust_model_load(const char *dir, struct CmustModel **out);

/**
 * Releases a model; NULL is ignored.
 *
 * # Safety
 * `model` must come from [`cmust_model_load`] and not be used afterwards.
 */
void cmust_model_free(struct CmustModel *model);

/**
 * Task name stored in the checkpoint; owned by the model.
 *
 * # Safety
 * `model` must be NULL or a live model.
 */
const char *cmust_model_task(const struct CmustModel *model);

/**
 * Number of scalar weights, prompt excluded.
 *
 * # Safety
 * `model` must be NULL or a live model.
 */
size_t cmust_model_parameter_count(const struct CmustModel *model);

/**
 * Number of frozen scalar weights.
 *
 * # Safety
 * `model` must be NULL or a live model.
 */
size_t cmust_model_frozen_count(const struct CmustModel *model);

/**
 * Opens a dataset directory and windows it to fit `model`.
 *
 * # Safety
 * `model` must be a live model, `dir` a NUL-terminated string and `out` a
 * valid pointer.
 */
enum CmustStatus cmust_dataset_open(const struct CmustModel *model,
                                    const char *dir,
                                    struct CmustDataset **out);

/**
 * Releases a dataset; NULL is ignored.
 *
 * # Safety
 * `dataset` must come from [`cmust_dataset_open`] and not be used afterwards.
 */
void cmust_dataset_free(struct CmustDataset *dataset);

/**
 * Number of test windows.
 *
 * # Safety
 * `dataset` must be NULL or a live dataset.
 */
size_t cmust_dataset_test_windows(const struct CmustDataset *dataset);

/**
 * Length of one prediction, `horizon * nodes * out_channels`.
 *
 * # Safety
 * Both pointers must be NULL or live objects.
 */
size_t cmust_prediction_len(const struct CmustModel *model, const struct CmustDataset *dataset);

/**
 * Test-split MAE and MAPE.
 *
 * # Safety
 * `model` and `dataset` must be live objects and `out` a valid pointer.
 */
enum CmustStatus cmust_evaluate(const struct CmustModel *model,
                                const struct CmustDataset *dataset,
                                size_t batch_size,
                                struct CmustMetrics *out);

/**
 * Writes the denormalized forecast `[horizon][nodes][out_channels]` for
 * test window `window` into `buf`, which must hold
 * [`cmust_prediction_len`] values.
 *
 * # Safety
 * `model` and `dataset` must be live objects and `buf` must point to `len`
 * writable doubles.
 */
enum CmustStatus cmust_predict(const struct CmustModel *model,
                               const struct CmustDataset *dataset,
                               size_t window,
                               double *buf,
                               size_t len);

/**
 * Writes `tasks` synthetic dataset directories under `out_dir`.
 *
 * # Safety
 * `out_dir` must be a NUL-terminated string.
 */
enum CmustStatus cmust_generate_synthetic(uint64_t seed,
                                          size_t tasks,
                                          size_t nodes,
                                          size_t steps,
                                          uint32_t interval_minutes,
                                          double coupling,
                                          double noise_sd,
                                          const char *out_dir);

/**
 * Runs the experiment described by the JSON run configuration `config`,
 * writing artifacts to `output_dir` (or the configured directory when
 * NULL). The mean test MAE over tasks goes to `mean_mae` when non-NULL.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `output_dir` NULL or one;
 * `mean_mae` NULL or a valid pointer.
 */
enum CmustStatus cmust_train(const char *config, const char *output_dir, double *mean_mae);

/**
 * Metrics of a finished run as a JSON string; release with
 * [`cmust_string_free`].
 *
 * # Safety
 * `run_dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CmustStatus cmust_run_metrics_json(const char *run_dir, char **out);

/**
 * Frees a string returned by this library; NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void cmust_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMUST_H */
