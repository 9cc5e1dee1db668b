#ifndef SFSDA_H
#define SFSDA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum SfsdaStatus {
  SFSDA_STATUS_OK = 0,
  SFSDA_STATUS_INVALID_ARGUMENT = 1,
  SFSDA_STATUS_IO_ERROR = 2,
  SFSDA_STATUS_NUMERICAL_ERROR = 3,
  SFSDA_STATUS_PANIC = 4,
} SfsdaStatus;

// Source and target samples with known noise covariance.
typedef struct SfsdaDataset SfsdaDataset;

// Selective inference results, one entry per selected feature.
typedef struct SfsdaReport SfsdaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a dataset from row-major feature matrices (`n_source x n_features` and
// `n_target x n_features`) and responses, with noise covariance `noise_sd^2 I`.
//
// # Safety
// Array pointers must be valid for the stated lengths; `out` must be writable.
enum SfsdaStatus sfsda_dataset_new(const double *source_features,
                                   const double *source_response,
                                   size_t n_source,
                                   const double *target_features,
                                   const double *target_response,
                                   size_t n_target,
                                   size_t n_features,
                                   double noise_sd,
                                   struct SfsdaDataset **out);

// Loads a dataset from two CSV files with header `x1,...,xp,y`.
//
// # Safety
// Paths must be NUL-terminated UTF-8 strings; `out` must be writable.
enum SfsdaStatus sfsda_dataset_from_csv(const char *source_path,
                                        const char *target_path,
                                        double noise_sd,
                                        struct SfsdaDataset **out);

// # Safety
// `dataset` must come from a constructor above and not be freed twice; null is ignored.
void sfsda_dataset_free(struct SfsdaDataset *dataset);

// Selects features with the elastic net (`l2_weight = 0` for the Lasso) after
// domain adaptation and computes a selective p-value for each.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum SfsdaStatus sfsda_infer(const struct SfsdaDataset *dataset,
                             double l1_weight,
                             double l2_weight,
                             struct SfsdaReport **out);

// Number of selected features in the report; 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t sfsda_report_len(const struct SfsdaReport *report);

// Scalar results of entry `index`; any out-pointer may be null to skip it.
//
// # Safety
// `report` must be a live handle; non-null out-pointers must be writable.
enum SfsdaStatus sfsda_report_feature(const struct SfsdaReport *report,
                                      size_t index,
                                      size_t *feature,
                                      double *statistic,
                                      double *statistic_sd,
                                      double *p_value);

// Copies up to `capacity` intervals of entry `index` into `buffer` as
// `lo0, hi0, lo1, hi1, ...` and stores the total interval count in `count`.
// Passing `capacity = 0` queries the count only.
//
// # Safety
// `buffer` must hold `2 * capacity` doubles; `count` must be writable.
enum SfsdaStatus sfsda_report_intervals(const struct SfsdaReport *report,
                                        size_t index,
                                        double *buffer,
                                        size_t capacity,
                                        size_t *count);

// # Safety
// `report` must come from `sfsda_infer` and not be freed twice; null is ignored.
void sfsda_report_free(struct SfsdaReport *report);

// Two-sided p-value of `statistic` under `N(0, statistic_sd^2)` truncated to the
// union of `n_intervals` intervals given as `lo0, hi0, lo1, hi1, ...`.
//
// # Safety
// `intervals` must hold `2 * n_intervals` doubles; `out` must be writable.
enum SfsdaStatus sfsda_truncated_p(const double *intervals,
                                   size_t n_intervals,
                                   double statistic_sd,
                                   double statistic,
                                   double *out);

// Message for the most recent failure on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *sfsda_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFSDA_H */
