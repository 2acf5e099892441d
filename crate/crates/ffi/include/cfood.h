/* Generated by cbindgen; do not edit. */

#ifndef CFOOD_H
#define CFOOD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfoodStatus {
  CFOOD_STATUS_OK = 0,
  CFOOD_STATUS_NULL_POINTER = 1,
  CFOOD_STATUS_INVALID_ARGUMENT = 2,
  CFOOD_STATUS_IO = 3,
  CFOOD_STATUS_VALIDATION = 4,
  CFOOD_STATUS_DEGENERATE = 5,
  CFOOD_STATUS_PANIC = 6,
} CfoodStatus;

typedef enum CfoodMethod {
  CFOOD_METHOD_NNCE = 0,
  CFOOD_METHOD_NICE = 1,
} CfoodMethod;

typedef struct CfoodDataset CfoodDataset;

typedef struct CfoodDetector CfoodDetector;

typedef struct CfoodHead CfoodHead;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next `cfood_*` call on this thread.
 */
const char *cfood_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cfood_version(void);

/**
 * Loads a CFOD file (or a `.json` manifest).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CfoodStatus cfood_dataset_load(const char *path, struct CfoodDataset **out);

/**
 * # Safety
 * `ds` must come from `cfood_dataset_load` and not be used afterwards.
 */
void cfood_dataset_free(struct CfoodDataset *ds);

/**
 * Writes the dataset's row, dimension and class counts.
 *
 * # Safety
 * `ds` must be a live dataset handle; out pointers must be writable.
 */
enum CfoodStatus cfood_dataset_shape(const struct CfoodDataset *ds,
                                     size_t *rows,
                                     size_t *dim,
                                     size_t *classes);

/**
 * Copies row `row` into `out` (length `dim`) as f64.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must hold `dim` doubles.
 */
enum CfoodStatus cfood_dataset_row(const struct CfoodDataset *ds,
                                   size_t row,
                                   double *out,
                                   size_t dim);

/**
 * Loads a CFHD linear head.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CfoodStatus cfood_head_load(const char *path, struct CfoodHead **out);

/**
 * # Safety
 * `head` must come from `cfood_head_load` and not be used afterwards.
 */
void cfood_head_free(struct CfoodHead *head);

/**
 * Predicted class (lowest index wins ties) for an embedding of length `len`.
 *
 * # Safety
 * `head` must be live; `z` must hold `len` doubles; `out_class` writable.
 */
enum CfoodStatus cfood_head_predict(const struct CfoodHead *head,
                                    const double *z,
                                    size_t len,
                                    size_t *out_class);

/**
 * Builds a detector over `train` with a copy of `head`.
 *
 * `k_classes = 0` scores against all other classes. `normalize` and
 * `average` select the score variant; `filter` drops misclassified
 * training rows from the counterfactual pool.
 *
 * # Safety
 * `train` and `head` must be live handles; `out` must be writable.
 */
enum CfoodStatus cfood_detector_new(const struct CfoodDataset *train,
                                    const struct CfoodHead *head,
                                    enum CfoodMethod method,
                                    size_t k_classes,
                                    bool normalize,
                                    bool average,
                                    bool filter,
                                    struct CfoodDetector **out);

/**
 * # Safety
 * `det` must come from `cfood_detector_new` and not be used afterwards.
 */
void cfood_detector_free(struct CfoodDetector *det);

/**
 * Scores one embedding. `logits` may be null (length `logits_len` ignored);
 * the head's own logits are then used for top-k target selection.
 *
 * # Safety
 * `det` must be live; `z` must hold `len` doubles; `logits`, when non-null,
 * must hold `logits_len` doubles; out pointers must be writable.
 */
enum CfoodStatus cfood_detector_score(const struct CfoodDetector *det,
                                      const double *z,
                                      size_t len,
                                      const double *logits,
                                      size_t logits_len,
                                      double *out_score,
                                      size_t *out_class);

/**
 * Scores every row of `ds` into `out_scores` (length `rows`). `threads = 0`
 * uses all cores; results do not depend on the thread count.
 *
 * # Safety
 * `det`, `ds` must be live; `out_scores` must hold `rows` doubles.
 */
enum CfoodStatus cfood_detector_score_dataset(const struct CfoodDetector *det,
                                              const struct CfoodDataset *ds,
                                              size_t threads,
                                              double *out_scores,
                                              size_t rows);

/**
 * Area under the ROC curve, ID as the positive class.
 *
 * # Safety
 * `id`/`ood` must hold `n_id`/`n_ood` doubles; `out` must be writable.
 */
enum CfoodStatus cfood_auroc(const double *id,
                             size_t n_id,
                             const double *ood,
                             size_t n_ood,
                             double *out);

/**
 * False-positive rate at 95% true-positive rate, and the threshold used.
 *
 * # Safety
 * `id`/`ood` must hold `n_id`/`n_ood` doubles; out pointers writable.
 */
enum CfoodStatus cfood_fpr95(const double *id,
                             size_t n_id,
                             const double *ood,
                             size_t n_ood,
                             double *out_fpr,
                             double *out_tau);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFOOD_H */
