#ifndef CROWDBOUND_H
#define CROWDBOUND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_POINTER = 1,
  CB_STATUS_INVALID_ARGUMENT = 2,
  CB_STATUS_DIMENSION_MISMATCH = 3,
  CB_STATUS_NOT_APPLICABLE = 4,
  CB_STATUS_PANIC = 5,
} CbStatus;

typedef enum CbMethod {
  CB_METHOD_MV = 0,
  // `2w - 1` weights from the supplied parameters.
  CB_METHOD_BOUND_OPTIMAL = 1,
  CB_METHOD_ONE_STEP_WMV = 2,
  CB_METHOD_ITERATIVE_WMV = 3,
  // One-coin EM with default options.
  CB_METHOD_EM_MAP = 4,
  CB_METHOD_ORACLE_MAP = 5,
} CbMethod;

typedef enum CbRule {
  CB_RULE_MV = 0,
  CB_RULE_BOUND_OPTIMAL = 1,
  CB_RULE_ORACLE_MAP = 2,
} CbRule;

typedef enum CbBoundKind {
  CB_BOUND_KIND_UPPER = 0,
  CB_BOUND_KIND_LOWER = 1,
  CB_BOUND_KIND_VACUOUS = 2,
} CbBoundKind;

// Opaque label matrix.
typedef struct CbLabelMatrix CbLabelMatrix;

// Worker parameters. `specificity` may be null for one-coin workers, in
// which case `sensitivity` holds the accuracies. `sampling` holds one
// labeling probability per worker.
typedef struct CbParams {
  size_t num_workers;
  const double *sensitivity;
  const double *specificity;
  const double *sampling;
  double prior;
} CbParams;

typedef struct CbBoundReport {
  double t1;
  double t2;
  double c_h;
  double sigma2;
  double hoeffding_upper;
  double bernstein_upper;
  double combined_upper;
  double hoeffding_lower;
  double bernstein_lower;
  double combined_lower;
} CbBoundReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *cb_last_error_message(void);

// Builds a label matrix from `len` observations. Labels are -1 or 1.
//
// # Safety
// The three arrays must hold `len` elements; `out` must be writable.
enum CbStatus cb_label_matrix_new(size_t num_workers,
                                  size_t num_items,
                                  const size_t *workers,
                                  const size_t *items,
                                  const int8_t *labels,
                                  size_t len,
                                  struct CbLabelMatrix **out);

// # Safety
// `matrix` must come from [`cb_label_matrix_new`] and not be freed twice.
void cb_label_matrix_free(struct CbLabelMatrix *matrix);

// # Safety
// `matrix` must be a live handle or null.
size_t cb_label_matrix_num_items(const struct CbLabelMatrix *matrix);

// Aggregates `matrix` into `out_labels` (length `out_len`, one entry per
// item, -1 or 1). `params` may be null unless the method needs it.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum CbStatus cb_aggregate(const struct CbLabelMatrix *matrix,
                           enum CbMethod method,
                           const struct CbParams *params,
                           int8_t *out_labels,
                           size_t out_len);

// Mean error-rate bounds of `rule` under `params`.
//
// # Safety
// `params` and `out` must be valid.
enum CbStatus cb_mean_error_bounds(const struct CbParams *params,
                                   enum CbRule rule,
                                   struct CbBoundReport *out);

// Exact mean error rate of `rule` under `params` by enumeration (at most 12
// workers).
//
// # Safety
// `params` and `out` must be valid.
enum CbStatus cb_exact_mean_error(const struct CbParams *params, enum CbRule rule, double *out);

// Majority-vote bound `exp(-2Mq²(w̄ - 1/2)²)` and whether it bounds from
// above or below.
//
// # Safety
// `value` and `kind` must be writable.
enum CbStatus cb_mv_mean_bound(size_t num_workers,
                               double q,
                               double wbar,
                               double *value,
                               enum CbBoundKind *kind);

// Lower bound on `P(error rate ≤ eps)` over `num_items` items.
//
// # Safety
// `out` must be writable.
enum CbStatus cb_high_prob_bound(double eps, double t1, size_t num_items, double *out);

// Smallest `t₁` guaranteeing error rate ≤ `eps` with probability ≥ `1 - delta`.
//
// # Safety
// `out` must be writable.
enum CbStatus cb_min_t1_for(double eps, double delta, size_t num_items, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROWDBOUND_H */
