/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef HMMGMR_H
#define HMMGMR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum HmmgmrStatus {
  HMMGMR_STATUS_OK = 0,
  HMMGMR_STATUS_NULL_POINTER = 1,
  HMMGMR_STATUS_INVALID_ARGUMENT = 2,
  HMMGMR_STATUS_DATA = 3,
  HMMGMR_STATUS_NUMERIC = 4,
  HMMGMR_STATUS_PANIC = 5,
} HmmgmrStatus;

// Initialization method for [`hmmgmr_fit`].
typedef enum HmmgmrInit {
  HMMGMR_INIT_K_BINS = 0,
  HMMGMR_INIT_K_MEANS = 1,
} HmmgmrInit;

// Opaque trained model (HMM or GMM).
typedef struct HmmgmrModel HmmgmrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *hmmgmr_last_error(void);

// Library version as a static NUL-terminated string.
const char *hmmgmr_version(void);

// Parses a model document.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum HmmgmrStatus hmmgmr_model_from_json(const char *json, struct HmmgmrModel **out);

// Serializes a model; free the string with [`hmmgmr_string_free`].
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum HmmgmrStatus hmmgmr_model_to_json(const struct HmmgmrModel *model, char **out);

// Releases a model handle. NULL is ignored.
//
// # Safety
// `model` must come from this library and not have been freed.
void hmmgmr_model_free(struct HmmgmrModel *model);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void hmmgmr_string_free(char *s);

// Number of states, feature dimension, input count and output count.
//
// # Safety
// `model` must be a live handle; each non-NULL out pointer must be valid.
enum HmmgmrStatus hmmgmr_model_shape(const struct HmmgmrModel *model,
                                     size_t *n_states,
                                     size_t *dim,
                                     size_t *n_inputs,
                                     size_t *n_outputs);

// Log-likelihood of one `t x dim` sequence under an HMM. When `gamma` is
// non-NULL it receives the `t x K` state posteriors, row-major.
//
// # Safety
// `frames` must hold `t * dim` doubles, `log_likelihood` must be valid and
// `gamma`, if non-NULL, must have room for `t * K` doubles.
enum HmmgmrStatus hmmgmr_posteriors(const struct HmmgmrModel *model,
                                    const double *frames,
                                    size_t t,
                                    size_t dim,
                                    double *log_likelihood,
                                    double *gamma);

// HMM-GMR (or GMM-GMR for a mixture handle) over a `t x n_inputs` input
// stream. Writes the `t x n_outputs` point estimates and, when `beliefs` is
// non-NULL, the `t x K` state beliefs.
//
// # Safety
// `inputs` must hold `t * n_inputs` doubles, `estimates` must have room for
// `t * n_outputs` doubles and `beliefs`, if non-NULL, for `t * K`.
enum HmmgmrStatus hmmgmr_predict(const struct HmmgmrModel *model,
                                 const double *inputs,
                                 size_t t,
                                 size_t n_inputs,
                                 double *estimates,
                                 double *beliefs);

// Fits a `k`-state HMM by EM to `n_seq` sequences stored back to back in
// `frames` (row-major, `dim` columns); `lengths[i]` is the frame count of
// sequence `i`. The last `n_outputs` columns are outputs. `names` is a
// comma-separated list of `dim` feature names, or NULL for `f0, f1, ...`.
//
// # Safety
// `frames` must hold `sum(lengths) * dim` doubles, `lengths` must hold
// `n_seq` entries, `names` must be NULL or NUL-terminated, `out` valid.
enum HmmgmrStatus hmmgmr_fit(const double *frames,
                             const size_t *lengths,
                             size_t n_seq,
                             size_t dim,
                             const char *names,
                             size_t n_outputs,
                             size_t k,
                             enum HmmgmrInit init,
                             uint64_t seed,
                             struct HmmgmrModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMMGMR_H */
