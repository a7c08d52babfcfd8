/* C interface to the rdime dimension-pruning library. */

#ifndef RDIME_H
#define RDIME_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RdimeStatus {
  RDIME_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RDIME_STATUS_NULL_ARGUMENT = 1,
  /**
   * A value violated a documented precondition.
   */
  RDIME_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Paired buffers disagree on length.
   */
  RDIME_STATUS_DIM_MISMATCH = 3,
  RDIME_STATUS_IO = 4,
  /**
   * Malformed embedding, qrels, or run data.
   */
  RDIME_STATUS_PARSE = 5,
  /**
   * Id or row not present.
   */
  RDIME_STATUS_NOT_FOUND = 6,
  /**
   * A string was not valid UTF-8.
   */
  RDIME_STATUS_UTF8 = 7,
  /**
   * Internal panic caught at the boundary.
   */
  RDIME_STATUS_PANIC = 8,
} RdimeStatus;

/**
 * Opaque embedding-matrix handle.
 */
typedef struct RdimeMatrix RdimeMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name for a status code; never null.
 */
const char *rdime_status_name(enum RdimeStatus status);

/**
 * Loads an embedding matrix from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid
 * pointer. On success `*out` owns the matrix and must be released with
 * [`rdime_matrix_free`].
 */
enum RdimeStatus rdime_matrix_load(const char *path, struct RdimeMatrix **out);

/**
 * Releases a matrix handle; a null pointer is a no-op.
 *
 * # Safety
 * `matrix` must have come from [`rdime_matrix_load`] and not been
 * freed already.
 */
void rdime_matrix_free(struct RdimeMatrix *matrix);

/**
 * Number of rows.
 *
 * # Safety
 * `matrix` and `out` must be valid pointers.
 */
enum RdimeStatus rdime_matrix_rows(const struct RdimeMatrix *matrix, size_t *out);

/**
 * Embedding dimension.
 *
 * # Safety
 * `matrix` and `out` must be valid pointers.
 */
enum RdimeStatus rdime_matrix_dim(const struct RdimeMatrix *matrix, size_t *out);

/**
 * Borrows one row; the pointer stays valid until the matrix is freed.
 *
 * # Safety
 * `matrix` and `out` must be valid pointers.
 */
enum RdimeStatus rdime_matrix_row(const struct RdimeMatrix *matrix, size_t row, const float **out);

/**
 * Borrows one row id as a NUL-terminated string; valid until the
 * matrix is freed.
 *
 * # Safety
 * `matrix` and `out` must be valid pointers.
 */
enum RdimeStatus rdime_matrix_id(const struct RdimeMatrix *matrix, size_t row, const char **out);

/**
 * Row index of an id.
 *
 * # Safety
 * `matrix`, `id`, and `out` must be valid pointers; `id` must be
 * NUL-terminated.
 */
enum RdimeStatus rdime_matrix_find(const struct RdimeMatrix *matrix, const char *id, size_t *out);

/**
 * Uniform kernel weights (1/num_docs each).
 *
 * # Safety
 * `out` must hold `num_docs` doubles.
 */
enum RdimeStatus rdime_uniform_weights(size_t num_docs, double *out);

/**
 * Softmax-of-dot-products kernel weights at the given temperature.
 *
 * # Safety
 * `query` holds `dim` doubles, `docs` holds `num_docs * dim` doubles
 * row-major, `out` holds `num_docs` doubles.
 */
enum RdimeStatus rdime_softmax_weights(const double *query,
                                       size_t dim,
                                       const double *docs,
                                       size_t num_docs,
                                       double temperature,
                                       double *out);

/**
 * Gaussian-kernel weights exp(−gamma·‖q−d‖²), normalized.
 *
 * # Safety
 * Same buffer contracts as [`rdime_softmax_weights`].
 */
enum RdimeStatus rdime_rbf_weights(const double *query,
                                   size_t dim,
                                   const double *docs,
                                   size_t num_docs,
                                   double gamma,
                                   double *out);

/**
 * Inverse-variance weights from per-document noise scales.
 *
 * # Safety
 * `sigmas` and `out` must hold `num_docs` doubles.
 */
enum RdimeStatus rdime_inverse_variance_weights(const double *sigmas, size_t num_docs, double *out);

/**
 * Element-wise importance q ⊙ d of a single document.
 *
 * # Safety
 * `query`, `doc`, and `out` must hold `dim` doubles.
 */
enum RdimeStatus rdime_single_doc_importance(const double *query,
                                             const double *doc,
                                             size_t dim,
                                             double *out);

/**
 * Kernel importance q ⊙ Σ wᵢ d⁽ⁱ⁾ with caller-supplied weights.
 *
 * # Safety
 * `query` and `out` hold `dim` doubles; `docs` holds
 * `num_docs * dim` doubles row-major; `weights` holds `num_docs`
 * doubles summing to 1.
 */
enum RdimeStatus rdime_kernel_importance(const double *query,
                                         size_t dim,
                                         const double *docs,
                                         size_t num_docs,
                                         const double *weights,
                                         double *out);

/**
 * Estimated noise floor mean(q² − u), clamped at zero; `raw` (may be
 * null) receives the unclamped value.
 *
 * # Safety
 * `query` and `importance` hold `dim` doubles; `value` must be valid.
 */
enum RdimeStatus rdime_noise_floor(const double *query,
                                   const double *importance,
                                   size_t dim,
                                   double *value,
                                   double *raw);

/**
 * Noise-threshold selection: `mask_out[i]` is 1 where the dimension is
 * retained. `fell_back` (may be null) is set to 1 when the threshold
 * retained nothing and the full mask was substituted.
 *
 * # Safety
 * `query` and `importance` hold `dim` doubles; `mask_out` holds `dim`
 * bytes.
 */
enum RdimeStatus rdime_select_threshold(const double *query,
                                        const double *importance,
                                        size_t dim,
                                        uint8_t *mask_out,
                                        uint8_t *fell_back);

/**
 * Fixed-fraction selection keeping max(1, floor(k·dim)) dimensions by
 * score (absolute value when `use_absolute` is nonzero).
 *
 * # Safety
 * `scores` holds `dim` doubles; `mask_out` holds `dim` bytes.
 */
enum RdimeStatus rdime_select_topk(const double *scores,
                                   size_t dim,
                                   double k,
                                   uint8_t use_absolute,
                                   uint8_t *mask_out);

/**
 * Dot product restricted to masked-in dimensions, accumulated in f64.
 *
 * # Safety
 * `query` and `doc` hold `dim` floats; `mask` holds `dim` bytes.
 */
enum RdimeStatus rdime_masked_dot(const float *query,
                                  const float *doc,
                                  const uint8_t *mask,
                                  size_t dim,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDIME_H */
