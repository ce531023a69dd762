#ifndef REPALIGN_H
#define REPALIGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RaStatus {
  RA_STATUS_OK = 0,
  RA_STATUS_NULL_POINTER = 1,
  RA_STATUS_INVALID_ARGUMENT = 2,
  RA_STATUS_IO = 3,
  RA_STATUS_INVALID_DATA = 4,
  RA_STATUS_DEGENERATE = 5,
  RA_STATUS_ITEM_MISMATCH = 6,
  RA_STATUS_BUFFER_SIZE = 7,
  RA_STATUS_PANIC = 99,
} RaStatus;

/**
 * Feature matrix: rows are items, columns are features.
 */
typedef struct RaFeatureMatrix RaFeatureMatrix;

/**
 * Cosine-distance representational dissimilarity matrix.
 */
typedef struct RaRdm RaRdm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *ra_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ra_version(void);

/**
 * Copies `n_items` ids and an `n_items * dim` row-major matrix into a new
 * handle.
 *
 * # Safety
 * `ids` must point to `n_items` NUL-terminated strings, `data` to
 * `n_items * dim` doubles and `out` to writable storage for one pointer.
 */
enum RaStatus ra_features_new(const char *const *ids,
                              size_t n_items,
                              const double *data,
                              size_t dim,
                              struct RaFeatureMatrix **out);

/**
 * Loads `path` (`.npy`) and its `.ids.txt` sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RaStatus ra_features_load(const char *path, struct RaFeatureMatrix **out);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum RaStatus ra_features_save(const struct RaFeatureMatrix *m, const char *path);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t ra_features_n_items(const struct RaFeatureMatrix *m);

/**
 * Number of columns, or 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t ra_features_dim(const struct RaFeatureMatrix *m);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void ra_features_free(struct RaFeatureMatrix *m);

/**
 * Cosine-distance RDM of the rows of `m`.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum RaStatus ra_rdm_build(const struct RaFeatureMatrix *m, struct RaRdm **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RaStatus ra_rdm_load(const char *path, struct RaRdm **out);

/**
 * # Safety
 * `rdm` must be a live handle and `path` a NUL-terminated string.
 */
enum RaStatus ra_rdm_save(const struct RaRdm *rdm, const char *path);

/**
 * Number of items, or 0 for NULL.
 *
 * # Safety
 * `rdm` must be NULL or a live handle.
 */
size_t ra_rdm_size(const struct RaRdm *rdm);

/**
 * Cell `(i, j)`.
 *
 * # Safety
 * `rdm` must be a live handle and `out` writable.
 */
enum RaStatus ra_rdm_get(const struct RaRdm *rdm, size_t i, size_t j, double *out);

/**
 * Writes the `n(n-1)/2` strictly upper cells, row-major, into `buf`.
 * `len` must equal that count.
 *
 * # Safety
 * `rdm` must be a live handle and `buf` writable for `len` doubles.
 */
enum RaStatus ra_rdm_upper_triangle(const struct RaRdm *rdm, double *buf, size_t len);

/**
 * # Safety
 * `rdm` must be NULL or a handle not yet freed.
 */
void ra_rdm_free(struct RaRdm *rdm);

/**
 * Spearman correlation of the upper triangles of two RDMs over the same
 * ordered items.
 *
 * # Safety
 * `a` and `b` must be live handles and `rho` writable.
 */
enum RaStatus ra_rsa(const struct RaRdm *a, const struct RaRdm *b, double *rho);

/**
 * `|rsa(dist, target) - rsa(base, target)|`.
 *
 * # Safety
 * All handles must be live and `out` writable.
 */
enum RaStatus ra_delta_rsa(const struct RaRdm *base,
                           const struct RaRdm *dist,
                           const struct RaRdm *target,
                           double *out);

/**
 * Spearman rank correlation with average ranks for ties.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles and `rho` be writable.
 */
enum RaStatus ra_spearman_rho(const double *x, const double *y, size_t n, double *rho);

/**
 * `1 - cos(u, v)`, clamped to `[0, 2]`.
 *
 * # Safety
 * `u` and `v` must point to `n` doubles and `out` be writable.
 */
enum RaStatus ra_cosine_distance(const double *u, const double *v, size_t n, double *out);

/**
 * Side length of the maps written by [`ra_saliency_from_rgb`].
 */
size_t ra_saliency_map_size(void);

/**
 * Saliency map of an interleaved 8-bit RGB image (`width * height * 3`
 * bytes, rows top to bottom). Writes `256 * 256` doubles row-major.
 *
 * # Safety
 * `rgb` must hold `width * height * 3` bytes and `out` be writable for
 * `out_len` doubles.
 */
enum RaStatus ra_saliency_from_rgb(const uint8_t *rgb,
                                   uint32_t width,
                                   uint32_t height,
                                   double *out,
                                   size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPALIGN_H */
