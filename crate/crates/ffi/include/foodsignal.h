#ifndef FOODSIGNAL_H
#define FOODSIGNAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_POINTER = 1,
  FS_STATUS_INVALID_UTF8 = 2,
  FS_STATUS_CONFIG = 3,
  FS_STATUS_DATA = 4,
  FS_STATUS_INTERNAL = 5,
} FsStatus;

/**
 * Food lexicon handle.
 */
typedef struct FsLexicon FsLexicon;

/**
 * Fitted ridge model handle.
 */
typedef struct FsRidgeModel FsRidgeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf`, NUL-terminated.
 *
 * Returns the length the message needs including the terminator, or 0 when
 * there is no error. Nothing is written when `buf_len` is too small.
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes, or be null with `buf_len` 0.
 */
size_t fs_last_error_message(char *buf, size_t buf_len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fs_version(void);

/**
 * Loads a `surface,calories,class` lexicon CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FsStatus fs_lexicon_load(const char *path, struct FsLexicon **out);

/**
 * Builds a lexicon from CSV text held in memory.
 *
 * # Safety
 * `csv` must be a NUL-terminated string; `out` must be writable.
 */
enum FsStatus fs_lexicon_from_csv(const char *csv, struct FsLexicon **out);

/**
 * Number of entries, or 0 for a null handle.
 *
 * # Safety
 * `lex` must be null or a live handle.
 */
size_t fs_lexicon_len(const struct FsLexicon *lex);

/**
 * Counts leftmost-longest food matches in `text` and their mean calories
 * (NaN when nothing matched).
 *
 * # Safety
 * `lex` must be a live handle, `text` NUL-terminated, outputs writable.
 */
enum FsStatus fs_match(const struct FsLexicon *lex,
                       const char *text,
                       size_t *out_count,
                       double *out_avg_calories);

/**
 * # Safety
 * `lex` must be null or a handle not freed before.
 */
void fs_lexicon_free(struct FsLexicon *lex);

/**
 * Loads a model JSON file written by the `fit` or `score` stages.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum FsStatus fs_model_load(const char *path, struct FsRidgeModel **out);

/**
 * Number of model columns, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t fs_model_columns(const struct FsRidgeModel *model);

/**
 * Prediction for one row in the model's column order.
 *
 * # Safety
 * `row` must point to `len` doubles; `out` must be writable.
 */
enum FsStatus fs_model_predict(const struct FsRidgeModel *model,
                               const double *row,
                               size_t len,
                               double *out);

/**
 * # Safety
 * `model` must be null or a handle not freed before.
 */
void fs_model_free(struct FsRidgeModel *model);

/**
 * Pearson correlation of two length-`n` arrays.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` must be writable.
 */
enum FsStatus fs_pearson(const double *x, const double *y, size_t n, double *out);

/**
 * Spearman rank correlation with average ranks for ties.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` must be writable.
 */
enum FsStatus fs_spearman(const double *x, const double *y, size_t n, double *out);

/**
 * Two-sided p-value of a correlation `r` over `n` pairs.
 *
 * # Safety
 * `out` must be writable.
 */
enum FsStatus fs_corr_pvalue(double r, size_t n, double *out);

/**
 * Jaccard similarity of two string sets (duplicates ignored).
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` NUL-terminated strings.
 */
enum FsStatus fs_jaccard(const char *const *a,
                         size_t na,
                         const char *const *b,
                         size_t nb,
                         double *out);

/**
 * Assigns each of `n` rows to one of `k` folds so that rows sharing a
 * group label share a fold.
 *
 * # Safety
 * `groups` must point to `n` NUL-terminated strings; `out_folds` to `n` writable slots.
 */
enum FsStatus fs_grouped_folds(const char *const *groups,
                               size_t n,
                               size_t k,
                               uint64_t seed,
                               size_t *out_folds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOODSIGNAL_H */
