#ifndef WBALIGN_H
#define WBALIGN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum WbaStatus {
  WBA_STATUS_OK = 0,
  WBA_STATUS_NULL_POINTER = 1,
  WBA_STATUS_INVALID_UTF8 = 2,
  WBA_STATUS_IO = 3,
  WBA_STATUS_PARSE = 4,
  WBA_STATUS_INVALID_INPUT = 5,
  WBA_STATUS_DIMENSION = 6,
  WBA_STATUS_NUMERICAL = 7,
  WBA_STATUS_UNKNOWN_LANGUAGE = 8,
  WBA_STATUS_CHECKPOINT = 9,
  WBA_STATUS_CONFIG = 10,
  WBA_STATUS_UNKNOWN_WORD = 11,
  WBA_STATUS_PANIC = 12,
} WbaStatus;

/**
 * Loaded alignment checkpoint (flat or hierarchical).
 */
typedef struct WbaCheckpoint WbaCheckpoint;

/**
 * Ranked translations of one or all source words.
 */
typedef struct WbaLexicon WbaLexicon;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *wba_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wba_version(void);

/**
 * Loads a checkpoint written by `wbalign align` or `wbalign hierarchical`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WbaStatus wba_checkpoint_load(const char *path, struct WbaCheckpoint **out);

/**
 * # Safety
 * `handle` must come from [`wba_checkpoint_load`] (or be NULL) and not be used afterwards.
 */
void wba_checkpoint_free(struct WbaCheckpoint *handle);

/**
 * Number of languages in the checkpoint; 0 for NULL.
 *
 * # Safety
 * `handle` must be a live checkpoint handle or NULL.
 */
size_t wba_checkpoint_language_count(const struct WbaCheckpoint *handle);

/**
 * Tag of language `index`, or NULL when out of range.
 *
 * # Safety
 * `handle` must be a live checkpoint handle or NULL.
 */
const char *wba_checkpoint_language(const struct WbaCheckpoint *handle, size_t index);

/**
 * Whether the checkpoint holds a language tree rather than a flat alignment.
 *
 * # Safety
 * `handle` must be a live checkpoint handle or NULL.
 */
bool wba_checkpoint_is_tree(const struct WbaCheckpoint *handle);

/**
 * Top-`k` translations from `src` to `tgt`. With `word` NULL the whole
 * source vocabulary is translated, otherwise only `word`.
 *
 * # Safety
 * `handle` must be live, the strings NUL-terminated, `out` valid.
 */
enum WbaStatus wba_translate(const struct WbaCheckpoint *handle,
                             const char *src,
                             const char *tgt,
                             const char *word,
                             size_t k,
                             bool nn_fallback,
                             struct WbaLexicon **out);

/**
 * # Safety
 * `lexicon` must come from [`wba_translate`] (or be NULL) and not be used afterwards.
 */
void wba_lexicon_free(struct WbaLexicon *lexicon);

/**
 * Number of source words in the lexicon.
 *
 * # Safety
 * `lexicon` must be live or NULL.
 */
size_t wba_lexicon_len(const struct WbaLexicon *lexicon);

/**
 * Source word of row `row`, or NULL when out of range.
 *
 * # Safety
 * `lexicon` must be live or NULL.
 */
const char *wba_lexicon_source(const struct WbaLexicon *lexicon, size_t row);

/**
 * Number of ranked candidates of row `row` (0 for an empty coupling row).
 *
 * # Safety
 * `lexicon` must be live or NULL.
 */
size_t wba_lexicon_rank_count(const struct WbaLexicon *lexicon, size_t row);

/**
 * Candidate at 0-based `rank` of row `row`, or NULL when out of range.
 *
 * # Safety
 * `lexicon` must be live or NULL.
 */
const char *wba_lexicon_target(const struct WbaLexicon *lexicon, size_t row, size_t rank);

/**
 * Score of the candidate at `rank` of row `row`, NaN when out of range.
 *
 * # Safety
 * `lexicon` must be live or NULL.
 */
double wba_lexicon_score(const struct WbaLexicon *lexicon, size_t row, size_t rank);

/**
 * Entropic transport plan between `a` (length `n`) and `b` (length `m`)
 * under the row-major `n x m` `cost`, written row-major into `plan`.
 *
 * `epsilon > 0` is used as is; `epsilon <= 0` selects the library default
 * (a fixed fraction of the median cost). `max_iters == 0` and
 * `tolerance <= 0` also select defaults. `iterations` and `converged` may be NULL.
 *
 * # Safety
 * The arrays must hold `n`, `m`, `n * m` and `n * m` doubles.
 */
enum WbaStatus wba_sinkhorn(const double *a,
                            size_t n,
                            const double *b,
                            size_t m,
                            const double *cost,
                            double epsilon,
                            size_t max_iters,
                            double tolerance,
                            double *plan,
                            size_t *iterations,
                            bool *converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WBALIGN_H */
