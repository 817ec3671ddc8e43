#ifndef REVGEN_H
#define REVGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RevgenStatus {
  REVGEN_STATUS_OK = 0,
  REVGEN_STATUS_NULL_ARGUMENT = 1,
  REVGEN_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON or a value outside its allowed range.
   */
  REVGEN_STATUS_INVALID_INPUT = 3,
  REVGEN_STATUS_NOT_FOUND = 4,
  REVGEN_STATUS_ALREADY_EXISTS = 5,
  REVGEN_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  REVGEN_STATUS_INTERNAL = 7,
} RevgenStatus;

/**
 * Opaque handle to one human-eval session backed by an on-disk log.
 */
typedef struct RevgenSession RevgenSession;

typedef struct RevgenScore {
  double precision;
  double recall;
  double f1;
} RevgenScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call on this thread; do not free it.
 */
const char *revgen_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void revgen_string_free(char *s);

/**
 * ROUGE-1 of `candidate` against `reference`.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; `out` must be writable.
 */
enum RevgenStatus revgen_rouge_1(const char *candidate,
                                 const char *reference,
                                 struct RevgenScore *out);

/**
 * ROUGE-L (LCS based) of `candidate` against `reference`.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; `out` must be writable.
 */
enum RevgenStatus revgen_rouge_l(const char *candidate,
                                 const char *reference,
                                 struct RevgenScore *out);

/**
 * Mean of `len` per-sample scores, ×100, rounded to two decimals.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum RevgenStatus revgen_corpus_aggregate(const double *values, size_t len, double *out);

/**
 * Renders the prompt for one sample given as a JSON object (a line of a split
 * file). `*out_completion` receives the reference review in training mode and
 * an empty string in inference mode. Both outputs must be freed.
 *
 * # Safety
 * `sample_json` must be a valid NUL-terminated string; out-pointers must be writable.
 */
enum RevgenStatus revgen_build_prompt(const char *sample_json,
                                      bool include_ratings,
                                      bool inference,
                                      size_t history_token_budget,
                                      char **out_prompt,
                                      char **out_completion);

/**
 * Opens an existing session stored under `store_dir`, replaying its log.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; `out` must be writable.
 */
enum RevgenStatus revgen_session_open(const char *store_dir,
                                      const char *session_id,
                                      struct RevgenSession **out);

/**
 * Creates a session from JSON `{"session_id", "pairs", "annotator_ids"}`.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; `out` must be writable.
 */
enum RevgenStatus revgen_session_create(const char *store_dir,
                                        const char *session_json,
                                        struct RevgenSession **out);

/**
 * Next unjudged pair for an annotator as JSON `{"done", "pair"?, "progress"}`.
 * The pair carries no system name.
 *
 * # Safety
 * `session` must be a live handle; `out_json` must be writable.
 */
enum RevgenStatus revgen_session_next_pair_json(const struct RevgenSession *session,
                                                const char *annotator_id,
                                                char **out_json);

/**
 * Appends a judgment (`label` 0 or 1). Re-judging a pair overrides the
 * earlier label. Progress for the annotator is written to the out-pointers,
 * either of which may be null.
 *
 * # Safety
 * `session` must be a live handle; non-null out-pointers must be writable.
 */
enum RevgenStatus revgen_session_submit(const struct RevgenSession *session,
                                        const char *annotator_id,
                                        const char *pair_id,
                                        uint8_t label,
                                        size_t *out_judged,
                                        size_t *out_total);

/**
 * Aggregate statistics as JSON (per-system mean/min/max accuracy and more).
 *
 * # Safety
 * `session` must be a live handle; `out_json` must be writable.
 */
enum RevgenStatus revgen_session_stats_json(const struct RevgenSession *session, char **out_json);

/**
 * Releases a session handle. Null is ignored.
 *
 * # Safety
 * `session` must come from this library and not have been freed already.
 */
void revgen_session_free(struct RevgenSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REVGEN_H */
