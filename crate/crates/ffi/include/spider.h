#ifndef SPIDER_H
#define SPIDER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpiderStatus {
  SPIDER_STATUS_OK = 0,
  SPIDER_STATUS_NULL_POINTER = 1,
  SPIDER_STATUS_INVALID_UTF8 = 2,
  SPIDER_STATUS_INPUT_ERROR = 3,
  SPIDER_STATUS_GENERICITY_VIOLATION = 4,
  SPIDER_STATUS_ANALYSIS_FAILED = 5,
  SPIDER_STATUS_PANIC = 6,
} SpiderStatus;

/**
 * Opaque to C.
 */
typedef struct SpiderMechanism SpiderMechanism;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into the library on the same thread.
 */
const char *spider_last_error(void);

/**
 * Build a mechanism from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be NULL or a valid C string; `out` must be NULL or writable.
 */
enum SpiderStatus spider_mechanism_from_json(const char *json, struct SpiderMechanism **out);

/**
 * # Safety
 * `m` must be NULL or come from `spider_mechanism_from_json`, freed once.
 */
void spider_mechanism_free(struct SpiderMechanism *m);

/**
 * Dimension of the configuration space.
 *
 * # Safety
 * `m` must be a live handle or NULL; `out` writable or NULL.
 */
enum SpiderStatus spider_mechanism_dim(const struct SpiderMechanism *m, size_t *out);

/**
 * Euler characteristic of the configuration space, summed over the
 * strata of the work space.
 *
 * # Safety
 * `m` must be a live handle or NULL; `out` writable or NULL.
 */
enum SpiderStatus spider_euler(const struct SpiderMechanism *m, int64_t *out);

/**
 * Critical components of `|x - z|^2` as a JSON report. Free the string
 * with `spider_string_free`.
 *
 * # Safety
 * `m` must be a live handle or NULL; `out` writable or NULL.
 */
enum SpiderStatus spider_critical_json(const struct SpiderMechanism *m,
                                       double zx,
                                       double zy,
                                       bool certified,
                                       char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void spider_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIDER_H */
