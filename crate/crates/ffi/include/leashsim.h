#ifndef LEASHSIM_H
#define LEASHSIM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Largest `k` accepted by [`ls_schedule_count`].
 */
#define LS_SCHEDULE_K_MAX 20

/**
 * Length of the gateway calldata prefix.
 */
#define LS_GATEWAY_PREFIX_LEN 224

typedef enum LsShape {
  LS_SHAPE_SINGLE_EOA = 0,
  LS_SHAPE_INDEPENDENT_EOAS = 1,
} LsShape;

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_INVALID_UTF8 = 2,
  /**
   * Scenario text or fixture name rejected.
   */
  LS_STATUS_CONFIG = 3,
  /**
   * The scenario ran but its expectations or runner checks failed. A
   * report is still returned when the run itself completed.
   */
  LS_STATUS_ASSERTION = 4,
  /**
   * Gateway calldata could not be encoded or decoded.
   */
  LS_STATUS_ENCODING = 5,
  LS_STATUS_TOO_LARGE = 6,
  /**
   * The output buffer is too small; the required length was written.
   */
  LS_STATUS_BUFFER_TOO_SMALL = 7,
  LS_STATUS_INTERNAL = 8,
} LsStatus;

/**
 * Opaque scenario report.
 */
typedef struct LsReport LsReport;

/**
 * Leash parameters. 256-bit words are big-endian.
 */
typedef struct LsLeash {
  uint64_t anchor_height;
  uint8_t anchor_hash[32];
  uint8_t length[32];
  uint8_t fork_id[32];
} LsLeash;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. Valid
 * until the next call into this library on the same thread.
 */
const char *ls_last_error(void);

/**
 * Parses and runs a scenario given as TOML text. On `Ok` or `Assertion`
 * `*out` receives a report handle; otherwise it is set to null.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_scenario_run(const char *toml, struct LsReport **out);

/**
 * Runs a bundled scenario fixture by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_scenario_run_bundled(const char *name, struct LsReport **out);

/**
 * Number of bundled fixtures, chain fixtures included.
 */
size_t ls_bundled_count(void);

/**
 * Name of bundled fixture `i`, or null when out of range. The string is
 * static.
 */
const char *ls_bundled_name(size_t i);

/**
 * Report text. Owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *ls_report_text(const struct LsReport *report);

/**
 * Number of failed expectations recorded in the report.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t ls_report_failure_count(const struct LsReport *report);

/**
 * Failed expectation `i`, or null when out of range. Owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *ls_report_failure(const struct LsReport *report, size_t i);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void ls_report_free(struct LsReport *report);

/**
 * Number of acceptable schedules of `k` transactions. `shape` is an
 * `LsShape` value; anything else gives `Config`. `TooLarge` when `k`
 * exceeds [`LS_SCHEDULE_K_MAX`].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LsStatus ls_schedule_count(uint32_t k, uint32_t shape, uint64_t *out);

/**
 * Encodes gateway calldata for `target` (32 bytes) with the leash prefix
 * followed by `inner`. Writes the encoded length to `*out_len`; when `cap`
 * is too small nothing else is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` may be null when
 * `cap` is zero.
 */
enum LsStatus ls_gateway_encode(const struct LsLeash *leash,
                                const uint8_t (*target)[32],
                                const uint8_t *inner,
                                size_t inner_len,
                                uint8_t *out,
                                size_t cap,
                                size_t *out_len);

/**
 * Decodes gateway calldata. The inner calldata starts at byte
 * `LS_GATEWAY_PREFIX_LEN` of the input.
 *
 * # Safety
 * `data` must be valid for `len` bytes and the outputs valid pointers.
 */
enum LsStatus ls_gateway_decode(const uint8_t *data,
                                size_t len,
                                struct LsLeash *leash,
                                uint8_t (*target)[32]);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LEASHSIM_H */
