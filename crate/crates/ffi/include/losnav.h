#ifndef LOSNAV_H
#define LOSNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LosnavStatus {
  LOSNAV_STATUS_OK = 0,
  LOSNAV_STATUS_NULL_POINTER = 1,
  LOSNAV_STATUS_INVALID_UTF8 = 2,
  LOSNAV_STATUS_IO = 3,
  LOSNAV_STATUS_PARSE = 4,
  LOSNAV_STATUS_INVALID_SCENARIO = 5,
  LOSNAV_STATUS_INVALID_ARGUMENT = 6,
  LOSNAV_STATUS_ENCODE = 7,
  LOSNAV_STATUS_DECODE = 8,
  LOSNAV_STATUS_BUFFER_TOO_SMALL = 9,
  LOSNAV_STATUS_PANIC = 10,
} LosnavStatus;

typedef enum LosnavLegOutcome {
  LOSNAV_LEG_OUTCOME_ARRIVED = 0,
  LOSNAV_LEG_OUTCOME_UNREACHABLE = 1,
  LOSNAV_LEG_OUTCOME_FAILED = 2,
} LosnavLegOutcome;

typedef enum LosnavLog {
  LOSNAV_LOG_TRAJECTORY = 0,
  LOSNAV_LOG_EVENTS = 1,
  LOSNAV_LOG_TRANSITIONS = 2,
} LosnavLog;

/**
 * The logs and outcome of one run.
 */
typedef struct LosnavRun LosnavRun;

/**
 * A parsed scenario.
 */
typedef struct LosnavScenario LosnavScenario;

/**
 * Headline numbers of a finished run.
 */
typedef struct LosnavSummary {
  size_t arrived;
  size_t legs;
  double final_error;
  double path_length;
  double min_clearance;
  /**
   * 1 when the final pose sees the served device, 0 when it does not,
   * -1 when the scenario has no device.
   */
  int32_t los_to_device;
  double duration;
  bool collided;
} LosnavSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *losnav_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *losnav_last_error(void);

/**
 * Parses scenario text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LosnavStatus losnav_scenario_parse(const char *text, struct LosnavScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LosnavStatus losnav_scenario_load(const char *path, struct LosnavScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scn` must come from a scenario constructor and not be freed twice.
 */
void losnav_scenario_free(struct LosnavScenario *scn);

/**
 * Number of targets in the scenario, zero for null.
 *
 * # Safety
 * `scn` must be null or a live scenario handle.
 */
size_t losnav_scenario_target_count(const struct LosnavScenario *scn);

/**
 * Overrides the random seed.
 *
 * # Safety
 * `scn` must be a live scenario handle.
 */
enum LosnavStatus losnav_scenario_set_seed(struct LosnavScenario *scn, uint64_t seed);

/**
 * Whether the segment between two points is free of obstacles in the
 * scenario's world.
 *
 * # Safety
 * `scn` must be a live scenario handle and `out` a valid pointer.
 */
enum LosnavStatus losnav_line_of_sight(const struct LosnavScenario *scn,
                                       double ax,
                                       double ay,
                                       double bx,
                                       double by,
                                       bool *out);

/**
 * Runs every target of the scenario in virtual time.
 *
 * # Safety
 * `scn` must be a live scenario handle and `out` a valid pointer.
 */
enum LosnavStatus losnav_run(const struct LosnavScenario *scn, struct LosnavRun **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from `losnav_run` and not be freed twice.
 */
void losnav_run_free(struct LosnavRun *run);

/**
 * Copies the run summary into `out`.
 *
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum LosnavStatus losnav_run_summary(const struct LosnavRun *run, struct LosnavSummary *out);

/**
 * Outcome of leg `index`. Legs after a failure are absent.
 *
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum LosnavStatus losnav_run_leg(const struct LosnavRun *run,
                                 size_t index,
                                 enum LosnavLegOutcome *out);

/**
 * Renders one of the run's logs as CSV. Free the result with
 * `losnav_string_free`.
 *
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum LosnavStatus losnav_run_csv(const struct LosnavRun *run, enum LosnavLog which, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void losnav_string_free(char *s);

/**
 * Wraps an angle into (-pi, pi].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LosnavStatus losnav_wrap_angle(double theta, double *out);

/**
 * Encodes a target request datagram into `buf`. On
 * `BufferTooSmall`, `out_len` holds the size needed.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes and `out_len` be valid.
 */
enum LosnavStatus losnav_encode_target_request(uint64_t seq,
                                               uint64_t timestamp_ms,
                                               double x,
                                               double y,
                                               uint8_t *buf,
                                               size_t cap,
                                               size_t *out_len);

/**
 * Decodes any protocol datagram and returns its canonical encoding as a
 * string. Free the result with `losnav_string_free`.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` be valid.
 */
enum LosnavStatus losnav_canonicalize(const uint8_t *bytes, size_t len, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOSNAV_H */
