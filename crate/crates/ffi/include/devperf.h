#ifndef DEVPERF_H
#define DEVPERF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DpStatus {
  DP_STATUS_OK = 0,
  DP_STATUS_NULL_POINTER = 1,
  DP_STATUS_INVALID_ARGUMENT = 2,
  DP_STATUS_PARSE = 3,
  DP_STATUS_COMPUTE = 4,
  DP_STATUS_PANIC = 5,
} DpStatus;

/**
 * Smoother selector for [`dp_smooth`].
 */
typedef enum DpSmoother {
  DP_SMOOTHER_SMA = 0,
  DP_SMOOTHER_WMA = 1,
  DP_SMOOTHER_WMA_CORRECTED = 2,
  DP_SMOOTHER_HMA = 3,
} DpSmoother;

/**
 * Opaque scoring engine.
 */
typedef struct DpEngine DpEngine;

/**
 * Opaque feature schema.
 */
typedef struct DpSchema DpSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. Successful
 * calls clear it. The pointer is valid until the next call into this
 * library on the same thread.
 */
const char *dp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dp_version(void);

/**
 * Loads the built-in 22-indicator schema.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DpStatus dp_schema_builtin(struct DpSchema **out);

/**
 * Parses a TOML schema document.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DpStatus dp_schema_parse(const char *text, struct DpSchema **out);

/**
 * Number of indicators in the schema, 0 for a null handle.
 *
 * # Safety
 * `schema` must be null or a live handle.
 */
size_t dp_schema_len(const struct DpSchema *schema);

/**
 * Releases a schema. Null is ignored.
 *
 * # Safety
 * `schema` must be null or a handle not yet freed.
 */
void dp_schema_free(struct DpSchema *schema);

/**
 * Scores `nrows` snapshots (row-major, schema column order) and writes the
 * scaled scores in `[0, 100]` to `out_scaled`. `multilevel` selects the
 * two-stage evaluation.
 *
 * # Safety
 * `data` must hold `nrows * dp_schema_len(schema)` values and `out_scaled`
 * room for `nrows`.
 */
enum DpStatus dp_score_snapshot(const struct DpSchema *schema,
                                const double *data,
                                size_t nrows,
                                bool multilevel,
                                double *out_scaled);

/**
 * Smooths `n` values with the selected moving average into `out`.
 *
 * # Safety
 * `xs` and `out` must each hold `n` values.
 */
enum DpStatus dp_smooth(enum DpSmoother kind,
                        const double *xs,
                        size_t n,
                        size_t lookback,
                        double *out);

/**
 * Fits ARIMA(`p`,`d`,`q`), or selects the order by BIC within those bounds
 * when `auto_order` is set, and writes an `h`-step forecast clamped to
 * `[0, 100]`. Interval pointers may be null.
 *
 * # Safety
 * `xs` must hold `n` values; each non-null output must hold `h` values.
 */
enum DpStatus dp_forecast(const double *xs,
                          size_t n,
                          size_t p,
                          size_t d,
                          size_t q,
                          bool auto_order,
                          size_t h,
                          double *out_point,
                          double *out_lo80,
                          double *out_hi80);

/**
 * Tier of `score`: 0 low, 1 mid, 2 high; -1 when the thresholds are invalid.
 */
int32_t dp_map_tier(double score, double low_max, double mid_max);

/**
 * Creates an engine. `config_toml` may be null for the default trigger
 * config. The reference population is `nrows` rows in schema order.
 *
 * # Safety
 * `schema` must be live, `reference` must hold `nrows * dp_schema_len`
 * values and `out` must be valid.
 */
enum DpStatus dp_engine_new(const struct DpSchema *schema,
                            const char *config_toml,
                            const double *reference,
                            size_t nrows,
                            struct DpEngine **out);

/**
 * Registers a custom event name.
 *
 * # Safety
 * `engine` must be live and `name` NUL-terminated.
 */
enum DpStatus dp_engine_register_event(struct DpEngine *engine, const char *name);

/**
 * Dispatches one JSON event `{name, device_id, ts_ms, params}`. When the
 * event emits a score record, `*out_record` receives it as JSON (free with
 * [`dp_string_free`]); otherwise it is set to null.
 *
 * # Safety
 * `engine` must be live, `event_json` NUL-terminated, `out_record` valid.
 */
enum DpStatus dp_engine_dispatch_json(struct DpEngine *engine,
                                      const char *event_json,
                                      char **out_record);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void dp_engine_free(struct DpEngine *engine);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void dp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEVPERF_H */
