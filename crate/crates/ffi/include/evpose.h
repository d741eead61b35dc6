#ifndef EVPOSE_H
#define EVPOSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EvposeStatus {
  EVPOSE_STATUS_OK = 0,
  EVPOSE_STATUS_NULL_ARGUMENT = 1,
  EVPOSE_STATUS_CONFIG_ERROR = 2,
  EVPOSE_STATUS_DATA_ERROR = 3,
  EVPOSE_STATUS_INTERNAL_ERROR = 4,
  EVPOSE_STATUS_BUFFER_TOO_SMALL = 5,
  EVPOSE_STATUS_PANIC = 6,
} EvposeStatus;

/**
 * Parsed event stream.
 */
typedef struct EvposeStream EvposeStream;

/**
 * Streaming TORE state.
 */
typedef struct EvposeTore EvposeTore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Never null; owned by the library.
 */
const char *evpose_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *evpose_version(void);

/**
 * Normalized TORE value for an event age of `delta_us` microseconds.
 */
double evpose_tore_value(double delta_us, double tau_us);

/**
 * Parses an EVT1 buffer.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` must be writable.
 */
enum EvposeStatus evpose_stream_parse(const uint8_t *bytes, size_t len, struct EvposeStream **out);

/**
 * Reads an EVT1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum EvposeStatus evpose_stream_read_file(const char *path, struct EvposeStream **out);

/**
 * Builds a stream from parallel arrays; events must be in time order.
 *
 * # Safety
 * Each array must hold `n` elements; `out` must be writable.
 */
enum EvposeStatus evpose_stream_from_arrays(uint16_t width,
                                            uint16_t height,
                                            const uint64_t *t,
                                            const uint16_t *x,
                                            const uint16_t *y,
                                            const int8_t *p,
                                            size_t n,
                                            struct EvposeStream **out);

/**
 * # Safety
 * `s` must be null or a handle from this library, not yet freed.
 */
void evpose_stream_free(struct EvposeStream *s);

/**
 * # Safety
 * `s` must be a live handle.
 */
size_t evpose_stream_len(const struct EvposeStream *s);

/**
 * # Safety
 * `s` must be a live handle; `width` and `height` must be writable.
 */
enum EvposeStatus evpose_stream_geometry(const struct EvposeStream *s,
                                         uint16_t *width,
                                         uint16_t *height);

/**
 * Copies event `index`.
 *
 * # Safety
 * `s` must be a live handle; output pointers must be writable.
 */
enum EvposeStatus evpose_stream_event(const struct EvposeStream *s,
                                      size_t index,
                                      uint64_t *t,
                                      uint16_t *x,
                                      uint16_t *y,
                                      int8_t *p);

/**
 * Serializes to EVT1. With `buf` null (or too small) only `*written` is set
 * to the required size, and `BufferTooSmall` is returned if `buf` was given.
 *
 * # Safety
 * `s` must be a live handle; `buf` must hold `cap` bytes when non-null.
 */
enum EvposeStatus evpose_stream_serialize(const struct EvposeStream *s,
                                          uint8_t *buf,
                                          size_t cap,
                                          size_t *written);

/**
 * # Safety
 * `out` must be writable.
 */
enum EvposeStatus evpose_tore_new(uint16_t width,
                                  uint16_t height,
                                  size_t depth,
                                  uint64_t tau_us,
                                  struct EvposeTore **out);

/**
 * # Safety
 * `t` must be null or a live handle.
 */
void evpose_tore_free(struct EvposeTore *t);

/**
 * Channel count (`2 × depth`).
 *
 * # Safety
 * `t` must be a live handle.
 */
size_t evpose_tore_channels(const struct EvposeTore *t);

/**
 * # Safety
 * `t` must be a live handle.
 */
enum EvposeStatus evpose_tore_ingest(struct EvposeTore *t,
                                     uint64_t time_us,
                                     uint16_t x,
                                     uint16_t y,
                                     int8_t polarity);

/**
 * Ingests every event of a stream.
 *
 * # Safety
 * Both handles must be live.
 */
enum EvposeStatus evpose_tore_ingest_stream(struct EvposeTore *t, const struct EvposeStream *s);

/**
 * Writes the `channels × height × width` volume at `t_query_us` into `buf`.
 *
 * # Safety
 * `t` must be live; `buf` must hold `cap` floats; `written` must be writable.
 */
enum EvposeStatus evpose_tore_materialize(const struct EvposeTore *t,
                                          uint64_t t_query_us,
                                          float *buf,
                                          size_t cap,
                                          size_t *written);

/**
 * # Safety
 * `pred` and `gt` must hold 39 doubles; `out` must be writable.
 */
enum EvposeStatus evpose_mpjpe(const double *pred, const double *gt, double *out);

/**
 * # Safety
 * As [`evpose_mpjpe`].
 */
enum EvposeStatus evpose_pck(const double *pred, const double *gt, double alpha_mm, double *out);

/**
 * # Safety
 * As [`evpose_mpjpe`].
 */
enum EvposeStatus evpose_auc(const double *pred, const double *gt, double *out);

/**
 * Runs the reuse scheduler over `frames` frames with a backend whose plans
 * always carry `scores` (one per offset). Writes the number of backend calls
 * and, when `recompute` is non-null, one 0/1 flag per frame.
 *
 * # Safety
 * `scores` must hold `horizon` doubles; `recompute`, if non-null, `frames` bytes.
 */
enum EvposeStatus evpose_schedule_fixed(const double *scores,
                                        size_t horizon,
                                        size_t frames,
                                        double beta,
                                        size_t *calls,
                                        uint8_t *recompute);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVPOSE_H */
