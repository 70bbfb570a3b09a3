#ifndef BGESTIM_H
#define BGESTIM_H

/* Generated from the bgestim-capi crate; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum BgestimStatus {
  BGESTIM_STATUS_OK = 0,
  BGESTIM_STATUS_NULL_POINTER = 1,
  BGESTIM_STATUS_INVALID_ARGUMENT = 2,
  BGESTIM_STATUS_GEOMETRY = 3,
  BGESTIM_STATUS_INSUFFICIENT_FRAMES = 4,
  BGESTIM_STATUS_IO = 5,
  BGESTIM_STATUS_ESTIMATION = 6,
  BGESTIM_STATUS_INTERNAL = 7,
} BgestimStatus;

/**
 * Estimator settings. Create with `bgestim_config_new`, adjust with the
 * setters, and free with `bgestim_config_free`.
 */
typedef struct BgestimConfig BgestimConfig;

/**
 * Accumulates frames and estimates their static background.
 */
typedef struct BgestimEstimator BgestimEstimator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string; static storage, do not free.
 */
const char *bgestim_version(void);

/**
 * Message describing the most recent failure on the calling thread, or
 * null if the last call succeeded. The pointer is valid until the next
 * call into this library from the same thread; do not free it.
 */
const char *bgestim_last_error(void);

/**
 * Creates a config holding the built-in defaults.
 */
struct BgestimConfig *bgestim_config_new(void);

/**
 * Frees a config. A null pointer is ignored.
 *
 * # Safety
 * `config` must be a pointer returned by `bgestim_config_new` that has
 * not already been freed.
 */
void bgestim_config_free(struct BgestimConfig *config);

/**
 * Sets the block edge length in pixels (minimum 2).
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_block_size(struct BgestimConfig *config, uint32_t block_size);

/**
 * Sets the correlation threshold for representative matching, in (0, 1).
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_t1(struct BgestimConfig *config, double t1);

/**
 * Pins the difference threshold to a fixed positive value, skipping the
 * automatic noise estimation.
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_t2(struct BgestimConfig *config, double t2);

/**
 * Restores automatic difference-threshold estimation.
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_clear_t2(struct BgestimConfig *config);

/**
 * Caps the neighbour-count exponent of the smoothness prior.
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_eta_cap(struct BgestimConfig *config, uint32_t eta_cap);

/**
 * Sets the softmax temperature divisor of the prior (positive).
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_tau(struct BgestimConfig *config, double tau);

/**
 * Sets the evidence cap in seconds of observation (positive).
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_w_max_seconds(struct BgestimConfig *config,
                                                    double w_max_seconds);

/**
 * Sets the ICM refinement iteration cap; 0 disables refinement.
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_icm_iterations(struct BgestimConfig *config,
                                                     uint32_t icm_iterations);

/**
 * Enables or disables the multi-threaded clustering and refinement paths.
 *
 * # Safety
 * `config` must be a live pointer from `bgestim_config_new`.
 */
enum BgestimStatus bgestim_config_set_parallel(struct BgestimConfig *config, bool parallel);

/**
 * Creates an estimator for `width` x `height` greyscale frames sampled at
 * `fps` frames per second. `config` may be null for the defaults; its
 * settings are copied, so it may be freed afterwards.
 *
 * Returns null when the geometry or rate is unusable;
 * `bgestim_last_error` explains why.
 *
 * # Safety
 * `config`, when non-null, must be a live pointer from
 * `bgestim_config_new`.
 */
struct BgestimEstimator *bgestim_estimator_new(const struct BgestimConfig *config,
                                               uint32_t width,
                                               uint32_t height,
                                               double fps);

/**
 * Frees an estimator and everything it owns, including the background
 * buffer. A null pointer is ignored.
 *
 * # Safety
 * `estimator` must be a pointer returned by `bgestim_estimator_new` that
 * has not already been freed.
 */
void bgestim_estimator_free(struct BgestimEstimator *estimator);

/**
 * Appends one frame of `width * height` bytes in row-major order. Frames
 * must be pushed in temporal order, before `bgestim_estimator_finish`.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new` and
 * `pixels` must point to `len` readable bytes.
 */
enum BgestimStatus bgestim_estimator_push_frame(struct BgestimEstimator *estimator,
                                                const uint8_t *pixels,
                                                size_t len);

/**
 * Runs the estimation pipeline over the buffered frames. On success the
 * background accessors and `bgestim_estimator_report_json` become
 * available and further pushes are rejected; on failure the buffered
 * frames are kept, so more can be pushed and finish retried.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new`.
 */
enum BgestimStatus bgestim_estimator_finish(struct BgestimEstimator *estimator);

/**
 * Width of the estimated background in pixels, or 0 before a successful
 * finish. Inputs are cropped to whole blocks, so this may be smaller
 * than the frame width.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new`.
 */
uint32_t bgestim_estimator_background_width(const struct BgestimEstimator *estimator);

/**
 * Height of the estimated background in pixels, or 0 before a successful
 * finish.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new`.
 */
uint32_t bgestim_estimator_background_height(const struct BgestimEstimator *estimator);

/**
 * Borrowed pointer to the row-major background pixels, or null before a
 * successful finish. Valid until the estimator is freed.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new`.
 */
const uint8_t *bgestim_estimator_background(const struct BgestimEstimator *estimator);

/**
 * Copies the background into `out`, which must hold exactly
 * `background_width * background_height` bytes.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new` and
 * `out` must point to `len` writable bytes.
 */
enum BgestimStatus bgestim_estimator_background_copy(const struct BgestimEstimator *estimator,
                                                     uint8_t *out,
                                                     size_t len);

/**
 * Serializes the run configuration and stage statistics as JSON. The
 * returned string must be freed with `bgestim_string_free`. Returns null
 * before a successful finish.
 *
 * # Safety
 * `estimator` must be a live pointer from `bgestim_estimator_new`.
 */
char *bgestim_estimator_report_json(const struct BgestimEstimator *estimator);

/**
 * Frees a string returned by this library. A null pointer is ignored.
 *
 * # Safety
 * `s` must be a pointer returned by `bgestim_estimator_report_json` that
 * has not already been freed.
 */
void bgestim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BGESTIM_H */
