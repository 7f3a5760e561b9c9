#ifndef TTNC_H
#define TTNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TtncStatus {
  TTNC_STATUS_OK = 0,
  TTNC_STATUS_NULL_POINTER = 1,
  TTNC_STATUS_INVALID_ARGUMENT = 2,
  TTNC_STATUS_SHAPE = 3,
  TTNC_STATUS_IO = 4,
  TTNC_STATUS_FORMAT = 5,
  TTNC_STATUS_TRAINING = 6,
  /**
   * The call succeeded but there is no value (e.g. no collision).
   */
  TTNC_STATUS_NO_RESULT = 7,
  TTNC_STATUS_BUFFER_TOO_SMALL = 8,
  TTNC_STATUS_PANIC = 9,
} TtncStatus;

/**
 * Calibrated pinhole camera.
 */
typedef struct TtncCamera TtncCamera;

/**
 * Trained forecaster loaded from a checkpoint.
 */
typedef struct TtncNetwork TtncNetwork;

/**
 * Simulated scene with rendered frames.
 */
typedef struct TtncScene TtncScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ttnc_last_error(void);

/**
 * Creates a camera. `rotation` is 9 row-major values, `translation` 3.
 *
 * # Safety
 * `rotation` and `translation` must point to 9 and 3 readable doubles;
 * `out` must be writable.
 */
enum TtncStatus ttnc_camera_new(double fx,
                                double fy,
                                double cx,
                                double cy,
                                double skew,
                                const double *rotation,
                                const double *translation,
                                uint32_t width,
                                uint32_t height,
                                struct TtncCamera **out);

/**
 * # Safety
 * `cam` must come from [`ttnc_camera_new`] and not be used afterwards.
 */
void ttnc_camera_free(struct TtncCamera *cam);

/**
 * Projects a sensor-frame point. Returns `NoResult` for points at or
 * behind the image plane. `in_image` may be null.
 *
 * # Safety
 * Pointers must be valid; `in_image` may be null.
 */
enum TtncStatus ttnc_camera_project(const struct TtncCamera *cam,
                                    double x,
                                    double y,
                                    double z,
                                    double *u,
                                    double *v,
                                    double *range,
                                    bool *in_image);

/**
 * Simulates one scene with default settings apart from the arguments.
 *
 * # Safety
 * `out` must be writable.
 */
enum TtncStatus ttnc_scene_simulate(uint64_t seed,
                                    uint32_t n_pedestrians,
                                    uint32_t image_size,
                                    struct TtncScene **out);

/**
 * # Safety
 * `scene` must come from [`ttnc_scene_simulate`] and not be used afterwards.
 */
void ttnc_scene_free(struct TtncScene *scene);

/**
 * # Safety
 * Pointers must be valid.
 */
enum TtncStatus ttnc_scene_frame_count(const struct TtncScene *scene, size_t *out);

/**
 * Copies frame `index` (row-major, `width·height` floats) into `buf`.
 * With a null `buf` only the dimensions are written.
 *
 * # Safety
 * `buf` must be null or hold `len` writable floats; `width`/`height` must
 * be writable.
 */
enum TtncStatus ttnc_scene_image(const struct TtncScene *scene,
                                 size_t index,
                                 float *buf,
                                 size_t len,
                                 uint32_t *width,
                                 uint32_t *height);

/**
 * Writes one near-collision flag (0/1) per frame into `out`.
 *
 * # Safety
 * `out` must hold `len` writable bytes.
 */
enum TtncStatus ttnc_scene_labels(const struct TtncScene *scene,
                                  double radius,
                                  uint8_t *out,
                                  size_t len);

/**
 * Time to near-collision (seconds) after frame `index` within the 6 s
 * horizon; `NoResult` if none.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TtncStatus ttnc_scene_time_to_collision(const struct TtncScene *scene,
                                             double radius,
                                             size_t index,
                                             double *out);

/**
 * First time a point at `(px, py)` moving with `(vx, vy)` comes within
 * `radius` of the origin, up to `horizon` seconds; `NoResult` if never.
 *
 * # Safety
 * `out` must be writable.
 */
enum TtncStatus ttnc_time_to_radius(double px,
                                    double py,
                                    double vx,
                                    double vy,
                                    double radius,
                                    double horizon,
                                    double *out);

/**
 * F1 score of a confusion matrix; `NoResult` when undefined.
 *
 * # Safety
 * `out` must be writable.
 */
enum TtncStatus ttnc_f1_score(uint64_t tp, uint64_t fn_, uint64_t fp, uint64_t tn, double *out);

/**
 * Loads a checkpoint written by `ttnc train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TtncStatus ttnc_network_load(const char *path, struct TtncNetwork **out);

/**
 * # Safety
 * `net` must come from [`ttnc_network_load`] and not be used afterwards.
 */
void ttnc_network_free(struct TtncNetwork *net);

/**
 * Window length, frame size and number of outputs.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TtncStatus ttnc_network_shape(const struct TtncNetwork *net,
                                   size_t *n_frames,
                                   size_t *height,
                                   size_t *width,
                                   size_t *outputs);

/**
 * Runs the network on `n_frames` consecutive frames (oldest first) packed
 * in `frames`. Writes the clamped time, the two class probabilities or the
 * four sigmoid activations to `out`.
 *
 * # Safety
 * `frames` must hold `frames_len` floats and `out` `out_len` doubles.
 */
enum TtncStatus ttnc_network_predict(const struct TtncNetwork *net,
                                     const float *frames,
                                     size_t frames_len,
                                     double *out,
                                     size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TTNC_H */
