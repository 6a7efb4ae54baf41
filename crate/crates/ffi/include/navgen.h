#ifndef NAVGEN_H
#define NAVGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NavgenStatus {
  NAVGEN_STATUS_OK = 0,
  NAVGEN_STATUS_NULL_POINTER = 1,
  NAVGEN_STATUS_INVALID_ARGUMENT = 2,
  NAVGEN_STATUS_CONFIG = 3,
  NAVGEN_STATUS_IO = 4,
  NAVGEN_STATUS_FORMAT = 5,
  NAVGEN_STATUS_NUMERIC = 6,
  NAVGEN_STATUS_PANIC = 7,
} NavgenStatus;

/**
 * Opaque model handle.
 */
typedef struct NavgenModel NavgenModel;

/**
 * Opaque world handle.
 */
typedef struct NavgenWorld NavgenWorld;

/**
 * Text-generation scores of one candidate against its references.
 */
typedef struct NavgenTextScores {
  double em;
  double bleu4;
  double rouge_l;
  double cider;
  double meteor;
} NavgenTextScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes, excluding
 * the terminator. An empty message means the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t navgen_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *navgen_version(void);

/**
 * Generates a world with default settings and `num_viewpoints` viewpoints.
 *
 * # Safety
 * `out` must point to writable storage for one handle.
 */
enum NavgenStatus navgen_world_generate(uint64_t seed,
                                        size_t num_viewpoints,
                                        struct NavgenWorld **out);

/**
 * Reads a world file written by `navgen gen-data`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as above.
 */
enum NavgenStatus navgen_world_load(const char *path, struct NavgenWorld **out);

/**
 * Number of viewpoints, or 0 for a null handle.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
size_t navgen_world_len(const struct NavgenWorld *world);

/**
 * Geodesic distance in meters between two viewpoints.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum NavgenStatus navgen_world_geodesic(const struct NavgenWorld *world,
                                        size_t a,
                                        size_t b,
                                        double *out);

/**
 * Writes the shortest path from `a` to `b` into `path` (capacity `cap`) and
 * its length into `len`. When `cap` is too small nothing is copied, `len`
 * still receives the required size and the call fails with
 * `InvalidArgument`.
 *
 * # Safety
 * `path` must point to `cap` writable elements (may be null when `cap` is 0).
 */
enum NavgenStatus navgen_world_shortest_path(const struct NavgenWorld *world,
                                             size_t a,
                                             size_t b,
                                             size_t *path,
                                             size_t cap,
                                             size_t *len);

/**
 * # Safety
 * `world` must be null or a handle not yet freed.
 */
void navgen_world_free(struct NavgenWorld *world);

/**
 * Freshly initialized model from a run configuration file, or the standard
 * configuration when `config_path` is null.
 *
 * # Safety
 * `config_path` must be null or NUL-terminated; `out` writable.
 */
enum NavgenStatus navgen_model_init(const char *config_path, struct NavgenModel **out);

/**
 * Loads a checkpoint written by `navgen train`, with the run configuration
 * stored alongside it.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum NavgenStatus navgen_model_load(const char *path, struct NavgenModel **out);

/**
 * Trainable parameter count, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t navgen_model_num_params(const struct NavgenModel *model);

/**
 * Evaluates `model` on one split of a data directory and reports a single
 * aggregate metric (`"SR"`, `"SPL"`, `"EM"`, ...) for one task kind.
 * `max_episodes` of 0 means all episodes.
 *
 * # Safety
 * String arguments must be NUL-terminated; `model` live; `out` writable.
 */
enum NavgenStatus navgen_evaluate(const struct NavgenModel *model,
                                  const char *data_dir,
                                  const char *split,
                                  const char *kind,
                                  const char *metric,
                                  size_t max_episodes,
                                  double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void navgen_model_free(struct NavgenModel *model);

/**
 * Scores `candidate` against `n_refs` reference strings. CIDEr is computed
 * over this single item, so its document frequencies come from the
 * references alone.
 *
 * # Safety
 * `candidate` and each of the `n_refs` entries of `refs` must be
 * NUL-terminated strings; `out` writable.
 */
enum NavgenStatus navgen_text_scores(const char *candidate,
                                     const char *const *refs,
                                     size_t n_refs,
                                     struct NavgenTextScores *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NAVGEN_H */
