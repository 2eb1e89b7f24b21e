#ifndef R2D2_H
#define R2D2_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function in this API.
 */
typedef enum {
  R2D2_STATUS_OK = 0,
  R2D2_STATUS_NULL_POINTER = 1,
  R2D2_STATUS_INVALID_ARGUMENT = 2,
  R2D2_STATUS_IO = 3,
  /**
   * Not a ZIP, missing `classes.dex`, or a corrupt entry.
   */
  R2D2_STATUS_ARCHIVE = 4,
  /**
   * Bad DEX magic, size or checksum.
   */
  R2D2_STATUS_DEX = 5,
  /**
   * Empty input, bad dimensions or PNG failures.
   */
  R2D2_STATUS_IMAGE = 6,
  /**
   * Unreadable checkpoint or an inference error.
   */
  R2D2_STATUS_MODEL = 7,
  /**
   * Edit distance input exceeded the cap in strict mode.
   */
  R2D2_STATUS_SKIPPED = 8,
  R2D2_STATUS_INTERNAL = 99,
} r2d2_status;

/**
 * An encoded RGB image.
 */
typedef struct r2d2_image r2d2_image;

/**
 * A trained classifier loaded from a checkpoint.
 */
typedef struct r2d2_model r2d2_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *r2d2_last_error_message(void);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *r2d2_status_name(r2d2_status status);

/**
 * Encodes `len` bytes as an RGB image, three bytes per pixel. `width` 0
 * selects the automatic power-of-two width.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
r2d2_status r2d2_image_encode(const uint8_t *data, size_t len, size_t width, r2d2_image **out);

/**
 * Loads an APK, DEX or PNG file. APK and DEX inputs are validated and
 * encoded with the automatic width.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must be writable.
 */
r2d2_status r2d2_image_from_file(const char *path, r2d2_image **out);

/**
 * Nearest-neighbour resize into a new image.
 *
 * # Safety
 * `image` must be a live handle and `out` must be writable.
 */
r2d2_status r2d2_image_resize(const r2d2_image *image,
                              size_t width,
                              size_t height,
                              r2d2_image **out);

/**
 * Width in pixels, 0 for NULL.
 *
 * # Safety
 * `image` must be NULL or a live handle.
 */
size_t r2d2_image_width(const r2d2_image *image);

/**
 * Height in pixels, 0 for NULL.
 *
 * # Safety
 * `image` must be NULL or a live handle.
 */
size_t r2d2_image_height(const r2d2_image *image);

/**
 * Interleaved RGB bytes, row-major, `width * height * 3` long. The pointer
 * is owned by the image.
 *
 * # Safety
 * `image` must be NULL or a live handle; `len` may be NULL.
 */
const uint8_t *r2d2_image_data(const r2d2_image *image, size_t *len);

/**
 * Writes an 8-bit RGB PNG.
 *
 * # Safety
 * `image` must be a live handle and `path` a NUL-terminated string.
 */
r2d2_status r2d2_image_write_png(const r2d2_image *image, const char *path);

/**
 * # Safety
 * `image` must be NULL or a handle not yet freed.
 */
void r2d2_image_free(r2d2_image *image);

/**
 * Mean squared error over all channels. Images of different sizes are
 * first resized to the smaller one.
 *
 * # Safety
 * `a` and `b` must be live handles and `out` writable.
 */
r2d2_status r2d2_mse(const r2d2_image *a, const r2d2_image *b, double *out);

/**
 * Similarity in percent, 100 for identical images.
 *
 * # Safety
 * `a` and `b` must be live handles and `out` writable.
 */
r2d2_status r2d2_similarity(const r2d2_image *a, const r2d2_image *b, double *out);

/**
 * Byte-level edit distance. Inputs longer than `cap` bytes (0 for the
 * default cap) are truncated, or reported as `Skipped` when `strict`.
 *
 * # Safety
 * `a` and `b` must point to `a_len` and `b_len` readable bytes; `out`
 * must be writable.
 */
r2d2_status r2d2_levenshtein(const uint8_t *a,
                             size_t a_len,
                             const uint8_t *b,
                             size_t b_len,
                             size_t cap,
                             bool strict,
                             size_t *out);

/**
 * Validates a DEX header: magic, declared size and, when `strict`, the
 * Adler-32 checksum. On success `version` (if not NULL) receives e.g. 35.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `version` may be NULL.
 */
r2d2_status r2d2_dex_validate(const uint8_t *data, size_t len, bool strict, uint32_t *version);

/**
 * Loads a checkpoint written by `r2d2 train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
r2d2_status r2d2_model_load(const char *path, r2d2_model **out);

/**
 * The network input size.
 *
 * # Safety
 * `model` must be a live handle; `width` and `height` may be NULL.
 */
r2d2_status r2d2_model_input_size(const r2d2_model *model, size_t *width, size_t *height);

/**
 * Malicious-class probability of an image. The image is resized to the
 * network input first.
 *
 * # Safety
 * `model` and `image` must be live handles and `probability` writable.
 */
r2d2_status r2d2_model_predict(const r2d2_model *model,
                               const r2d2_image *image,
                               double *probability);

/**
 * Loads, encodes and classifies an APK, DEX or PNG file.
 *
 * # Safety
 * `model` must be a live handle, `path` a NUL-terminated string and
 * `probability` writable.
 */
r2d2_status r2d2_model_scan_file(const r2d2_model *model, const char *path, double *probability);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void r2d2_model_free(r2d2_model *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* R2D2_H */
