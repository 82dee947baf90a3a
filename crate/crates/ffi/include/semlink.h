#ifndef SEMLINK_H
#define SEMLINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SemlinkStatus {
  SEMLINK_STATUS_OK = 0,
  SEMLINK_STATUS_NULL_POINTER = 1,
  SEMLINK_STATUS_INVALID_ARGUMENT = 2,
  SEMLINK_STATUS_IO = 3,
  /**
   * Malformed file or dataset (bad magic, version, truncation, labels).
   */
  SEMLINK_STATUS_FORMAT = 4,
  SEMLINK_STATUS_DIMENSION_MISMATCH = 5,
  SEMLINK_STATUS_NON_FINITE = 6,
  SEMLINK_STATUS_PANIC = 7,
} SemlinkStatus;

/**
 * Channel model selector.
 */
typedef enum SemlinkChannel {
  SEMLINK_CHANNEL_AWGN = 0,
  SEMLINK_CHANNEL_RAYLEIGH = 1,
} SemlinkChannel;

/**
 * Opaque codec handle.
 */
typedef struct SemlinkCodec SemlinkCodec;

/**
 * Opaque knowledge-base handle.
 */
typedef struct SemlinkKb SemlinkKb;

/**
 * One search hit.
 */
typedef struct SemlinkMatch {
  uint32_t image_id;
  uint32_t label;
  /**
   * Euclidean (L2) distance.
   */
  double distance;
} SemlinkMatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *semlink_version(void);

/**
 * Message of the last failing call on this thread, or an empty string.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *semlink_last_error(void);

/**
 * Channel bandwidth ratio `(k/2) / (height·width·channels)` in lowest terms.
 */
enum SemlinkStatus semlink_cbr(uint64_t k,
                               uint64_t height,
                               uint64_t width,
                               uint64_t channels,
                               uint64_t *numerator,
                               uint64_t *denominator);

/**
 * Loads a knowledge base from an embedding dataset file.
 */
enum SemlinkStatus semlink_kb_load(const char *path, struct SemlinkKb **out);

/**
 * Builds a knowledge base from `count` row-major vectors of length `dim`.
 * Labels must be below `class_count`; classes are named `class_000`, ...
 */
enum SemlinkStatus semlink_kb_new(const float *vectors,
                                  const uint32_t *labels,
                                  const uint32_t *image_ids,
                                  size_t count,
                                  size_t dim,
                                  uint32_t class_count,
                                  struct SemlinkKb **out);

void semlink_kb_free(struct SemlinkKb *kb);

/**
 * Number of entries; 0 for a null handle.
 */
size_t semlink_kb_len(const struct SemlinkKb *kb);

/**
 * Vector dimension; 0 for a null handle.
 */
size_t semlink_kb_dim(const struct SemlinkKb *kb);

/**
 * Exact `k` nearest entries of `query` (length `dim`), nearest first, ties
 * by ascending image id. Writes `min(k, len)` matches to `out` and their
 * number to `written`.
 */
enum SemlinkStatus semlink_kb_search(const struct SemlinkKb *kb,
                                     const float *query,
                                     size_t dim,
                                     size_t k,
                                     struct SemlinkMatch *out,
                                     size_t *written);

/**
 * Loads trained codec parameters.
 */
enum SemlinkStatus semlink_codec_load(const char *path, struct SemlinkCodec **out);

/**
 * Freshly initialized (untrained) codec with compressed dimension `k`.
 */
enum SemlinkStatus semlink_codec_new(size_t k, uint64_t seed, struct SemlinkCodec **out);

enum SemlinkStatus semlink_codec_save(const struct SemlinkCodec *codec, const char *path);

void semlink_codec_free(struct SemlinkCodec *codec);

/**
 * Compressed dimension; 0 for a null handle.
 */
size_t semlink_codec_k(const struct SemlinkCodec *codec);

/**
 * Eval-mode encoder: `rows × 512` embeddings to `rows × k` codes (before
 * power normalization).
 */
enum SemlinkStatus semlink_codec_encode(const struct SemlinkCodec *codec,
                                        const float *y,
                                        size_t rows,
                                        float *z_out);

/**
 * Decoder: `rows × k` received codes to `rows × 512` embeddings.
 */
enum SemlinkStatus semlink_codec_decode(const struct SemlinkCodec *codec,
                                        const float *z,
                                        size_t rows,
                                        float *y_out);

/**
 * Sends `len` reals (`len` even, paired into `len / 2` complex symbols)
 * through the channel: power normalization, fading and noise, zero-forcing
 * equalization. `out` receives the equalized reals in the normalized
 * scale and `scale` the normalization factor that was applied. The
 * realization is a function of `(seed, stream)` only.
 */
enum SemlinkStatus semlink_channel_transmit(const double *signal,
                                            size_t len,
                                            enum SemlinkChannel channel,
                                            double snr_db,
                                            uint64_t seed,
                                            uint64_t stream,
                                            double *out,
                                            double *scale);

/**
 * Semantic accuracy of the dataset file at `transmit_path` against `kb`.
 * A null `codec` evaluates the uncompressed baseline.
 */
enum SemlinkStatus semlink_semantic_accuracy(const struct SemlinkCodec *codec,
                                             const char *transmit_path,
                                             const struct SemlinkKb *kb,
                                             enum SemlinkChannel channel,
                                             double snr_db,
                                             uint32_t trials_per_item,
                                             uint64_t seed,
                                             double *accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMLINK_H */
