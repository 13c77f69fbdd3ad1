#ifndef SPIKECODEC_H
#define SPIKECODEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpkStatus {
  SPK_STATUS_OK = 0,
  SPK_STATUS_NULL_POINTER = 1,
  SPK_STATUS_CONFIG = 2,
  SPK_STATUS_INPUT = 3,
  SPK_STATUS_FORMAT = 4,
  SPK_STATUS_COMPAT = 5,
  SPK_STATUS_NUMERIC = 6,
  SPK_STATUS_IO = 7,
  SPK_STATUS_TOO_LARGE = 8,
  SPK_STATUS_PANIC = 9,
} SpkStatus;

/**
 * A kernel bank together with its correlation table.
 */
typedef struct SpkBank SpkBank;

/**
 * A spike train plus the threshold parameters and gain it was encoded with.
 */
typedef struct SpkTrain SpkTrain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default ERB-spaced gammatone bank of `count` kernels at `fs`.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle into.
 */
enum SpkStatus spk_bank_default(uint32_t count, uint32_t fs, struct SpkBank **out);

/**
 * Bank from spec text (`gammatone f=... n=... b=... phase=...` per line).
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpkStatus spk_bank_from_spec(const char *spec, uint32_t fs, struct SpkBank **out);

/**
 * # Safety
 * `bank` must come from a `spk_bank_*` constructor, or be null.
 */
void spk_bank_free(struct SpkBank *bank);

/**
 * Number of kernels, 0 for a null handle.
 *
 * # Safety
 * `bank` must be a live handle or null.
 */
size_t spk_bank_len(const struct SpkBank *bank);

/**
 * # Safety
 * `bank` must be a live handle or null.
 */
uint64_t spk_bank_hash(const struct SpkBank *bank);

/**
 * Encodes `len` samples.
 *
 * # Safety
 * `signal` must point to `len` doubles (may be null when `len` is 0); `bank`
 * must be live and `out` valid.
 */
enum SpkStatus spk_encode(const struct SpkBank *bank,
                          const double *signal,
                          size_t len,
                          double baseline,
                          double ahp_jump,
                          double refractory,
                          bool store_measured,
                          struct SpkTrain **out);

/**
 * # Safety
 * `train` must come from `spk_encode` or `spk_train_read`, or be null.
 */
void spk_train_free(struct SpkTrain *train);

/**
 * Spike count, 0 for a null handle.
 *
 * # Safety
 * `train` must be a live handle or null.
 */
size_t spk_train_len(const struct SpkTrain *train);

/**
 * Length of the encoded signal in samples.
 *
 * # Safety
 * `train` must be a live handle or null.
 */
size_t spk_train_signal_len(const struct SpkTrain *train);

/**
 * Spike `index`. Any of the output pointers may be null.
 *
 * # Safety
 * `train` must be live; non-null outputs must be writable.
 */
enum SpkStatus spk_train_get(const struct SpkTrain *train,
                             size_t index,
                             uint32_t *kernel_id,
                             uint64_t *sample_index,
                             double *threshold);

/**
 * Batch decode into `out`, which must hold exactly `spk_train_signal_len` samples.
 *
 * # Safety
 * Handles must be live; `out` must point to `out_len` writable doubles.
 */
enum SpkStatus spk_decode_batch(const struct SpkBank *bank,
                                const struct SpkTrain *train,
                                double *out,
                                size_t out_len);

/**
 * Windowed decode with window size `window`.
 *
 * # Safety
 * As for [`spk_decode_batch`].
 */
enum SpkStatus spk_decode_window(const struct SpkBank *bank,
                                 const struct SpkTrain *train,
                                 size_t window,
                                 double *out,
                                 size_t out_len);

/**
 * Writes the train as a spike file.
 *
 * # Safety
 * `train` must be live and `path` NUL-terminated.
 */
enum SpkStatus spk_train_write(const struct SpkTrain *train, const char *path);

/**
 * Reads a spike file; missing thresholds are replayed from the header parameters.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum SpkStatus spk_train_read(const char *path, struct SpkTrain **out);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len` 0.
 */
size_t spk_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKECODEC_H */
