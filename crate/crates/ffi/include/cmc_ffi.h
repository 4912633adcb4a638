#ifndef CMC_FFI_H
#define CMC_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmcAlternative {
  CMC_ALTERNATIVE_TWO_SIDED = 0,
  CMC_ALTERNATIVE_GREATER = 1,
  CMC_ALTERNATIVE_LESS = 2,
} CmcAlternative;

typedef enum CmcMode {
  CMC_MODE_MINIMAL = 0,
  CMC_MODE_DECISION_SUPPORT = 1,
} CmcMode;

typedef enum CmcState {
  CMC_STATE_INTUITIVE = 0,
  CMC_STATE_INTELLECTUAL = 1,
  CMC_STATE_UNKNOWN = 2,
} CmcState;

typedef enum CmcStatus {
  CMC_STATUS_OK = 0,
  CMC_STATUS_NULL_POINTER = 1,
  CMC_STATUS_INVALID_ARGUMENT = 2,
  CMC_STATUS_FORMAT = 3,
  CMC_STATUS_SCHEMA = 4,
  CMC_STATUS_DATA = 5,
  CMC_STATUS_NOT_FOUND = 6,
  CMC_STATUS_AMBIGUOUS = 7,
  CMC_STATUS_SINGULAR = 8,
  CMC_STATUS_IO = 9,
  CMC_STATUS_BUFFER_TOO_SMALL = 10,
  CMC_STATUS_PANIC = 11,
} CmcStatus;

typedef enum CmcThresholdForm {
  CMC_THRESHOLD_FORM_PRINTED = 0,
  CMC_THRESHOLD_FORM_CONVENTIONAL = 1,
} CmcThresholdForm;

/**
 * Opaque assistance controller handle.
 */
typedef struct CmcController CmcController;

/**
 * Opaque recording handle.
 */
typedef struct CmcRecording CmcRecording;

/**
 * Opaque decision tree handle.
 */
typedef struct CmcTreeModel CmcTreeModel;

/**
 * Band feature of one EEG/EMG pair.
 */
typedef struct CmcBandCoherence {
  double threshold;
  double significant_area;
  size_t n_significant_bins;
  double mean_coherence;
  size_t n_segments;
} CmcBandCoherence;

/**
 * Mann-Whitney result; `exact` is false for the normal approximation.
 */
typedef struct CmcMannWhitney {
  double u_statistic;
  double p_value;
  size_t n1;
  size_t n2;
  bool exact;
} CmcMannWhitney;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cmc_version(void);

/**
 * Copy the calling thread's last error message into `buf` (always
 * NUL-terminated when `capacity > 0`). Returns the full message length
 * excluding the NUL, 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `capacity` writable bytes.
 */
size_t cmc_last_error_message(char *buf, size_t capacity);

/**
 * Coherence significance threshold for `n_segments` segments.
 *
 * # Safety
 * `out_threshold` must be a valid pointer.
 */
enum CmcStatus cmc_coherence_threshold(double alpha,
                                       size_t n_segments,
                                       enum CmcThresholdForm form,
                                       double *out_threshold);

/**
 * Welch PSD of `x`. `segment_len` 0 selects eighths of the record with
 * 50% overlap. Writes `segment_len/2 + 1` frequencies and densities.
 *
 * # Safety
 * `x` must point to `n` doubles; the output buffers to `capacity` doubles
 * (or be null with capacity 0); `out_len` must be valid.
 */
enum CmcStatus cmc_welch_psd(const double *x,
                             size_t n,
                             double sample_rate_hz,
                             size_t segment_len,
                             double overlap,
                             double *out_freqs,
                             double *out_psd,
                             size_t capacity,
                             size_t *out_len);

/**
 * Integrated Welch power of `x` over `[lo_hz, hi_hz]`.
 *
 * # Safety
 * `x` must point to `n` doubles and `out_power` must be valid.
 */
enum CmcStatus cmc_band_power(const double *x,
                              size_t n,
                              double sample_rate_hz,
                              size_t segment_len,
                              double overlap,
                              double lo_hz,
                              double hi_hz,
                              double *out_power);

/**
 * Magnitude-squared coherence spectrum of `x` and `y`.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles each; the output buffers to
 * `capacity` doubles (or be null with capacity 0); `out_len` must be valid;
 * `out_n_segments` may be null.
 */
enum CmcStatus cmc_coherence(const double *x,
                             const double *y,
                             size_t n,
                             double sample_rate_hz,
                             size_t segment_len,
                             double overlap,
                             double *out_freqs,
                             double *out_coherence,
                             size_t capacity,
                             size_t *out_len,
                             size_t *out_n_segments);

/**
 * Significant coherence area of `x` and `y` over `[lo_hz, hi_hz]`.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles each and `out` must be valid.
 */
enum CmcStatus cmc_band_coherence(const double *x,
                                  const double *y,
                                  size_t n,
                                  double sample_rate_hz,
                                  size_t segment_len,
                                  double overlap,
                                  double lo_hz,
                                  double hi_hz,
                                  double alpha,
                                  enum CmcThresholdForm form,
                                  struct CmcBandCoherence *out);

/**
 * Mann-Whitney U test of `a` against `b`.
 *
 * # Safety
 * `a` and `b` must point to `n1` and `n2` doubles; `out` must be valid.
 */
enum CmcStatus cmc_mann_whitney(const double *a,
                                size_t n1,
                                const double *b,
                                size_t n2,
                                enum CmcAlternative alternative,
                                struct CmcMannWhitney *out);

/**
 * Load a recording from its metadata JSON and data CSV. `data_path` may be
 * null, in which case `path` is a stem or either file of the pair.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `data_path` null or one, and
 * `out` a valid pointer.
 */
enum CmcStatus cmc_recording_load(const char *path,
                                  const char *data_path,
                                  struct CmcRecording **out);

/**
 * # Safety
 * `rec` must be null or a handle from [`cmc_recording_load`] not yet freed.
 */
void cmc_recording_free(struct CmcRecording *rec);

/**
 * Sample rate, sample count and channel count of a recording.
 *
 * # Safety
 * `rec` must be a live handle; each out-pointer may be null.
 */
enum CmcStatus cmc_recording_info(const struct CmcRecording *rec,
                                  double *out_sample_rate_hz,
                                  size_t *out_n_samples,
                                  size_t *out_n_channels);

/**
 * Samples of the named channel.
 *
 * # Safety
 * `rec` must be a live handle, `name` a NUL-terminated string, `buf` null
 * or `capacity` writable doubles, `out_len` valid.
 */
enum CmcStatus cmc_recording_channel(const struct CmcRecording *rec,
                                     const char *name,
                                     double *buf,
                                     size_t capacity,
                                     size_t *out_len);

/**
 * Band coherence feature between two channels of a recording, Welch
 * segments of one eighth of the record.
 *
 * # Safety
 * `rec` must be a live handle, `eeg` and `emg` NUL-terminated strings and
 * `out` valid.
 */
enum CmcStatus cmc_recording_band_coherence(const struct CmcRecording *rec,
                                            const char *eeg,
                                            const char *emg,
                                            double lo_hz,
                                            double hi_hz,
                                            double alpha,
                                            struct CmcBandCoherence *out);

/**
 * Parse a tree model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid.
 */
enum CmcStatus cmc_tree_from_json(const char *json, struct CmcTreeModel **out);

/**
 * Read a tree model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum CmcStatus cmc_tree_load(const char *path, struct CmcTreeModel **out);

/**
 * # Safety
 * `model` must be null or a live tree handle.
 */
void cmc_tree_free(struct CmcTreeModel *model);

/**
 * Number of features the tree expects.
 *
 * # Safety
 * `model` must be a live handle and `out_n` valid.
 */
enum CmcStatus cmc_tree_n_features(const struct CmcTreeModel *model, size_t *out_n);

/**
 * Classify one feature vector laid out in the tree's schema order.
 *
 * # Safety
 * `model` must be a live handle, `values` point to `n` doubles and the
 * out-pointers be valid.
 */
enum CmcStatus cmc_tree_classify(const struct CmcTreeModel *model,
                                 const double *values,
                                 size_t n,
                                 enum CmcState *out_state,
                                 double *out_confidence);

/**
 * New controller in `initial_mode` with a switch after `hysteresis_k`
 * contradicting labels.
 *
 * # Safety
 * `out` must be valid.
 */
enum CmcStatus cmc_controller_new(size_t hysteresis_k,
                                  enum CmcMode initial_mode,
                                  struct CmcController **out);

/**
 * # Safety
 * `ctl` must be null or a live controller handle.
 */
void cmc_controller_free(struct CmcController *ctl);

/**
 * Feed one label; writes the mode after the step.
 *
 * # Safety
 * `ctl` must be a live handle and `out_mode` valid.
 */
enum CmcStatus cmc_controller_step(struct CmcController *ctl,
                                   enum CmcState state,
                                   double confidence,
                                   enum CmcMode *out_mode);

/**
 * Current mode and contradiction streak.
 *
 * # Safety
 * `ctl` must be a live handle; out-pointers may be null.
 */
enum CmcStatus cmc_controller_get(const struct CmcController *ctl,
                                  enum CmcMode *out_mode,
                                  size_t *out_streak);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMC_FFI_H */
