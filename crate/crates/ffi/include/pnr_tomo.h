#ifndef PNR_TOMO_H
#define PNR_TOMO_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PnrStatus {
  PNR_STATUS_OK = 0,
  PNR_STATUS_NULL_POINTER = 1,
  PNR_STATUS_INVALID_PARAMETER = 2,
  PNR_STATUS_DIMENSION_MISMATCH = 3,
  PNR_STATUS_MALFORMED_DATA = 4,
  PNR_STATUS_CONFIG = 5,
  PNR_STATUS_IO = 6,
  // The solver stopped early; the output handle still holds its best iterate.
  PNR_STATUS_NOT_CONVERGED = 7,
  PNR_STATUS_PANIC = 8,
} PnrStatus;

typedef enum PnrGating {
  PNR_GATING_SMART = 0,
  PNR_GATING_NAIVE = 1,
  PNR_GATING_IDEAL = 2,
} PnrGating;

// Detector parameters.
typedef struct PnrDetector PnrDetector;

// POVM matrix, `5 x (M + 1)`.
typedef struct PnrPovm PnrPovm;

// Reconstruction output.
typedef struct PnrReconstruction PnrReconstruction;

// Per-probe outcome counts.
typedef struct PnrStats PnrStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL terminated,
// truncated to `len - 1` bytes) and returns the full message length, or 0
// when there is no error. `buf` may be null to query the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t pnr_last_error_message(char *buf, size_t len);

// Detector with the calibrated efficiencies and dark-count probabilities.
//
// # Safety
// `out` must be a valid pointer.
enum PnrStatus pnr_detector_calibrated(struct PnrDetector **out);

// Detector with per-branch efficiencies `eta[4]`, dark-click probabilities
// `p_dark[4]` and splitting ratios `split[4]` (null for an even split).
//
// # Safety
// `eta` and `p_dark` must point to 4 doubles; `split` must be null or point
// to 4 doubles; `out` must be valid.
enum PnrStatus pnr_detector_new(const double *eta,
                                const double *p_dark,
                                const double *split,
                                struct PnrDetector **out);

// # Safety
// `detector` must be null or a handle from this library, freed once.
void pnr_detector_free(struct PnrDetector *detector);

// Analytic POVM up to photon number `truncation`.
//
// # Safety
// `detector` must be a valid handle and `out` a valid pointer.
enum PnrStatus pnr_detector_theoretical_povm(const struct PnrDetector *detector,
                                             size_t truncation,
                                             struct PnrPovm **out);

// Largest photon number `M` of the POVM, or 0 for a null handle.
//
// # Safety
// `povm` must be null or a valid handle.
size_t pnr_povm_truncation(const struct PnrPovm *povm);

// Writes `Xi[n][m]` to `value`.
//
// # Safety
// `povm` must be a valid handle and `value` a valid pointer.
enum PnrStatus pnr_povm_get(const struct PnrPovm *povm, size_t n, size_t m, double *value);

// # Safety
// `povm` must be null or a handle from this library, freed once.
void pnr_povm_free(struct PnrPovm *povm);

// Simulates `count` coherent probes with the given mean photon numbers,
// `pulses` gated pulses each.
//
// # Safety
// `detector` must be valid, `means` must point to `count` doubles and `out`
// must be valid.
enum PnrStatus pnr_simulate(const struct PnrDetector *detector,
                            const double *means,
                            size_t count,
                            uint64_t pulses,
                            uint32_t dead_time,
                            enum PnrGating gating,
                            uint64_t seed,
                            struct PnrStats **out);

// Builds statistics from `count` probe means and a row-major `count x 5`
// array of outcome counts.
//
// # Safety
// `means` must point to `count` doubles, `counts` to `5 * count` integers,
// and `out` must be valid.
enum PnrStatus pnr_stats_new(const double *means,
                             const uint64_t *counts,
                             size_t count,
                             struct PnrStats **out);

// Number of probes, or 0 for a null handle.
//
// # Safety
// `stats` must be null or a valid handle.
size_t pnr_stats_probes(const struct PnrStats *stats);

// Writes the number of gated pulses of probe `j` that gave `n` clicks.
//
// # Safety
// `stats` must be a valid handle and `value` a valid pointer.
enum PnrStatus pnr_stats_count(const struct PnrStats *stats, size_t j, size_t n, uint64_t *value);

// # Safety
// `stats` must be null or a handle from this library, freed once.
void pnr_stats_free(struct PnrStats *stats);

// Reconstructs the POVM with default solver settings and the given
// smoothing weight. On [`PnrStatus::NotConverged`] `out` still receives the
// best iterate.
//
// # Safety
// `stats` must be a valid handle and `out` a valid pointer.
enum PnrStatus pnr_reconstruct(const struct PnrStats *stats,
                               double smoothing_weight,
                               struct PnrReconstruction **out);

// New POVM handle holding a copy of the reconstructed POVM.
//
// # Safety
// `rec` must be a valid handle and `out` a valid pointer.
enum PnrStatus pnr_reconstruction_povm(const struct PnrReconstruction *rec, struct PnrPovm **out);

// Objective value at the solution, NaN for a null handle.
//
// # Safety
// `rec` must be null or a valid handle.
double pnr_reconstruction_objective(const struct PnrReconstruction *rec);

// Projected-gradient KKT residual at the solution, NaN for a null handle.
//
// # Safety
// `rec` must be null or a valid handle.
double pnr_reconstruction_kkt_residual(const struct PnrReconstruction *rec);

// # Safety
// `rec` must be null or a handle from this library, freed once.
void pnr_reconstruction_free(struct PnrReconstruction *rec);

// Overlap `sum_i sqrt(p_i q_i)` of two distributions of length `len`.
//
// # Safety
// `p` and `q` must point to `len` doubles and `value` must be valid.
enum PnrStatus pnr_fidelity(const double *p, const double *q, size_t len, double *value);

// Q-function of every outcome at `|alpha|^2 = mean_photons`, written to
// `values[5]`. `truncated_tail` (nullable) receives the Poisson mass beyond
// the POVM truncation.
//
// # Safety
// `povm` must be valid, `values` must point to 5 writable doubles and
// `truncated_tail` must be null or valid.
enum PnrStatus pnr_q_function(const struct PnrPovm *povm,
                              double mean_photons,
                              double *values,
                              double *truncated_tail);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNR_TOMO_H */
