/* C interface to the siqrng bias-free source-independent QRNG toolkit. */

#ifndef SIQRNG_H
#define SIQRNG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum SiqrngStatus {
  SiqrngStatus_Ok = 0,
  SiqrngStatus_NullPointer = 1,
  SiqrngStatus_InvalidParameter = 2,
  SiqrngStatus_NoSolution = 3,
  SiqrngStatus_InvalidState = 4,
  SiqrngStatus_DegenerateInput = 5,
  SiqrngStatus_LengthMismatch = 6,
  SiqrngStatus_NoExtractableOutput = 7,
  SiqrngStatus_InsufficientData = 8,
  SiqrngStatus_Internal = 9,
} SiqrngStatus;

// Opaque Toeplitz extractor handle.
typedef struct SiqrngExtractor SiqrngExtractor;

// One measurement setting of a solved routine.
typedef struct SiqrngSetting {
  double delta_phi;
  double xi;
  double phi;
} SiqrngSetting;

// Solved operating points of one routine: the X-measuring and P-measuring
// settings.
typedef struct SiqrngRoutineSolution {
  uint8_t routine_id;
  struct SiqrngSetting x;
  struct SiqrngSetting p;
} SiqrngRoutineSolution;

// Certification result from precomputed statistics.
typedef struct SiqrngCertification {
  double lambda;
  double s_holevo;
  double r_per_sample;
  double r_dis_avg;
  uint64_t t_switch;
  // 1 when `r_dis_avg > 0`.
  uint8_t certifiable;
} SiqrngCertification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *siqrng_version(void);

// Static description of a status code.
const char *siqrng_strerror(enum SiqrngStatus status);

// Solve one routine's bias-free operating points from the gain aggregates
// `(a, b, c)`.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_solve_routine(uint8_t routine_id,
                                       double a,
                                       double b,
                                       double c,
                                       struct SiqrngRoutineSolution *out);

// Compensation phase cancelling the DC bracket at splitting ratio `xi`.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_compensation_phase(double a, double b, double c, double xi, double *out);

// Entropy bound of a Gaussian state with symplectic-like parameter
// `lambda >= 1`, in bits.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_holevo_bound(double lambda, double *out);

// Switching cost `ceil(log2 C(n_tot, n_c))` in bits.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_switching_cost(uint64_t n_tot, uint64_t n_c, uint64_t *out);

// Certify extractable randomness from worst-cased variances (in shot-noise
// units) and the measured code entropy.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_certify(double v_x_bar_snu,
                                 double v_p_bar_snu,
                                 double h_axi,
                                 uint64_t n_tot,
                                 uint64_t n_c,
                                 struct SiqrngCertification *out);

// Leftover-hash output bound for `k` input bits at `r_dis_avg` certified
// bits per `bits_per_sample`-bit sample and collision budget
// `2^-epsilon_log2`.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_output_bound(uint64_t k,
                                      double r_dis_avg,
                                      uint32_t bits_per_sample,
                                      uint32_t epsilon_log2,
                                      uint64_t *out);

// Create an extractor from explicit seed bits (packed MSB-first; the buffer
// must hold at least `k + j - 1` bits). On success `*out` owns the handle;
// release it with `siqrng_extractor_free`.
// # Safety
// `seed` must point to `seed_len` readable bytes and `out` must be a
// valid writable pointer.
enum SiqrngStatus siqrng_extractor_new(uint64_t k,
                                       uint64_t j,
                                       uint32_t epsilon_log2,
                                       const uint8_t *seed,
                                       size_t seed_len,
                                       struct SiqrngExtractor **out);

// Create an extractor with its seed drawn from a 64-bit seed value.
// # Safety
// `out` must be a valid writable pointer.
enum SiqrngStatus siqrng_extractor_seeded(uint64_t k,
                                          uint64_t j,
                                          uint32_t epsilon_log2,
                                          uint64_t seed,
                                          struct SiqrngExtractor **out);

// Bytes expected per input block (`ceil(k / 8)`).
// # Safety
// `handle` must be null or a live handle from a constructor.
size_t siqrng_extractor_input_bytes(const struct SiqrngExtractor *handle);

// Bytes produced per output block (`ceil(j / 8)`).
// # Safety
// `handle` must be null or a live handle from a constructor.
size_t siqrng_extractor_output_bytes(const struct SiqrngExtractor *handle);

// Hash one `k`-bit block (packed MSB-first, `ceil(k/8)` bytes) into
// `ceil(j/8)` output bytes; trailing padding bits are zero.
// # Safety
// `handle` must be a live handle; `input` and `output` must point to
// `input_len` readable and `output_len` writable bytes respectively.
enum SiqrngStatus siqrng_extractor_extract(const struct SiqrngExtractor *handle,
                                           const uint8_t *input,
                                           size_t input_len,
                                           uint8_t *output,
                                           size_t output_len);

// Release an extractor handle. Passing null is a no-op.
// # Safety
// `handle` must be null or a live handle not freed before; the handle is
// invalid afterwards.
void siqrng_extractor_free(struct SiqrngExtractor *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIQRNG_H */
