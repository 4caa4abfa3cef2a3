#ifndef SAMDP_H
#define SAMDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SamdpStatus {
  SAMDP_STATUS_OK = 0,
  SAMDP_STATUS_NULL_POINTER = 1,
  SAMDP_STATUS_INVALID_ARGUMENT = 2,
  SAMDP_STATUS_NOT_MDP_REGIME = 3,
  SAMDP_STATUS_INFEASIBLE = 4,
  SAMDP_STATUS_UNSUPPORTED = 5,
  SAMDP_STATUS_BUFFER_TOO_SMALL = 6,
  SAMDP_STATUS_INTERNAL = 7,
} SamdpStatus;

typedef enum SamdpNoiseKind {
  SAMDP_NOISE_KIND_RADEMACHER = 0,
  SAMDP_NOISE_KIND_TWO_POINT_ADAPTIVE = 1,
} SamdpNoiseKind;

typedef enum SamdpTarget {
  SAMDP_TARGET_RECURSION = 0,
  SAMDP_TARGET_WEIGHTED_SUM = 1,
} SamdpTarget;

// Opaque problem handle.
typedef struct SamdpProblem SamdpProblem;

// `p_min` and `p_max` are read only for the adaptive kind.
typedef struct SamdpNoiseSpec {
  enum SamdpNoiseKind kind;
  double sigma;
  double p_min;
  double p_max;
} SamdpNoiseSpec;

typedef struct SamdpTailBound {
  double value;
  double block_term;
  double sum_term;
  double delta;
  double envelope_sup;
  uint64_t feasible_from;
} SamdpTailBound;

typedef struct SamdpTailEstimate {
  uint64_t n;
  double b_n;
  double threshold;
  uint64_t hits;
  uint64_t replicas;
  double p_hat;
  double ci_low;
  double ci_high;
  double rate;
  double reference_rate;
} SamdpTailEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *samdp_last_error_message(void);

// Linear drift `g(x) = alpha1 (x − x_star)`.
//
// # Safety
// `noise` must be null or valid; `out` must be null or writable.
enum SamdpStatus samdp_problem_new_linear(double alpha1,
                                          double x_star,
                                          const struct SamdpNoiseSpec *noise,
                                          double b,
                                          double x0,
                                          struct SamdpProblem **out);

// Drift `g(x) = −c1 u − c2 sin u` with `u = x − x_star`, `c1 > c2 > 0`.
//
// # Safety
// As [`samdp_problem_new_linear`].
enum SamdpStatus samdp_problem_new_sine_linear(double c1,
                                               double c2,
                                               double x_star,
                                               const struct SamdpNoiseSpec *noise,
                                               double b,
                                               double x0,
                                               struct SamdpProblem **out);

// Builds the problem described by a complete experiment config document.
//
// # Safety
// `json` must be null or a NUL-terminated string; `out` must be null or writable.
enum SamdpStatus samdp_problem_from_json(const char *json, struct SamdpProblem **out);

// # Safety
// `problem` must be null or a handle not yet freed.
void samdp_problem_free(struct SamdpProblem *problem);

// `c = b·g'(x*)`.
//
// # Safety
// `problem` must be a live handle or null; `out` writable or null.
enum SamdpStatus samdp_problem_exponent(const struct SamdpProblem *problem, double *out);

// `β_k^n(c)`.
//
// # Safety
// `out` must be writable or null.
enum SamdpStatus samdp_beta(double c, uint64_t k, uint64_t n, double *out);

// # Safety
// `lower` and `upper` must be writable or null.
enum SamdpStatus samdp_beta_bounds(double c, uint64_t k, uint64_t n, double *lower, double *upper);

// # Safety
// `out` must be writable or null.
enum SamdpStatus samdp_weight_sum(double c, uint64_t n, double *out);

// # Safety
// `out` must be writable or null.
enum SamdpStatus samdp_h_norm(double b, double c, uint64_t n, double *out);

// # Safety
// `out` must be writable or null.
enum SamdpStatus samdp_h_asymptotic(double b, double c, uint64_t n, double *out);

// `X_{n+1} − x*` for replica 0 of `seed`.
//
// # Safety
// `problem` must be a live handle or null; `out` writable or null.
enum SamdpStatus samdp_simulate_final(const struct SamdpProblem *problem,
                                      uint64_t n,
                                      uint64_t seed,
                                      double *out);

// Records `X_0..X_{n+1}` into `xs` (length `n + 2`) and `U_1..U_{n+1}` into
// `us` (length `n + 1`). `us` may be null.
//
// # Safety
// `xs` must hold `xs_len` doubles and `us`, if not null, `us_len`.
enum SamdpStatus samdp_simulate_path(const struct SamdpProblem *problem,
                                     uint64_t n,
                                     uint64_t seed,
                                     double *xs,
                                     size_t xs_len,
                                     double *us,
                                     size_t us_len);

// # Safety
// `problem` must be a live handle or null; `out` writable or null.
enum SamdpStatus samdp_weighted_sum(const struct SamdpProblem *problem,
                                    uint64_t n,
                                    uint64_t seed,
                                    double *out);

// `F = max_k B_k` of the deterministic envelope up to horizon `n`.
//
// # Safety
// `problem` must be a live handle or null; `out` writable or null.
enum SamdpStatus samdp_envelope_sup(const struct SamdpProblem *problem, uint64_t n, double *out);

// Bound for increments in `[lows[i], highs[i]]`.
//
// # Safety
// `lows` and `highs` must hold `len` doubles (or be null when `len` is 0).
enum SamdpStatus samdp_azuma_tail(double t,
                                  const double *lows,
                                  const double *highs,
                                  size_t len,
                                  double *out);

// Explicit bound on `P(|X_{n+1} − x*| ≥ epsilon)`, with `δ` selected over
// horizons up to `n_probe ≥ n`. A `delta` of 0 selects the default `δ_max/2`.
//
// # Safety
// `problem` must be a live handle or null; `out` writable or null.
enum SamdpStatus samdp_exp_inequality_bound(const struct SamdpProblem *problem,
                                            double epsilon,
                                            uint64_t n,
                                            uint64_t n_probe,
                                            double delta,
                                            struct SamdpTailBound *out);

// `2Φ̄(r b_n/σ)` and its rate `log(tail)/b_n²`.
//
// # Safety
// `tail` and `rate` must be writable or null.
enum SamdpStatus samdp_gaussian_reference(double r,
                                          double b_n,
                                          double sigma,
                                          double *tail,
                                          double *rate);

// Monte Carlo estimate of `P(h_n |statistic| > r b_n)`. `workers` of 0 uses
// every available core; results do not depend on it.
//
// # Safety
// `problem` must be a live handle or null; `out` writable or null.
enum SamdpStatus samdp_estimate_tail(const struct SamdpProblem *problem,
                                     enum SamdpTarget target,
                                     uint64_t n,
                                     double b_n,
                                     double r,
                                     uint64_t replicas,
                                     uint64_t seed,
                                     size_t workers,
                                     struct SamdpTailEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAMDP_H */
