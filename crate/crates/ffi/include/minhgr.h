#ifndef MINHGR_H
#define MINHGR_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum MinhgrStatus {
  MINHGR_STATUS_OK = 0,
  MINHGR_STATUS_NULL_POINTER = 1,
  MINHGR_STATUS_INVALID_ARGUMENT = 2,
  MINHGR_STATUS_PARSE = 3,
  MINHGR_STATUS_IO = 4,
  MINHGR_STATUS_INVALID_DISTRIBUTION = 5,
  MINHGR_STATUS_INCONSISTENT_MARGINALS = 6,
  MINHGR_STATUS_DEGENERATE_Y = 7,
  MINHGR_STATUS_NUMERICAL = 8,
  MINHGR_STATUS_NOT_TIGHT = 9,
  MINHGR_STATUS_INCONSISTENT_MOMENTS = 10,
  MINHGR_STATUS_BUFFER_TOO_SMALL = 11,
  MINHGR_STATUS_PANIC = 12,
} MinhgrStatus;

// A joint distribution of `(X_1..X_p, Y)`.
typedef struct MinhgrJoint MinhgrJoint;

// A set of pairwise marginals.
typedef struct MinhgrMarginals MinhgrMarginals;

typedef struct MinhgrLowerBound {
  double gamma_lb;
  // NaN when `Y` is degenerate.
  double rho_lb;
  double p_y1;
} MinhgrLowerBound;

typedef struct MinhgrTightness {
  // 1 if the bound is attained on the class, 0 otherwise.
  int32_t tight;
  double lp_value;
  double h_pos;
  double h_neg;
  double gamma_lb;
} MinhgrTightness;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *minhgr_version(void);

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *minhgr_last_error_message(void);

// Builds a joint from `2 * m^p` probabilities, `prob[2 * x + y]`, with
// `x = sum_i x_i m^(i-1)`.
//
// # Safety
// `prob` must point to `len` readable doubles and `out` must be writable.
enum MinhgrStatus minhgr_joint_from_dense(uintptr_t p,
                                          uintptr_t m,
                                          const double *prob,
                                          uintptr_t len,
                                          struct MinhgrJoint **out);

// Reads a joint CSV (`x1,...,xp,y,prob`). `m = 0` infers the alphabet size.
//
// # Safety
// `path` must be a NUL-terminated string and `out` must be writable.
enum MinhgrStatus minhgr_joint_from_csv(const char *path, uintptr_t m, struct MinhgrJoint **out);

// # Safety
// `joint` must be a valid handle and `path` a NUL-terminated string.
enum MinhgrStatus minhgr_joint_write_csv(const struct MinhgrJoint *joint, const char *path);

// Writes `p`, `m` and the number of probabilities (`2 * m^p`).
//
// # Safety
// `joint` must be a valid handle; output pointers may be NULL.
enum MinhgrStatus minhgr_joint_dims(const struct MinhgrJoint *joint,
                                    uintptr_t *p,
                                    uintptr_t *m,
                                    uintptr_t *len);

// Copies the probabilities in `minhgr_joint_from_dense` layout.
//
// # Safety
// `joint` must be a valid handle and `out` must hold `out_len` doubles.
enum MinhgrStatus minhgr_joint_probabilities(const struct MinhgrJoint *joint,
                                             double *out,
                                             uintptr_t out_len);

// # Safety
// `joint` must be NULL or a handle not yet freed.
void minhgr_joint_free(struct MinhgrJoint *joint);

// # Safety
// `joint` must be a valid handle and `out` writable.
enum MinhgrStatus minhgr_marginals_from_joint(const struct MinhgrJoint *joint,
                                              struct MinhgrMarginals **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum MinhgrStatus minhgr_marginals_from_json(const char *path, struct MinhgrMarginals **out);

// # Safety
// `marginals` must be NULL or a handle not yet freed.
void minhgr_marginals_free(struct MinhgrMarginals *marginals);

// Lower bound for the class. When `z_out` is not NULL the minimum-norm
// minimizer (length `p * m`) is copied there.
//
// # Safety
// `marginals` must be a valid handle, `out` writable, and `z_out` NULL or
// holding `z_len` doubles.
enum MinhgrStatus minhgr_lower_bound(const struct MinhgrMarginals *marginals,
                                     struct MinhgrLowerBound *out,
                                     double *z_out,
                                     uintptr_t z_len);

// Tightness certificate for the class; `z_out` receives the witness.
//
// # Safety
// As for `minhgr_lower_bound`.
enum MinhgrStatus minhgr_check_tightness(const struct MinhgrMarginals *marginals,
                                         double tol,
                                         struct MinhgrTightness *out,
                                         double *z_out,
                                         uintptr_t z_len);

// The additive distribution attaining the bound on the class of `base`
// (or, when `base` is NULL, on the class given by `marginals`).
// Returns `NotTight` when the bound is not attained.
//
// # Safety
// `base` and `marginals` must each be NULL or valid handles, not both NULL;
// `out` must be writable.
enum MinhgrStatus minhgr_construct(const struct MinhgrJoint *base,
                                   const struct MinhgrMarginals *marginals,
                                   double tol,
                                   struct MinhgrJoint **out);

// Maximal correlation between `X = (X_1..X_p)` and `Y`.
//
// # Safety
// `joint` must be a valid handle and `rho` writable.
enum MinhgrStatus minhgr_hgr(const struct MinhgrJoint *joint, double *rho);

// Maximal correlation of an `nx x ny` row-major joint table.
//
// # Safety
// `prob` must hold `nx * ny` doubles and `rho` must be writable.
enum MinhgrStatus minhgr_hgr_table(const double *prob, uintptr_t nx, uintptr_t ny, double *rho);

// Minimum maximal correlation given `mu` (length `n`) and the row-major
// second-moment matrix `lambda` (`n x n`), `Y` last.
//
// # Safety
// `mu` must hold `n` doubles, `lambda` `n * n`, and `out` must be writable.
enum MinhgrStatus minhgr_gaussian_min_hgr(const double *mu,
                                          const double *lambda,
                                          uintptr_t n,
                                          double *out);

// Fraction of `trials` random joints within L1 distance `eps` of uniform
// whose class is tight.
//
// # Safety
// `fraction` must be writable.
enum MinhgrStatus minhgr_near_uniform_probe(uintptr_t p,
                                            uintptr_t m,
                                            double eps,
                                            uintptr_t trials,
                                            uint64_t seed,
                                            double tol,
                                            double *fraction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINHGR_H */
