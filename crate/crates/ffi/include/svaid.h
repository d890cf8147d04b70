#ifndef SVAID_H
#define SVAID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum SvaidStatus {
  SVAID_STATUS_OK = 0,
  SVAID_STATUS_INVALID_ARGUMENT = 2,
  SVAID_STATUS_RUNTIME = 3,
  SVAID_STATUS_DEGENERATE = 4,
  SVAID_STATUS_NULL_POINTER = 5,
  SVAID_STATUS_PANIC = 6,
} SvaidStatus;

// Opaque online estimator.
typedef struct SvaidEstimator SvaidEstimator;

// Opaque chain model.
typedef struct SvaidModel SvaidModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *svaid_last_error(void);

// Loads a model file.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum SvaidStatus svaid_model_load(const char *path, struct SvaidModel **out);

// Parses model text.
//
// # Safety
// `text` is a NUL-terminated string; `out` is writable.
enum SvaidStatus svaid_model_parse(const char *text, struct SvaidModel **out);

// # Safety
// `model` comes from this library and is not used afterwards. Null is a no-op.
void svaid_model_free(struct SvaidModel *model);

// Number of joints, 0 for a null handle.
//
// # Safety
// `model` is null or a live handle.
size_t svaid_model_dof(const struct SvaidModel *model);

// Parameters of the model, `10 · dof` values.
//
// # Safety
// `model` is a live handle; `out` holds `10 · dof` doubles.
enum SvaidStatus svaid_model_theta(const struct SvaidModel *model, double *out);

// Regressor `Y(q, q̇, q̈)`, `dof × 10·dof`, row-major.
//
// # Safety
// `q`, `dq`, `ddq` hold `dof` doubles; `out` holds `10 · dof²`.
enum SvaidStatus svaid_regressor(const struct SvaidModel *model,
                                 const double *q,
                                 const double *dq,
                                 const double *ddq,
                                 double *out);

// Joint torques for the given motion.
//
// # Safety
// `q`, `dq`, `ddq`, `out` hold `dof` doubles.
enum SvaidStatus svaid_inverse_dynamics(const struct SvaidModel *model,
                                        const double *q,
                                        const double *dq,
                                        const double *ddq,
                                        double *out);

// Joint accelerations under torque `u`.
//
// # Safety
// `q`, `dq`, `u`, `out` hold `dof` doubles.
enum SvaidStatus svaid_forward_dynamics(const struct SvaidModel *model,
                                        const double *q,
                                        const double *dq,
                                        const double *u,
                                        double *out);

// Torque that realizes `ddq_cmd` under the parameters `theta`
// (`10 · dof` values). Unlimited.
//
// # Safety
// `q`, `dq`, `ddq_cmd`, `out` hold `dof` doubles; `theta` holds `10 · dof`.
enum SvaidStatus svaid_computed_torque(const struct SvaidModel *model,
                                       const double *theta,
                                       const double *q,
                                       const double *dq,
                                       const double *ddq_cmd,
                                       double *out);

// Least-squares fit over `count` samples. `q`, `dq`, `ddq` and `u` are
// `count × dof` row-major. With `theta0` non-null the fit is blended with
// that prior at data weight `alpha`; otherwise `alpha` is ignored.
//
// # Safety
// Arrays hold `count · dof` doubles; `theta0` (if non-null) and
// `theta_out` hold `10 · dof`; `r_squared_out` is null or writable.
enum SvaidStatus svaid_fit(const struct SvaidModel *model,
                           size_t count,
                           const double *q,
                           const double *dq,
                           const double *ddq,
                           const double *u,
                           const double *theta0,
                           double alpha,
                           double *theta_out,
                           double *r_squared_out);

// Online estimator with a ring buffer of `capacity` samples, admitting one
// sample every `update_period` seconds. The model is copied.
//
// # Safety
// `theta0` holds `10 · dof` doubles; `out` is writable.
enum SvaidStatus svaid_estimator_new(const struct SvaidModel *model,
                                     const double *theta0,
                                     size_t capacity,
                                     double update_period,
                                     double alpha,
                                     double r2_threshold,
                                     struct SvaidEstimator **out);

// # Safety
// `est` comes from this library and is not used afterwards. Null is a no-op.
void svaid_estimator_free(struct SvaidEstimator *est);

// Offers one measurement. `refitted` (if non-null) is set when the sample
// was admitted and a new snapshot published.
//
// # Safety
// `q`, `dq`, `ddq`, `u` hold `dof` doubles.
enum SvaidStatus svaid_estimator_update(struct SvaidEstimator *est,
                                        double t,
                                        const double *q,
                                        const double *dq,
                                        const double *ddq,
                                        const double *u,
                                        bool *refitted);

// Latest snapshot. Returns `SVAID_STATUS_DEGENERATE` before the first fit.
//
// # Safety
// `theta_out` holds `10 · dof` doubles; the other outputs are null or
// writable.
enum SvaidStatus svaid_estimator_latest(const struct SvaidEstimator *est,
                                        double *theta_out,
                                        double *r_squared_out,
                                        bool *model_valid_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVAID_H */
