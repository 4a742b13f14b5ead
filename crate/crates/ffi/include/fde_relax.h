#ifndef FDE_RELAX_H
#define FDE_RELAX_H

#include <stddef.h>
#include <stdint.h>

// Outcome of an FFI call.
typedef enum FdeStatus {
  FDE_STATUS_OK = 0,
  FDE_STATUS_NULL_POINTER = 1,
  FDE_STATUS_INVALID_ARGUMENT = 2,
  FDE_STATUS_SOLVER_FAILURE = 3,
  FDE_STATUS_BUFFER_TOO_SMALL = 4,
  FDE_STATUS_FINISHED = 5,
  FDE_STATUS_PANIC = 6,
} FdeStatus;

// Normalized Lane-Emden profile.
typedef struct FdeProfile FdeProfile;

// Coupled time stepper together with its current state.
typedef struct FdeSimulation FdeSimulation;

// Parameters of a coupled run on `[0, length]^dim`.
typedef struct FdeRunConfig {
  uint32_t dim;
  double length;
  double h;
  double q;
  double mu;
  double eps;
  double xi;
  double dt;
  double t_final;
} FdeRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread, NUL-terminated and truncated
// to `len` bytes. Writes the full message length (without NUL) to `needed`
// when it is non-null.
//
// # Safety
// `buf` must be valid for `len` bytes or null with `len == 0`.
enum FdeStatus fde_last_error_message(char *buf, size_t len, size_t *needed);

// `alpha(s) = |s|^{q-2} s`.
//
// # Safety
// `out` must be valid for writes.
enum FdeStatus fde_alpha(double q, double s, double *out);

// # Safety
// `out` must be valid for writes.
enum FdeStatus fde_alpha_inverse(double q, double r, double *out);

// `eta(s) = s - mu alpha(s)`.
//
// # Safety
// `out` must be valid for writes.
enum FdeStatus fde_eta(double q, double mu, double s, double *out);

// Inverse of `zeta(u) = alpha^{-1}(u) - mu u`.
//
// # Safety
// `out` must be valid for writes.
enum FdeStatus fde_zeta_inverse(double q, double mu, double v, double *out);

// Solve the normalized Lane-Emden problem on `intervals` cells per axis.
//
// # Safety
// `out` must be valid for writes. On success `*out` owns a profile that
// must be released with [`fde_profile_free`].
enum FdeStatus fde_profile_solve(uint32_t dim,
                                 double length,
                                 size_t intervals,
                                 double q,
                                 double tol,
                                 size_t max_iter,
                                 struct FdeProfile **out);

// # Safety
// `profile` must come from [`fde_profile_solve`] and not be used afterwards.
void fde_profile_free(struct FdeProfile *profile);

// # Safety
// `profile` must be a live handle, `out` valid for writes.
enum FdeStatus fde_profile_t_star(const struct FdeProfile *profile, double *out);

// Energy `c` of the profile.
//
// # Safety
// `profile` must be a live handle, `out` valid for writes.
enum FdeStatus fde_profile_c(const struct FdeProfile *profile, double *out);

// Number of grid nodes of the profile.
//
// # Safety
// `profile` must be a live handle, `out` valid for writes.
enum FdeStatus fde_profile_len(const struct FdeProfile *profile, size_t *out);

// Copy the nodal values of the profile (x fastest) into `buf`.
//
// # Safety
// `profile` must be a live handle and `buf` valid for `len` writes.
enum FdeStatus fde_profile_values(const struct FdeProfile *profile, double *buf, size_t len);

// Compatible initial data `(u0, v0)` on the run grid of `config`, from a
// profile whose grid refines it.
//
// # Safety
// `profile` and `config` must be valid; `u0` and `v0` valid for `len` writes.
enum FdeStatus fde_profile_initial_data(const struct FdeProfile *profile,
                                        const struct FdeRunConfig *config,
                                        double *u0,
                                        double *v0,
                                        size_t len);

// Start a coupled run from `(u0, v0)` with default Newton settings.
//
// # Safety
// `config` must be valid, `u0` and `v0` valid for `len` reads and `out`
// valid for writes. Release the handle with [`fde_simulation_free`].
enum FdeStatus fde_simulation_new(const struct FdeRunConfig *config,
                                  const double *u0,
                                  const double *v0,
                                  size_t len,
                                  struct FdeSimulation **out);

// # Safety
// `sim` must come from [`fde_simulation_new`] and not be used afterwards.
void fde_simulation_free(struct FdeSimulation *sim);

// Advance one step. Returns `Finished` once `t_final` is reached; the
// Newton iteration count goes to `iterations` when it is non-null.
//
// # Safety
// `sim` must be a live handle; `iterations` null or valid for writes.
enum FdeStatus fde_simulation_step(struct FdeSimulation *sim, size_t *iterations);

// Index of the current time level.
//
// # Safety
// `sim` must be a live handle, `out` valid for writes.
enum FdeStatus fde_simulation_step_index(const struct FdeSimulation *sim, size_t *out);

// # Safety
// `sim` must be a live handle, `out` valid for writes.
enum FdeStatus fde_simulation_time(const struct FdeSimulation *sim, double *out);

// Number of grid nodes.
//
// # Safety
// `sim` must be a live handle, `out` valid for writes.
enum FdeStatus fde_simulation_len(const struct FdeSimulation *sim, size_t *out);

// # Safety
// `sim` must be a live handle and `buf` valid for `len` writes.
enum FdeStatus fde_simulation_u(const struct FdeSimulation *sim, double *buf, size_t len);

// # Safety
// `sim` must be a live handle and `buf` valid for `len` writes.
enum FdeStatus fde_simulation_v(const struct FdeSimulation *sim, double *buf, size_t len);

// `z = mu u + v`.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` writes.
enum FdeStatus fde_simulation_z(const struct FdeSimulation *sim, double *buf, size_t len);

// Discrete `l^q` norm of `z`.
//
// # Safety
// `sim` must be a live handle, `out` valid for writes.
enum FdeStatus fde_simulation_lq_norm(const struct FdeSimulation *sim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FDE_RELAX_H */
