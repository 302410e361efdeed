#ifndef GFF4D_H
#define GFF4D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Gff4dBackend {
  GFF4D_BACKEND_AUTO = 0,
  GFF4D_BACKEND_DENSE = 1,
  GFF4D_BACKEND_CIRCULANT = 2,
} Gff4dBackend;

typedef enum Gff4dStatus {
  GFF4D_STATUS_OK = 0,
  GFF4D_STATUS_NULL_POINTER = 1,
  GFF4D_STATUS_DOMAIN = 2,
  GFF4D_STATUS_OVERFLOW = 3,
  GFF4D_STATUS_QUADRATURE = 4,
  GFF4D_STATUS_UNSUPPORTED_REGIME = 5,
  GFF4D_STATUS_CAPACITY = 6,
  GFF4D_STATUS_ILL_CONDITIONED = 7,
  GFF4D_STATUS_EMBEDDING = 8,
  GFF4D_STATUS_STATISTICS = 9,
  GFF4D_STATUS_RANGE = 10,
  GFF4D_STATUS_CONFIG = 11,
  GFF4D_STATUS_IO = 12,
  GFF4D_STATUS_BUFFER_TOO_SMALL = 13,
  GFF4D_STATUS_PANIC = 14,
} Gff4dStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct Gff4dConfig Gff4dConfig;

/**
 * Opaque multi-level field sampler.
 */
typedef struct Gff4dSampler Gff4dSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message (empty after success).
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null; `required` may be null.
 */
enum Gff4dStatus gff4d_last_error_message(char *buf, size_t len, size_t *required);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gff4d_version(void);

/**
 * J_order(x) for order 0, 1 or 2.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_bessel_j(uint32_t order, double x, double *out);

/**
 * I_order(x) for order 0, 1 or 2.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_bessel_i(uint32_t order, double x, double *out);

/**
 * K_order(x) for order 0, 1 or 2.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_bessel_k(uint32_t order, double x, double *out);

/**
 * Variance profile G(r).
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_g_variance(double r, double *out);

/**
 * Inverse of G.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_g_inverse(double t, double *out);

/**
 * Covariance of the mu-contracted family at (x1, eps1) and (x2, eps2).
 *
 * # Safety
 * `x1` and `x2` must point to 4 doubles; `out` to one.
 */
enum Gff4dStatus gff4d_cov_scalar(const double *x1,
                                  double eps1,
                                  const double *x2,
                                  double eps2,
                                  double *out);

/**
 * kappa from K by the KPZ quadratic.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_kpz_quadratic(double k, double gamma, double *out);

/**
 * K from kappa, the root of the KPZ quadratic in [0, 1].
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum Gff4dStatus gff4d_kpz_inverse(double kappa, double gamma, double *out);

/**
 * First-passage times of the drifted log-process below log(lambda) for
 * `replicas` paths; censored paths are written as +infinity.
 *
 * # Safety
 * `times` must point to `replicas` writable doubles; `censored` may be null.
 */
enum Gff4dStatus gff4d_stopping_times(double gamma,
                                      double lambda,
                                      double dt,
                                      double max_time,
                                      uint32_t refine,
                                      uint64_t seed,
                                      size_t replicas,
                                      double *times,
                                      size_t *censored);

/**
 * Sampler on the cube [origin, origin + side]^4 with n cells per axis and
 * the ladder eps0^k, k = 1..depth.
 *
 * # Safety
 * `origin` must point to 4 doubles; `out` to a writable handle pointer.
 */
enum Gff4dStatus gff4d_sampler_new(const double *origin,
                                   double side,
                                   size_t n,
                                   double eps0,
                                   size_t depth,
                                   enum Gff4dBackend backend,
                                   size_t dense_cap,
                                   struct Gff4dSampler **out);

/**
 * Number of doubles in one sample (levels times grid points).
 *
 * # Safety
 * `sampler` must be a live handle; `out` a valid pointer.
 */
enum Gff4dStatus gff4d_sampler_len(const struct Gff4dSampler *sampler, size_t *out);

/**
 * Write replica `replica` of `seed` into `buf` (level-major, then row-major).
 *
 * # Safety
 * `sampler` must be a live handle; `buf` must point to `len` doubles.
 */
enum Gff4dStatus gff4d_sampler_draw(const struct Gff4dSampler *sampler,
                                    uint64_t seed,
                                    uint64_t replica,
                                    double *buf,
                                    size_t len);

/**
 * Release a sampler; null is ignored.
 *
 * # Safety
 * `sampler` must come from `gff4d_sampler_new` and not be used afterwards.
 */
void gff4d_sampler_free(struct Gff4dSampler *sampler);

/**
 * New configuration holding the defaults.
 *
 * # Safety
 * `out` must be a writable handle pointer.
 */
enum Gff4dStatus gff4d_config_new(struct Gff4dConfig **out);

/**
 * Set one key as in a config file line.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum Gff4dStatus gff4d_config_set(struct Gff4dConfig *config, const char *key, const char *value);

/**
 * Run a subcommand (e.g. "mgf-check") and write the output directory path
 * into `path_buf`.
 *
 * # Safety
 * `config` must be a live handle; `subcommand` a NUL-terminated string;
 * `path_buf` must point to `len` bytes or be null; `required` may be null.
 */
enum Gff4dStatus gff4d_run(const struct Gff4dConfig *config,
                           const char *subcommand,
                           char *path_buf,
                           size_t len,
                           size_t *required);

/**
 * Release a configuration; null is ignored.
 *
 * # Safety
 * `config` must come from `gff4d_config_new` and not be used afterwards.
 */
void gff4d_config_free(struct Gff4dConfig *config);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFF4D_H */
