#ifndef HYPERFACT_H
#define HYPERFACT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes. `HF_STATUS_OK` is zero; everything else is a failure.
 */
typedef enum {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_DIMENSION_MISMATCH = 3,
  HF_STATUS_NOT_PSD = 4,
  HF_STATUS_NOT_CONTRACTION = 5,
  HF_STATUS_NOT_COMMUTING = 6,
  HF_STATUS_PRECONDITION_FAILED = 7,
  HF_STATUS_NUMERICAL = 8,
  HF_STATUS_PANIC = 9,
} HfStatus;

/*
 Dilation of a single operator: combined isometry, `Q`, `W` and residuals.
 */
typedef struct HfDilation HfDilation;

/*
 Dense complex matrix.
 */
typedef struct HfMatrix HfMatrix;

/*
 Named residuals with a pass tolerance.
 */
typedef struct HfReport HfReport;

typedef struct {
  bool is_contraction;
  /*
   `K_n⁻¹(T,T*) >= 0` at orders 1 and `m`.
   */
  bool is_hypercontraction;
  bool is_pure;
  double norm;
  double spectral_radius;
  /*
   Minimum eigenvalue of `K_m⁻¹(T,T*)`.
   */
  double min_eigenvalue;
  /*
   Largest order checked at which `T` is a hypercontraction, 0 if none.
   */
  size_t max_order;
} HfClassification;

typedef struct {
  bool is_member;
  bool product_is_hypercontraction;
  /*
   Minimum eigenvalues of the two pair defects at order `m`.
   */
  double min_eigenvalue_1;
  double min_eigenvalue_2;
  double commutator_norm;
} HfMembership;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *hf_version(void);

/*
 Message for the last failed call on this thread, or null. Valid until the
 next call into the library on the same thread.
 */
const char *hf_last_error_message(void);

/*
 Creates a `rows x cols` matrix from `2 * rows * cols` interleaved doubles.

 # Safety
 `data` must point to `2 * rows * cols` readable doubles; `out` must be writable.
 */
HfStatus hf_matrix_new(size_t rows, size_t cols, const double *data, HfMatrix **out);

/*
 # Safety
 `m` must be a live handle or null.
 */
size_t hf_matrix_rows(const HfMatrix *m);

/*
 # Safety
 `m` must be a live handle or null.
 */
size_t hf_matrix_cols(const HfMatrix *m);

/*
 # Safety
 `m` must be a live handle; `re` and `im` must be writable.
 */
HfStatus hf_matrix_get(const HfMatrix *m, size_t row, size_t col, double *re, double *im);

/*
 Copies all entries, interleaved and row-major, into `out` of length `len`
 (at least `2 * rows * cols`).

 # Safety
 `m` must be a live handle; `out` must have `len` writable doubles.
 */
HfStatus hf_matrix_copy_data(const HfMatrix *m, double *out, size_t len);

/*
 # Safety
 `m` must be a handle from this library or null; it is invalid afterwards.
 */
void hf_matrix_free(HfMatrix *m);

/*
 Positivity profile of `T` up to order `m`.

 # Safety
 `t` must be a live handle; `out` must be writable.
 */
HfStatus hf_classify(const HfMatrix *t, size_t m, double tol, HfClassification *out);

/*
 Membership of the commuting pair `(T1, T2)` in `F_m`.

 # Safety
 `t1`, `t2` must be live handles; `out` must be writable.
 */
HfStatus hf_check_fm(const HfMatrix *t1,
                     const HfMatrix *t2,
                     size_t m,
                     double tol,
                     HfMembership *out);

/*
 The 2x2 pair `(T_r S⁻¹, S)`; `min_eigenvalue` receives the minimum
 eigenvalue of the second pair defect at order 2.

 # Safety
 All out pointers must be writable.
 */
HfStatus hf_counterexample(double r,
                           double a,
                           double b,
                           HfMatrix **t1,
                           HfMatrix **t2,
                           double *min_eigenvalue);

/*
 Random member of `F_m`, deterministic in `seed`. `unitary_dim > 0` adds a
 unitary summand so the product is not pure.

 # Safety
 `t1` and `t2` must be writable.
 */
HfStatus hf_generate(uint64_t seed,
                     size_t base_dim,
                     size_t m,
                     size_t degree,
                     size_t unitary_dim,
                     HfMatrix **t1,
                     HfMatrix **t2);

/*
 Douglas-type dilation of an `m`-hypercontraction. `degree = 0` selects the
 default truncation; residuals pass when at most `residual_tol`.

 # Safety
 `t` must be a live handle; `out` must be writable.
 */
HfStatus hf_dilate(const HfMatrix *t,
                   size_t m,
                   size_t degree,
                   double tol,
                   double residual_tol,
                   HfDilation **out);

/*
 New handle to the combined isometry `[Π; Q]`.

 # Safety
 `d` must be a live handle; `out` must be writable.
 */
HfStatus hf_dilation_pi(const HfDilation *d, HfMatrix **out);

/*
 New handle to `Q = lim f_r^{1/2}`.

 # Safety
 `d` must be a live handle; `out` must be writable.
 */
HfStatus hf_dilation_q(const HfDilation *d, HfMatrix **out);

/*
 New handle to the unitary `W` in range coordinates (0x0 for pure `T`).

 # Safety
 `d` must be a live handle; `out` must be writable.
 */
HfStatus hf_dilation_w(const HfDilation *d, HfMatrix **out);

/*
 Borrowed residual report, owned by the dilation.

 # Safety
 `d` must be a live handle or null.
 */
const HfReport *hf_dilation_report(const HfDilation *d);

/*
 # Safety
 `d` must be a handle from this library or null.
 */
void hf_dilation_free(HfDilation *d);

/*
 Canonical Schur factorization of an `F_m` pair with all its residuals.
 A pair outside `F_m` still yields a report, with
 [`hf_report_precondition`] set and no residuals.

 # Safety
 `t1`, `t2` must be live handles; `out` must be writable.
 */
HfStatus hf_factorize(const HfMatrix *t1,
                      const HfMatrix *t2,
                      size_t m,
                      size_t degree,
                      double residual_tol,
                      HfReport **out);

/*
 True when the precondition held and every residual is within tolerance.

 # Safety
 `r` must be a live report or null.
 */
bool hf_report_passed(const HfReport *r);

/*
 Failed precondition message, or null.

 # Safety
 `r` must be a live report or null.
 */
const char *hf_report_precondition(const HfReport *r);

/*
 # Safety
 `r` must be a live report or null.
 */
size_t hf_report_len(const HfReport *r);

/*
 Name of residual `i`, or null when out of range. Owned by the report.

 # Safety
 `r` must be a live report or null.
 */
const char *hf_report_name(const HfReport *r, size_t i);

/*
 Value of residual `i`, or NaN when out of range.

 # Safety
 `r` must be a live report or null.
 */
double hf_report_value(const HfReport *r, size_t i);

/*
 Looks up a residual by name.

 # Safety
 `r` must be a live report; `name` a NUL-terminated string; `out` writable.
 */
HfStatus hf_report_residual(const HfReport *r, const char *name, double *out);

/*
 # Safety
 `r` must be an owned report from [`hf_factorize`] or null; reports
 borrowed from a dilation must not be freed.
 */
void hf_report_free(HfReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERFACT_H */
