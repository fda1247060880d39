//! C ABI for hyperfact.
//!
//! Every fallible function returns an [`HfStatus`]; on failure the message is
//! available from [`hf_last_error_message`] on the same thread. Handles are
//! opaque and must be released with the matching `_free` function. Matrix
//! entries cross the boundary as interleaved `(re, im)` doubles in row-major
//! order.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hyperfact::dilate::{self, DilationPack};
use hyperfact::factors::{self, FactorPair};
use hyperfact::hyper;
use hyperfact::matcore::{self, CMatrix};
use hyperfact::schur;
use hyperfact::Error;

/// Status codes. `HF_STATUS_OK` is zero; everything else is a failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPsd = 4,
    NotContraction = 5,
    NotCommuting = 6,
    PreconditionFailed = 7,
    Numerical = 8,
    Panic = 9,
}

/// Dense complex matrix.
pub struct HfMatrix(CMatrix);

/// Named residuals with a pass tolerance.
pub struct HfReport {
    names: Vec<CString>,
    values: Vec<f64>,
    tolerance: f64,
    precondition: Option<CString>,
}

/// Dilation of a single operator: combined isometry, `Q`, `W` and residuals.
pub struct HfDilation {
    pi: CMatrix,
    q: CMatrix,
    w: CMatrix,
    report: HfReport,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HfClassification {
    pub is_contraction: bool,
    /// `K_n⁻¹(T,T*) >= 0` at orders 1 and `m`.
    pub is_hypercontraction: bool,
    pub is_pure: bool,
    pub norm: f64,
    pub spectral_radius: f64,
    /// Minimum eigenvalue of `K_m⁻¹(T,T*)`.
    pub min_eigenvalue: f64,
    /// Largest order checked at which `T` is a hypercontraction, 0 if none.
    pub max_order: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HfMembership {
    pub is_member: bool,
    pub product_is_hypercontraction: bool,
    /// Minimum eigenvalues of the two pair defects at order `m`.
    pub min_eigenvalue_1: f64,
    pub min_eigenvalue_2: f64,
    pub commutator_norm: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> HfStatus {
    match err {
        Error::NonSquare { .. } | Error::DimensionMismatch(_) | Error::WeightTableTooSmall { .. } => {
            HfStatus::DimensionMismatch
        }
        Error::NonFinite | Error::NotHermitian { .. } | Error::InvalidArgument(_) => HfStatus::InvalidArgument,
        Error::NotPsd { .. } | Error::NonIsometric { .. } => HfStatus::NotPsd,
        Error::NotContraction { .. } => HfStatus::NotContraction,
        Error::NotCommuting { .. } => HfStatus::NotCommuting,
        Error::Precondition(_) => HfStatus::PreconditionFailed,
        Error::EigenFailed { .. } | Error::IllConditioned { .. } | Error::Internal(_) | Error::Overflow { .. } => {
            HfStatus::Numerical
        }
    }
}

struct Fail(HfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HfStatus::Panic
        }
    }
}

unsafe fn mat<'a>(m: *const HfMatrix, what: &str) -> Result<&'a CMatrix, Fail> {
    m.as_ref().map(|h| &h.0).ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed(m: CMatrix) -> *mut HfMatrix {
    Box::into_raw(Box::new(HfMatrix(m)))
}

fn report_from(residuals: &BTreeMap<String, f64>, tolerance: f64, precondition: Option<&str>) -> HfReport {
    HfReport {
        names: residuals.keys().map(|k| CString::new(k.as_str()).expect("residual names have no NUL")).collect(),
        values: residuals.values().copied().collect(),
        tolerance,
        precondition: precondition.map(|p| CString::new(p.replace('\0', " ")).expect("NUL removed")),
    }
}

fn order(m: usize) -> Result<usize, Fail> {
    if m == 0 {
        Err(Fail(HfStatus::InvalidArgument, "order m must be >= 1".into()))
    } else {
        Ok(m)
    }
}

fn positive(tol: f64, what: &str) -> Result<f64, Fail> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(Fail(HfStatus::InvalidArgument, format!("{what} must be positive, got {tol}")))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a `rows x cols` matrix from `2 * rows * cols` interleaved doubles.
///
/// # Safety
/// `data` must point to `2 * rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut HfMatrix,
) -> HfStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| Fail(HfStatus::InvalidArgument, format!("{rows}x{cols} overflows")))?;
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let vals = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite.into());
        }
        let m = CMatrix::from_fn(rows, cols, |i, j| {
            let k = 2 * (i * cols + j);
            matcore::c(vals[k], vals[k + 1])
        });
        put(out, boxed(m), "out")
    })
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hf_matrix_rows(m: *const HfMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.0.nrows())
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hf_matrix_cols(m: *const HfMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.0.ncols())
}

/// # Safety
/// `m` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_matrix_get(
    m: *const HfMatrix,
    row: usize,
    col: usize,
    re: *mut f64,
    im: *mut f64,
) -> HfStatus {
    guard(|| {
        let m = mat(m, "matrix")?;
        if row >= m.nrows() || col >= m.ncols() {
            return Err(Fail(
                HfStatus::DimensionMismatch,
                format!("index ({row}, {col}) outside {}x{}", m.nrows(), m.ncols()),
            ));
        }
        let z = m[(row, col)];
        put(re, z.re, "re")?;
        put(im, z.im, "im")
    })
}

/// Copies all entries, interleaved and row-major, into `out` of length `len`
/// (at least `2 * rows * cols`).
///
/// # Safety
/// `m` must be a live handle; `out` must have `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_matrix_copy_data(m: *const HfMatrix, out: *mut f64, len: usize) -> HfStatus {
    guard(|| {
        let m = mat(m, "matrix")?;
        let need = 2 * m.nrows() * m.ncols();
        if len < need {
            return Err(Fail(HfStatus::DimensionMismatch, format!("buffer holds {len} doubles, need {need}")));
        }
        if need == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let k = 2 * (i * m.ncols() + j);
                dst[k] = m[(i, j)].re;
                dst[k + 1] = m[(i, j)].im;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hf_matrix_free(m: *mut HfMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Positivity profile of `T` up to order `m`.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_classify(t: *const HfMatrix, m: usize, tol: f64, out: *mut HfClassification) -> HfStatus {
    guard(|| {
        let t = mat(t, "t")?;
        let m = order(m)?;
        let tol = positive(tol, "tol")?;
        let report = hyper::classify(t, m, tol)?;
        let result = HfClassification {
            is_contraction: report.is_contraction,
            is_hypercontraction: report.is_hypercontraction(m),
            is_pure: report.is_pure,
            norm: report.norm,
            spectral_radius: report.spectral_radius,
            min_eigenvalue: report.certificate(m).map_or(f64::NAN, |c| c.min_eigenvalue),
            max_order: report.max_hyper_order(),
        };
        put(out, result, "out")
    })
}

fn pair(t1: &CMatrix, t2: &CMatrix) -> Result<FactorPair, Fail> {
    Ok(FactorPair::new(t1.clone(), t2.clone(), factors::TOL_COMMUTE)?)
}

/// Membership of the commuting pair `(T1, T2)` in `F_m`.
///
/// # Safety
/// `t1`, `t2` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_check_fm(
    t1: *const HfMatrix,
    t2: *const HfMatrix,
    m: usize,
    tol: f64,
    out: *mut HfMembership,
) -> HfStatus {
    guard(|| {
        let p = pair(mat(t1, "t1")?, mat(t2, "t2")?)?;
        let m = order(m)?;
        let tol = positive(tol, "tol")?;
        let report = factors::check_fm(&p, m, tol)?;
        let result = HfMembership {
            is_member: report.is_member,
            product_is_hypercontraction: report.product_hyper.is_hypercontraction(m),
            min_eigenvalue_1: report.pair_defects_psd[0].min_eigenvalue,
            min_eigenvalue_2: report.pair_defects_psd[1].min_eigenvalue,
            commutator_norm: p.commutator_norm,
        };
        put(out, result, "out")
    })
}

/// The 2x2 pair `(T_r S⁻¹, S)`; `min_eigenvalue` receives the minimum
/// eigenvalue of the second pair defect at order 2.
///
/// # Safety
/// All out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_counterexample(
    r: f64,
    a: f64,
    b: f64,
    t1: *mut *mut HfMatrix,
    t2: *mut *mut HfMatrix,
    min_eigenvalue: *mut f64,
) -> HfStatus {
    guard(|| {
        if t1.is_null() || t2.is_null() || min_eigenvalue.is_null() {
            return Err(null("output pointer"));
        }
        let ex = factors::szego_counterexample(r, a, b)?;
        let cert = matcore::psd_check(&ex.defect2, matcore::DEFAULT_TOL)?;
        min_eigenvalue.write(cert.min_eigenvalue);
        t1.write(boxed(ex.pair.t1));
        t2.write(boxed(ex.pair.t2));
        Ok(())
    })
}

/// Random member of `F_m`, deterministic in `seed`. `unitary_dim > 0` adds a
/// unitary summand so the product is not pure.
///
/// # Safety
/// `t1` and `t2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_generate(
    seed: u64,
    base_dim: usize,
    m: usize,
    degree: usize,
    unitary_dim: usize,
    t1: *mut *mut HfMatrix,
    t2: *mut *mut HfMatrix,
) -> HfStatus {
    guard(|| {
        if t1.is_null() || t2.is_null() {
            return Err(null("output pointer"));
        }
        let m = order(m)?;
        let p = if unitary_dim == 0 {
            factors::generate_fm_pair(seed, base_dim, m, degree)?
        } else {
            factors::generate_fm_pair_mixed(seed, base_dim, m, degree, unitary_dim)?
        };
        t1.write(boxed(p.t1));
        t2.write(boxed(p.t2));
        Ok(())
    })
}

fn degree_or_default(degree: usize, dim: usize) -> usize {
    if degree == 0 {
        dilate::default_degree(dim)
    } else {
        degree
    }
}

/// Douglas-type dilation of an `m`-hypercontraction. `degree = 0` selects the
/// default truncation; residuals pass when at most `residual_tol`.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_dilate(
    t: *const HfMatrix,
    m: usize,
    degree: usize,
    tol: f64,
    residual_tol: f64,
    out: *mut *mut HfDilation,
) -> HfStatus {
    guard(|| {
        let t = mat(t, "t")?;
        let m = order(m)?;
        let tol = positive(tol, "tol")?;
        let residual_tol = positive(residual_tol, "residual_tol")?;
        let pack: DilationPack = dilate::douglas_dilation(t, m, degree_or_default(degree, t.nrows()), tol)?;
        let dil = HfDilation {
            pi: pack.combined(),
            q: pack.residual.q.clone(),
            w: pack.w.clone(),
            report: report_from(&pack.residuals, residual_tol, None),
        };
        put(out, Box::into_raw(Box::new(dil)), "out")
    })
}

/// New handle to the combined isometry `[Π; Q]`.
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_dilation_pi(d: *const HfDilation, out: *mut *mut HfMatrix) -> HfStatus {
    guard(|| put(out, boxed(d.as_ref().ok_or_else(|| null("dilation"))?.pi.clone()), "out"))
}

/// New handle to `Q = lim f_r^{1/2}`.
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_dilation_q(d: *const HfDilation, out: *mut *mut HfMatrix) -> HfStatus {
    guard(|| put(out, boxed(d.as_ref().ok_or_else(|| null("dilation"))?.q.clone()), "out"))
}

/// New handle to the unitary `W` in range coordinates (0x0 for pure `T`).
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_dilation_w(d: *const HfDilation, out: *mut *mut HfMatrix) -> HfStatus {
    guard(|| put(out, boxed(d.as_ref().ok_or_else(|| null("dilation"))?.w.clone()), "out"))
}

/// Borrowed residual report, owned by the dilation.
///
/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hf_dilation_report(d: *const HfDilation) -> *const HfReport {
    d.as_ref().map_or(ptr::null(), |d| &d.report)
}

/// # Safety
/// `d` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn hf_dilation_free(d: *mut HfDilation) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Canonical Schur factorization of an `F_m` pair with all its residuals.
/// A pair outside `F_m` still yields a report, with
/// [`hf_report_precondition`] set and no residuals.
///
/// # Safety
/// `t1`, `t2` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_factorize(
    t1: *const HfMatrix,
    t2: *const HfMatrix,
    m: usize,
    degree: usize,
    residual_tol: f64,
    out: *mut *mut HfReport,
) -> HfStatus {
    guard(|| {
        let p = pair(mat(t1, "t1")?, mat(t2, "t2")?)?;
        let m = order(m)?;
        let residual_tol = positive(residual_tol, "residual_tol")?;
        let v = schur::verify_factorization(&p, m, degree_or_default(degree, p.dim()), residual_tol)?;
        let report = report_from(&v.residuals, residual_tol, v.precondition_failed.as_deref());
        put(out, Box::into_raw(Box::new(report)), "out")
    })
}

/// True when the precondition held and every residual is within tolerance.
///
/// # Safety
/// `r` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn hf_report_passed(r: *const HfReport) -> bool {
    r.as_ref().is_some_and(|r| r.precondition.is_none() && r.values.iter().all(|&v| v <= r.tolerance))
}

/// Failed precondition message, or null.
///
/// # Safety
/// `r` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn hf_report_precondition(r: *const HfReport) -> *const c_char {
    r.as_ref().and_then(|r| r.precondition.as_ref()).map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `r` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn hf_report_len(r: *const HfReport) -> usize {
    r.as_ref().map_or(0, |r| r.values.len())
}

/// Name of residual `i`, or null when out of range. Owned by the report.
///
/// # Safety
/// `r` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn hf_report_name(r: *const HfReport, i: usize) -> *const c_char {
    r.as_ref().and_then(|r| r.names.get(i)).map_or(ptr::null(), |s| s.as_ptr())
}

/// Value of residual `i`, or NaN when out of range.
///
/// # Safety
/// `r` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn hf_report_value(r: *const HfReport, i: usize) -> f64 {
    r.as_ref().and_then(|r| r.values.get(i)).copied().unwrap_or(f64::NAN)
}

/// Looks up a residual by name.
///
/// # Safety
/// `r` must be a live report; `name` a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hf_report_residual(r: *const HfReport, name: *const c_char, out: *mut f64) -> HfStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name);
        let idx =
            r.names.iter().position(|n| n.as_c_str() == name).ok_or_else(|| {
                Fail(HfStatus::InvalidArgument, format!("no residual named {}", name.to_string_lossy()))
            })?;
        put(out, r.values[idx], "out")
    })
}

/// # Safety
/// `r` must be an owned report from [`hf_factorize`] or null; reports
/// borrowed from a dilation must not be freed.
#[no_mangle]
pub unsafe extern "C" fn hf_report_free(r: *mut HfReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
