use std::ffi::{CStr, CString};
use std::ptr;

use hyperfact_ffi::*;

fn matrix(rows: usize, cols: usize, real: &[f64]) -> *mut HfMatrix {
    let data: Vec<f64> = real.iter().flat_map(|&v| [v, 0.0]).collect();
    let mut out = ptr::null_mut();
    let status = unsafe { hf_matrix_new(rows, cols, data.as_ptr(), &mut out) };
    assert_eq!(status, HfStatus::Ok);
    out
}

fn last_error() -> String {
    let p = hf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn data(m: *const HfMatrix) -> Vec<f64> {
    let len = unsafe { 2 * hf_matrix_rows(m) * hf_matrix_cols(m) };
    let mut buf = vec![0.0; len];
    assert_eq!(unsafe { hf_matrix_copy_data(m, buf.as_mut_ptr(), len) }, HfStatus::Ok);
    buf
}

#[test]
fn matrix_round_trip_and_errors() {
    let m = matrix(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    unsafe {
        assert_eq!(hf_matrix_rows(m), 2);
        assert_eq!(hf_matrix_cols(m), 3);
        let (mut re, mut im) = (0.0, 1.0);
        assert_eq!(hf_matrix_get(m, 1, 2, &mut re, &mut im), HfStatus::Ok);
        assert_eq!((re, im), (6.0, 0.0));
        assert_eq!(hf_matrix_get(m, 2, 0, &mut re, &mut im), HfStatus::DimensionMismatch);
        assert!(last_error().contains("outside"));
        let mut small = [0.0; 4];
        assert_eq!(hf_matrix_copy_data(m, small.as_mut_ptr(), 4), HfStatus::DimensionMismatch);
        assert_eq!(data(m)[8], 5.0);
        hf_matrix_free(m);
        hf_matrix_free(ptr::null_mut());

        let nan = [f64::NAN, 0.0];
        let mut out = ptr::null_mut();
        assert_eq!(hf_matrix_new(1, 1, nan.as_ptr(), &mut out), HfStatus::InvalidArgument);
        assert_eq!(hf_matrix_new(1, 1, ptr::null(), &mut out), HfStatus::NullPointer);
        assert!(out.is_null());
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(hf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn classify_boundary_and_failure() {
    let ok = matrix(2, 2, &[0.0, 0.70, 0.0, 0.0]);
    let bad = matrix(2, 2, &[0.0, 0.72, 0.0, 0.0]);
    let mut c = HfClassification::default();
    unsafe {
        assert_eq!(hf_classify(ok, 2, 1e-9, &mut c), HfStatus::Ok);
        assert!(c.is_contraction && c.is_hypercontraction && c.is_pure);
        assert!((c.min_eigenvalue - (1.0 - 2.0 * 0.49)).abs() < 1e-12);
        assert_eq!(hf_classify(bad, 2, 1e-9, &mut c), HfStatus::Ok);
        assert!(!c.is_hypercontraction);
        assert_eq!(c.max_order, 1);
        assert_eq!(hf_classify(ok, 0, 1e-9, &mut c), HfStatus::InvalidArgument);
        assert_eq!(hf_classify(ptr::null(), 2, 1e-9, &mut c), HfStatus::NullPointer);
        let rect = matrix(1, 2, &[0.1, 0.2]);
        assert_eq!(hf_classify(rect, 1, 1e-9, &mut c), HfStatus::DimensionMismatch);
        hf_matrix_free(rect);
        hf_matrix_free(ok);
        hf_matrix_free(bad);
    }
}

#[test]
fn counterexample_through_check_fm() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (mut t1, mut t2, mut min_eig) = (ptr::null_mut(), ptr::null_mut(), 0.0);
    unsafe {
        assert_eq!(hf_counterexample(h, h, 0.5, &mut t1, &mut t2, &mut min_eig), HfStatus::Ok);
        let oracle = 0.25 - (0.0625f64 + 0.125).sqrt();
        assert!((min_eig - oracle).abs() < 1e-10);
        let mut fm = HfMembership::default();
        assert_eq!(hf_check_fm(t1, t2, 2, 1e-9, &mut fm), HfStatus::Ok);
        assert!(!fm.is_member);
        assert!(fm.product_is_hypercontraction);
        assert!((fm.min_eigenvalue_2 - oracle).abs() < 1e-10);
        hf_matrix_free(t1);
        hf_matrix_free(t2);

        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(hf_counterexample(0.72, 0.8, 0.0, &mut a, &mut b, &mut min_eig), HfStatus::PreconditionFailed);
        assert!(last_error().contains("r^2 <= 1/2"));
        assert!(a.is_null() && b.is_null());
    }
}

#[test]
fn non_commuting_pair_is_rejected() {
    let a = matrix(2, 2, &[0.0, 0.5, 0.0, 0.0]);
    let b = matrix(2, 2, &[0.0, 0.0, 0.5, 0.0]);
    let mut fm = HfMembership::default();
    unsafe {
        assert_eq!(hf_check_fm(a, b, 2, 1e-9, &mut fm), HfStatus::NotCommuting);
        hf_matrix_free(a);
        hf_matrix_free(b);
    }
}

#[test]
fn generate_then_factorize() {
    for unitary_dim in [0, 2] {
        let (mut t1, mut t2) = (ptr::null_mut(), ptr::null_mut());
        unsafe {
            assert_eq!(hf_generate(5, 2, 2, 3, unitary_dim, &mut t1, &mut t2), HfStatus::Ok, "{}", last_error());
            let (mut u1, mut u2) = (ptr::null_mut(), ptr::null_mut());
            assert_eq!(hf_generate(5, 2, 2, 3, unitary_dim, &mut u1, &mut u2), HfStatus::Ok);
            assert_eq!(data(t1), data(u1));
            hf_matrix_free(u1);
            hf_matrix_free(u2);

            let mut fm = HfMembership::default();
            assert_eq!(hf_check_fm(t1, t2, 2, 1e-9, &mut fm), HfStatus::Ok);
            assert!(fm.is_member);

            let mut report = ptr::null_mut();
            assert_eq!(hf_factorize(t1, t2, 2, 0, 1e-7, &mut report), HfStatus::Ok, "{}", last_error());
            assert!(hf_report_passed(report));
            assert!(hf_report_precondition(report).is_null());
            let n = hf_report_len(report);
            assert!(n > 10);
            for i in 0..n {
                assert!(!hf_report_name(report, i).is_null());
                assert!(hf_report_value(report, i) <= 1e-7);
            }
            assert!(hf_report_name(report, n).is_null());
            assert!(hf_report_value(report, n).is_nan());
            let key = CString::new("intertwine_shift").unwrap();
            let mut v = f64::NAN;
            assert_eq!(hf_report_residual(report, key.as_ptr(), &mut v), HfStatus::Ok);
            assert!(v <= 1e-7);
            let missing = CString::new("no_such").unwrap();
            assert_eq!(hf_report_residual(report, missing.as_ptr(), &mut v), HfStatus::InvalidArgument);
            hf_report_free(report);
            hf_matrix_free(t1);
            hf_matrix_free(t2);
        }
    }
}

#[test]
fn factorize_non_member_reports_precondition() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (mut t1, mut t2, mut min_eig) = (ptr::null_mut(), ptr::null_mut(), 0.0);
    unsafe {
        assert_eq!(hf_counterexample(h, h, 0.5, &mut t1, &mut t2, &mut min_eig), HfStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(hf_factorize(t1, t2, 2, 8, 1e-7, &mut report), HfStatus::Ok);
        assert!(!hf_report_passed(report));
        assert!(!hf_report_precondition(report).is_null());
        assert_eq!(hf_report_len(report), 0);
        hf_report_free(report);
        hf_matrix_free(t1);
        hf_matrix_free(t2);
    }
}

#[test]
fn dilate_non_pure_operator() {
    let t = matrix(2, 2, &[1.0, 0.0, 0.0, 0.5]);
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(hf_dilate(t, 1, 60, 1e-9, 1e-7, &mut d), HfStatus::Ok, "{}", last_error());
        let report = hf_dilation_report(d);
        assert!(hf_report_passed(report));
        let (mut pi, mut q, mut w) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(hf_dilation_pi(d, &mut pi), HfStatus::Ok);
        assert_eq!(hf_dilation_q(d, &mut q), HfStatus::Ok);
        assert_eq!(hf_dilation_w(d, &mut w), HfStatus::Ok);
        assert_eq!(hf_matrix_cols(pi), 2);
        // Q = diag(1, 0), W = [1]
        let qd = data(q);
        assert!((qd[0] - 1.0).abs() < 1e-9 && qd[6].abs() < 1e-9);
        assert_eq!((hf_matrix_rows(w), hf_matrix_cols(w)), (1, 1));
        assert!((data(w)[0] - 1.0).abs() < 1e-9);
        for m in [pi, q, w] {
            hf_matrix_free(m);
        }
        hf_dilation_free(d);
        hf_matrix_free(t);
    }
}

#[test]
fn dilate_rejects_non_hypercontraction() {
    let t = matrix(2, 2, &[0.0, 0.72, 0.0, 0.0]);
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(hf_dilate(t, 2, 0, 1e-9, 1e-7, &mut d), HfStatus::NotPsd);
        assert!(d.is_null());
        assert!(last_error().contains("not positive semidefinite"));
        hf_matrix_free(t);
    }
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hyperfact.h")).unwrap();
    for sym in [
        "typedef struct HfMatrix HfMatrix;",
        "HF_STATUS_OK = 0",
        "hf_matrix_new",
        "hf_classify",
        "hf_check_fm",
        "hf_counterexample",
        "hf_generate",
        "hf_dilate",
        "hf_factorize",
        "hf_report_residual",
        "hf_last_error_message",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}
