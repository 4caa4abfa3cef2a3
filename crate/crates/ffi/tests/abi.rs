use std::ffi::{CStr, CString};
use std::ptr;

use samdp_ffi::*;

fn rademacher(sigma: f64) -> SamdpNoiseSpec {
    SamdpNoiseSpec {
        kind: SamdpNoiseKind::Rademacher,
        sigma,
        p_min: 0.0,
        p_max: 0.0,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(samdp_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn linear_problem(alpha1: f64, b: f64) -> *mut SamdpProblem {
    let mut handle = ptr::null_mut();
    let status = unsafe { samdp_problem_new_linear(alpha1, 0.0, &rademacher(1.0), b, 1.0, &mut handle) };
    assert_eq!(status, SamdpStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn weight_functions() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(samdp_beta(-1.5, 2, 10, &mut v), SamdpStatus::Ok);
        assert_eq!(v, samdp::weights::beta(-1.5, 2, 10).to_f64());
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(samdp_beta_bounds(-3.0, 5, 5, &mut lo, &mut hi), SamdpStatus::Ok);
        assert!((hi - 1.728).abs() < 1e-15);
        assert_eq!(samdp_beta_bounds(-3.0, 1, 5, &mut lo, &mut hi), SamdpStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(samdp_weight_sum(-1.5, 10, &mut v), SamdpStatus::Ok);
        assert_eq!(samdp_h_norm(1.0, -1.5, 10, &mut v), SamdpStatus::Ok);
        assert_eq!(samdp_h_asymptotic(1.0, -0.4, 10, &mut v), SamdpStatus::InvalidArgument);
        assert_eq!(samdp_beta(-1.5, 2, 10, ptr::null_mut()), SamdpStatus::NullPointer);
    }
}

#[test]
fn problem_lifecycle_and_simulation() {
    let p = linear_problem(-1.0, 2.0);
    unsafe {
        let mut c = 0.0;
        assert_eq!(samdp_problem_exponent(p, &mut c), SamdpStatus::Ok);
        assert_eq!(c, -2.0);

        let n = 50u64;
        let mut xs = vec![0.0; n as usize + 2];
        let mut us = vec![0.0; n as usize + 1];
        let status = samdp_simulate_path(p, n, 9, xs.as_mut_ptr(), xs.len(), us.as_mut_ptr(), us.len());
        assert_eq!(status, SamdpStatus::Ok);
        let mut last = 0.0;
        assert_eq!(samdp_simulate_final(p, n, 9, &mut last), SamdpStatus::Ok);
        assert_eq!(last, xs[n as usize + 1]);
        assert!(us.iter().all(|u| u.abs() == 1.0));

        let status = samdp_simulate_path(p, n, 9, xs.as_mut_ptr(), 10, ptr::null_mut(), 0);
        assert_eq!(status, SamdpStatus::BufferTooSmall);

        let mut sup = 0.0;
        assert_eq!(samdp_envelope_sup(p, 100, &mut sup), SamdpStatus::Ok);
        assert_eq!(sup, 3.0);

        let mut s = 0.0;
        assert_eq!(samdp_weighted_sum(p, 100, 3, &mut s), SamdpStatus::Ok);
        samdp_problem_free(p);
        samdp_problem_free(ptr::null_mut());
    }
}

#[test]
fn constructor_errors() {
    let mut handle = ptr::null_mut();
    unsafe {
        let s = samdp_problem_new_sine_linear(0.5, 1.0, 0.0, &rademacher(1.0), 1.0, 0.0, &mut handle);
        assert_eq!(s, SamdpStatus::InvalidArgument);
        assert!(handle.is_null());
        let s = samdp_problem_new_linear(-1.0, 0.0, ptr::null(), 1.0, 0.0, &mut handle);
        assert_eq!(s, SamdpStatus::NullPointer);
        let adaptive = SamdpNoiseSpec {
            kind: SamdpNoiseKind::TwoPointAdaptive,
            sigma: 1.0,
            p_min: 0.3,
            p_max: 0.6,
        };
        let s = samdp_problem_new_sine_linear(1.0, 0.5, 0.0, &adaptive, 1.0, 0.0, &mut handle);
        assert_eq!(s, SamdpStatus::Ok);
        assert_eq!(last_error(), "");
        samdp_problem_free(handle);
    }
}

#[test]
fn problem_from_json() {
    let json = CString::new(
        r#"{"schema_version":1,"seed":1,"drift":{"kind":"linear","parameters":{"alpha1":-1}},
            "noise":{"kind":"rademacher","sigma":1},"b":2,"x0":1}"#,
    )
    .unwrap();
    let mut handle = ptr::null_mut();
    unsafe {
        assert_eq!(samdp_problem_from_json(json.as_ptr(), &mut handle), SamdpStatus::Ok);
        samdp_problem_free(handle);
        let bad = CString::new(r#"{"schema_version":1}"#).unwrap();
        assert_eq!(samdp_problem_from_json(bad.as_ptr(), &mut handle), SamdpStatus::InvalidArgument);
        assert!(last_error().contains("seed"));
    }
}

#[test]
fn bounds_and_tails() {
    let p = linear_problem(-1.0, 2.0);
    unsafe {
        let mut v = 0.0;
        let (lows, highs) = ([-1.0], [1.0]);
        assert_eq!(samdp_azuma_tail(2.0, lows.as_ptr(), highs.as_ptr(), 1, &mut v), SamdpStatus::Ok);
        assert!((v - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(samdp_azuma_tail(0.0, ptr::null(), ptr::null(), 0, &mut v), SamdpStatus::Ok);
        assert_eq!(v, 1.0);

        let mut bound = SamdpTailBound::default();
        assert_eq!(samdp_exp_inequality_bound(p, 1.0, 1000, 1000, 0.0, &mut bound), SamdpStatus::Ok);
        assert!(bound.value > 0.0 && bound.value <= 1.0);
        assert_eq!(bound.envelope_sup, 3.0);
        assert_eq!(
            samdp_exp_inequality_bound(p, 0.01, 1000, 1000, 0.0, &mut bound),
            SamdpStatus::Infeasible
        );

        let (mut tail, mut rate) = (0.0, 0.0);
        assert_eq!(samdp_gaussian_reference(1.0, 30.0, 1.0, &mut tail, &mut rate), SamdpStatus::Ok);
        assert!((rate + 0.504031218639759).abs() < 1e-12);

        let mut est = SamdpTailEstimate::default();
        let s = samdp_estimate_tail(p, SamdpTarget::WeightedSum, 100, 2.0, 1.0, 5000, 1, 1, &mut est);
        assert_eq!(s, SamdpStatus::Ok);
        let mut est4 = SamdpTailEstimate::default();
        samdp_estimate_tail(p, SamdpTarget::WeightedSum, 100, 2.0, 1.0, 5000, 1, 4, &mut est4);
        assert_eq!(est.hits, est4.hits);
        assert!(est.ci_low <= est.p_hat && est.p_hat <= est.ci_high);
        samdp_problem_free(p);

        let slow = linear_problem(-0.4, 2.0);
        let s = samdp_estimate_tail(slow, SamdpTarget::Recursion, 100, 2.0, 1.0, 10, 1, 0, &mut est);
        assert_eq!(s, SamdpStatus::NotMdpRegime);
        samdp_problem_free(slow);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/samdp.h");
    for name in [
        "samdp_last_error_message",
        "samdp_problem_new_linear",
        "samdp_problem_new_sine_linear",
        "samdp_problem_from_json",
        "samdp_problem_free",
        "samdp_beta",
        "samdp_simulate_path",
        "samdp_exp_inequality_bound",
        "samdp_estimate_tail",
        "SAMDP_STATUS_INFEASIBLE",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
