use std::ffi::{CStr, CString};
use std::ptr;

use csd_rla_ffi::*;

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { rla_string_free(p) };
    s
}

fn last_error() -> String {
    take_string(rla_last_error())
}

#[test]
fn estimates_match_the_library() {
    let mut eta = 0.0;
    assert_eq!(
        unsafe { rla_optimal_eta(0.1, 1.0, 0.0, 1e-4, &mut eta) },
        RlaStatus::Ok
    );
    assert_eq!(eta, csd_rla::risk::optimal_eta(0.1, 1.0, 0.0, 1e-4));
    assert!(rla_last_error().is_null());

    let mut n = 0;
    let status = unsafe { rla_estimate_sample_size(1_000, 0.1, 1.0, 0.05, 0.0, 0.0, eta, &mut n) };
    assert_eq!(status, RlaStatus::Ok);
    assert_eq!(n, 57);
    let status = unsafe { rla_estimate_sample_size(4_164, 0.0, 1.0, 0.05, 0.0, 0.0, eta, &mut n) };
    assert_eq!(status, RlaStatus::Ok);
    assert_eq!(n, 4_164);
}

#[test]
fn bad_arguments_set_an_error() {
    let mut n = 0;
    let status = unsafe { rla_estimate_sample_size(1_000, 0.1, 1.0, 1.5, 0.0, 0.0, 0.6, &mut n) };
    assert_eq!(status, RlaStatus::InvalidArgument);
    assert!(last_error().contains("risk limit"));
    let status = unsafe { rla_estimate_sample_size(1_000, 0.1, 1.0, 0.05, 0.7, 0.7, 0.6, &mut n) };
    assert_eq!(status, RlaStatus::InvalidArgument);
    let status = unsafe { rla_optimal_eta(0.1, 1.0, 0.0, 0.0, ptr::null_mut()) };
    assert_eq!(status, RlaStatus::NullPointer);
    assert_eq!(last_error(), "out is null");
}

#[test]
fn overstatement_assorter_values() {
    let mut b = 0.0;
    for (omega, expected) in [
        (0.0, 2.0 / 3.0),
        (0.5, 1.0 / 3.0),
        (1.0, 0.0),
        (-1.0, 4.0 / 3.0),
    ] {
        assert_eq!(
            unsafe { rla_overstatement_assorter(omega, 0.5, 1.0, &mut b) },
            RlaStatus::Ok
        );
        assert!((b - expected).abs() < 1e-12, "{omega}: {b}");
    }
    assert_eq!(
        unsafe { rla_overstatement_assorter(1.5, 0.5, 1.0, &mut b) },
        RlaStatus::InvalidArgument
    );
}

#[test]
fn sample_numbers_are_hex_digests() {
    let seed = CString::new("12345678901234567890").unwrap();
    let card = CString::new("b01-1").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { rla_sample_number(seed.as_ptr(), card.as_ptr(), &mut out) },
        RlaStatus::Ok
    );
    let hex = take_string(out);
    assert_eq!(hex.len(), 64);
    assert_eq!(
        hex,
        csd_rla::sampling::SampleNumber::derive("12345678901234567890", "b01-1").to_string()
    );
    let bad = [0xffu8, 0];
    let status = unsafe { rla_sample_number(bad.as_ptr().cast(), card.as_ptr(), &mut out) };
    assert_eq!(status, RlaStatus::InvalidUtf8);
}

#[test]
fn risk_state_handle_tracks_observations() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { rla_alpha_new(10, 4.0 / 3.0, 1.2, &mut h) },
        RlaStatus::Ok
    );
    let mut p = 0.0;
    let mut drawn = 0;
    unsafe { rla_alpha_p_value(h, &mut p, &mut drawn) };
    assert_eq!((p, drawn), (1.0, 0));
    for _ in 0..5 {
        assert_eq!(unsafe { rla_alpha_step(h, 2.0 / 3.0) }, RlaStatus::Ok);
    }
    assert_eq!(
        unsafe { rla_alpha_step(h, 2.0) },
        RlaStatus::InvalidArgument
    );
    unsafe { rla_alpha_p_value(h, &mut p, &mut drawn) };
    assert_eq!(drawn, 5);
    assert!(p < 1.0);

    let mut reference =
        csd_rla::risk::AlphaState::new(10, 4.0 / 3.0, 1.2, csd_rla::model::AuditMode::Comparison);
    for _ in 0..5 {
        reference.step(2.0 / 3.0).unwrap();
    }
    assert_eq!(p, reference.p_value());
    unsafe { rla_alpha_free(h) };
    unsafe { rla_alpha_free(ptr::null_mut()) };

    assert_eq!(
        unsafe { rla_alpha_new(10, 1.0, 2.0, &mut h) },
        RlaStatus::InvalidArgument
    );
}

#[test]
fn stored_audit_report() {
    use csd_rla::engine::{AuditState, Store};
    use csd_rla::model::{AuditSpec, CardRecord, Contest, ContestStatus, SocialChoice};

    let dir = tempfile::tempdir().unwrap();
    let contest = Contest {
        id: "c".into(),
        name: "c".into(),
        social_choice: SocialChoice::Plurality,
        candidates: vec!["a".into(), "b".into()],
        reported_winners: vec!["a".into()],
        cards_upper_bound: 20,
        risk_limit: 0.05,
        status: ContestStatus::Active,
    };
    let cards = (0..20)
        .map(|i| {
            CardRecord::new(format!("k-{i}")).with_votes("c", &[if i < 15 { "a" } else { "b" }])
        })
        .collect();
    let mut state = AuditState::initialize(
        AuditSpec::default(),
        vec![contest],
        Default::default(),
        cards,
        None,
    )
    .unwrap();
    drop(Store::create(dir.path(), &mut state).unwrap());

    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { rla_audit_open(path.as_ptr(), &mut h) },
        RlaStatus::Ok
    );
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { rla_audit_report_json(h, -1.0, &mut out) },
        RlaStatus::Ok
    );
    let json = take_string(out);
    assert_eq!(
        json,
        state
            .report(None)
            .render(csd_rla::engine::ReportFormat::Structured)
    );
    unsafe { rla_audit_free(h) };

    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let status = unsafe { rla_audit_open(missing.as_ptr(), &mut h) };
    assert_ne!(status, RlaStatus::Ok);
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_the_interface_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/csd_rla.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct RlaAlpha RlaAlpha;",
        "typedef struct RlaAudit RlaAudit;",
        "RLA_STATUS_OK = 0",
        "rla_estimate_sample_size(",
        "rla_optimal_eta(",
        "rla_overstatement_assorter(",
        "rla_sample_number(",
        "rla_alpha_new(",
        "rla_alpha_step(",
        "rla_audit_report_json(",
        "rla_last_error(",
        "rla_string_free(",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
