//! C interface to the audit library.
//!
//! Every function returns an [`RlaStatus`]; results come back through out
//! pointers. On failure a message is kept per thread and can be fetched with
//! [`rla_last_error`]. Strings handed out by this library must be released
//! with [`rla_string_free`]; handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use csd_rla::assertions::overstatement_value;
use csd_rla::engine::persist::load_unlocked;
use csd_rla::engine::{AuditState, ReportFormat};
use csd_rla::model::AuditMode;
use csd_rla::risk::{estimate_sample_size, optimal_eta, AlphaState, ErrorModel};
use csd_rla::sampling::SampleNumber;
use csd_rla::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Validation = 4,
    Fatal = 5,
    Runtime = 6,
    Panic = 7,
}

/// Opaque risk-measurement state for one assertion.
pub struct RlaAlpha {
    state: AlphaState,
}

/// Opaque read-only view of a stored audit.
pub struct RlaAudit {
    state: AuditState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message.into()));
}

fn status_of(e: &Error) -> RlaStatus {
    match e {
        Error::Fatal(_) => RlaStatus::Fatal,
        Error::WinnerMismatch(_)
        | Error::InvalidContest { .. }
        | Error::InvalidConfig(_)
        | Error::AssertionsUnavailable(_) => RlaStatus::Validation,
        Error::ValueOutOfRange { .. } => RlaStatus::InvalidArgument,
        _ => RlaStatus::Runtime,
    }
}

struct Failure(RlaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(RlaStatus::InvalidArgument, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RlaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RlaStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RlaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(RlaStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RlaStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("string contains NUL"))
}

fn check_margin(margin: f64, upper: f64) -> Result<(), Failure> {
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(invalid(format!("upper bound {upper} must be positive")));
    }
    if !(margin.is_finite() && margin < 2.0 * upper) {
        return Err(invalid(format!(
            "margin {margin} must be below twice the upper bound"
        )));
    }
    Ok(())
}

fn check_rates(p1: f64, p2: f64) -> Result<(), Failure> {
    ErrorModel {
        p1,
        p2,
        ..ErrorModel::ZERO
    }
    .check()
    .map_err(|e| invalid(e.to_string()))
}

/// Copy of the last error message on this thread, or null when the last
/// call succeeded. Release with [`rla_string_free`].
#[no_mangle]
pub extern "C" fn rla_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_deref() {
        Some(m) => CString::new(m.replace('\0', " "))
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rla_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Alternative mean that maximises expected log growth for a comparison
/// audit with margin `margin`, assorter bound `upper` and overstatement rates
/// `p1`, `p2`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn rla_optimal_eta(
    margin: f64,
    upper: f64,
    p1: f64,
    p2: f64,
    out: *mut f64,
) -> RlaStatus {
    guard(|| {
        non_null(out, "out")?;
        check_margin(margin, upper)?;
        check_rates(p1, p2)?;
        *out = optimal_eta(margin, upper, p1, p2);
        Ok(())
    })
}

/// Cards to draw before the risk falls to `alpha`, assuming one-vote
/// overstatements at rate `p1` and two-vote overstatements at rate `p2`,
/// the first draw carrying an error.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rla_estimate_sample_size(
    population: u64,
    margin: f64,
    upper: f64,
    alpha: f64,
    p1: f64,
    p2: f64,
    eta: f64,
    out: *mut u64,
) -> RlaStatus {
    guard(|| {
        non_null(out, "out")?;
        if population == 0 {
            return Err(invalid("population must be positive"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("risk limit {alpha} outside (0, 1)")));
        }
        check_margin(margin, upper)?;
        check_rates(p1, p2)?;
        let model = ErrorModel {
            p1,
            p2,
            ..ErrorModel::ZERO
        };
        *out = estimate_sample_size(population, margin, upper, alpha, model, eta);
        Ok(())
    })
}

/// Overstatement assorter value for overstatement `omega`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rla_overstatement_assorter(
    omega: f64,
    margin: f64,
    upper: f64,
    out: *mut f64,
) -> RlaStatus {
    guard(|| {
        non_null(out, "out")?;
        check_margin(margin, upper)?;
        if !(-upper..=upper).contains(&omega) {
            return Err(invalid(format!(
                "overstatement {omega} outside [-{upper}, {upper}]"
            )));
        }
        *out = overstatement_value(omega, margin, upper);
        Ok(())
    })
}

/// Sample number of `card_id` under `seed`, as 64 hex digits.
///
/// # Safety
/// `seed` and `card_id` must be NUL-terminated strings; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rla_sample_number(
    seed: *const c_char,
    card_id: *const c_char,
    out: *mut *mut c_char,
) -> RlaStatus {
    guard(|| {
        non_null(out, "out")?;
        let seed = read_str(seed, "seed")?;
        let card_id = read_str(card_id, "card_id")?;
        *out = into_c_string(SampleNumber::derive(seed, card_id).to_string())?;
        Ok(())
    })
}

/// New comparison-audit risk state over `population` cards.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rla_alpha_new(
    population: u64,
    upper: f64,
    eta: f64,
    out: *mut *mut RlaAlpha,
) -> RlaStatus {
    guard(|| {
        non_null(out, "out")?;
        if population == 0 {
            return Err(invalid("population must be positive"));
        }
        if !(upper > 0.5 && upper.is_finite()) {
            return Err(invalid(format!("upper bound {upper} must exceed 1/2")));
        }
        if !(eta > 0.5 && eta <= upper) {
            return Err(invalid(format!("eta {eta} outside (1/2, {upper}]")));
        }
        let state = AlphaState::new(population, upper, eta, AuditMode::Comparison);
        *out = Box::into_raw(Box::new(RlaAlpha { state }));
        Ok(())
    })
}

/// Feed one observation. The state is unchanged on error.
///
/// # Safety
/// `handle` must come from [`rla_alpha_new`] and not be freed.
#[no_mangle]
pub unsafe extern "C" fn rla_alpha_step(handle: *mut RlaAlpha, x: f64) -> RlaStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let handle = &mut *handle;
        let mut next = handle.state.clone();
        next.step(x)?;
        handle.state = next;
        Ok(())
    })
}

/// Current p-value and number of observations so far.
///
/// # Safety
/// `handle` must be live; `p_value` and `drawn` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rla_alpha_p_value(
    handle: *const RlaAlpha,
    p_value: *mut f64,
    drawn: *mut u64,
) -> RlaStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(p_value, "p_value")?;
        non_null(drawn, "drawn")?;
        let state = &(*handle).state;
        *p_value = state.p_value();
        *drawn = state.drawn;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a live handle from [`rla_alpha_new`].
#[no_mangle]
pub unsafe extern "C" fn rla_alpha_free(handle: *mut RlaAlpha) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Load the audit stored in `state_dir` for reading. Does not take the
/// directory lock.
///
/// # Safety
/// `state_dir` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rla_audit_open(
    state_dir: *const c_char,
    out: *mut *mut RlaAudit,
) -> RlaStatus {
    guard(|| {
        non_null(out, "out")?;
        let dir = read_str(state_dir, "state_dir")?;
        let state = load_unlocked(Path::new(dir))?;
        *out = Box::into_raw(Box::new(RlaAudit { state }));
        Ok(())
    })
}

/// Audit report as JSON. A negative `threshold` leaves out the workload
/// total above a margin threshold.
///
/// # Safety
/// `handle` must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rla_audit_report_json(
    handle: *const RlaAudit,
    threshold: f64,
    out: *mut *mut c_char,
) -> RlaStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        let threshold = (threshold >= 0.0).then_some(threshold);
        let text = (*handle)
            .state
            .report(threshold)
            .render(ReportFormat::Structured);
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a live handle from [`rla_audit_open`].
#[no_mangle]
pub unsafe extern "C" fn rla_audit_free(handle: *mut RlaAudit) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_status_codes() {
        assert_eq!(status_of(&Error::Fatal("x".into())), RlaStatus::Fatal);
        assert_eq!(
            status_of(&Error::InvalidConfig("x".into())),
            RlaStatus::Validation
        );
        assert_eq!(status_of(&Error::MissingSeed), RlaStatus::Runtime);
    }

    #[test]
    fn panics_become_a_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let status = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(status, RlaStatus::Panic);
        let message = rla_last_error();
        assert_eq!(
            unsafe { CStr::from_ptr(message) }.to_str().unwrap(),
            "internal panic"
        );
        unsafe { rla_string_free(message) };
        assert_eq!(guard(|| Ok(())), RlaStatus::Ok);
        assert!(rla_last_error().is_null());
    }
}
