//! C ABI for the cvmbqc simulator.
//!
//! Conventions: every fallible function returns a [`CvmbqcStatus`] and
//! writes results through out-pointers. On failure the thread-local message
//! behind [`cvmbqc_last_error`] describes the problem. Matrices are written
//! row-major. Handles returned by `*_new` functions must be released with
//! the matching `*_free`.
//!
//! The installed header `include/cvmbqc.h` is generated from this file by
//! cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use cvmbqc::chain::{
    r_from_variance_db, run_analytic, run_sampled, AnalyticChain, ChainConfig, FeedforwardMode,
    MeasurementSchedule,
};
use cvmbqc::estimation::{
    bootstrap, estimate_s_analytic, inseparability_threshold, nullifier_variance_analytic,
    NullifierSpec, SFrame,
};
use cvmbqc::gates::{angles_for, compile, v_map, AnglePair, Gate, SingleModeTarget};

/// Result codes of the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmbqcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
}

/// Named gates of the angle recipes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmbqcGate {
    Identity = 0,
    Rotation = 1,
    SqueezeRot = 2,
    Shear = 3,
}

impl CvmbqcGate {
    fn gate(self) -> Gate {
        match self {
            CvmbqcGate::Identity => Gate::Identity,
            CvmbqcGate::Rotation => Gate::Rotation,
            CvmbqcGate::SqueezeRot => Gate::SqueezeRot,
            CvmbqcGate::Shear => Gate::Shear,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CvmbqcStatus, message: impl Into<String>) -> CvmbqcStatus {
    set_error(message.into());
    status
}

/// Version string of the underlying crate; static storage, do not free.
#[no_mangle]
pub extern "C" fn cvmbqc_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn cvmbqc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Opaque handle: an exactly evaluated repeated-teleportation chain.
pub struct CvmbqcChain {
    analytic: AnalyticChain,
}

/// Evaluate an `n_steps` plain-teleportation chain with the given resource
/// squeezing (dB relative to vacuum, non-positive) and transmissivities.
/// Returns NULL on invalid parameters (see `cvmbqc_last_error`).
#[no_mangle]
pub extern "C" fn cvmbqc_chain_new(
    n_steps: usize,
    squeezing_db_x: f64,
    squeezing_db_p: f64,
    eta_resource: f64,
    eta_detect: f64,
) -> *mut CvmbqcChain {
    if squeezing_db_x > 0.0 || squeezing_db_p > 0.0 {
        set_error("squeezing_db must be <= 0".into());
        return std::ptr::null_mut();
    }
    let cfg = ChainConfig {
        n_steps,
        r_x: r_from_variance_db(squeezing_db_x),
        r_p: r_from_variance_db(squeezing_db_p),
        eta_resource,
        eta_detect,
        phase_noise: None,
        delta_t_ns: 40.0,
    };
    let schedule = MeasurementSchedule::identity_chain(n_steps, 0.0, 0.0);
    match run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess) {
        Ok(analytic) => Box::into_raw(Box::new(CvmbqcChain { analytic })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Release a chain handle. NULL is accepted.
///
/// # Safety
/// `chain` must be NULL or a pointer returned by [`cvmbqc_chain_new`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_chain_free(chain: *mut CvmbqcChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Covariance of `(x_ref, p_ref, x_out, p_out)` in vacuum units, written as
/// 16 row-major doubles.
///
/// # Safety
/// `chain` must be a live handle; `cov_out` must point to 16 writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_chain_moments(
    chain: *const CvmbqcChain,
    cov_out: *mut f64,
) -> CvmbqcStatus {
    let (Some(chain), false) = (chain.as_ref(), cov_out.is_null()) else {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    };
    let m = chain.analytic.moments();
    for i in 0..4 {
        for j in 0..4 {
            *cov_out.add(i * 4 + j) = m[(i, j)];
        }
    }
    CvmbqcStatus::Ok
}

/// Nullifier variances of the chain (x and p combinations), vacuum units.
///
/// # Safety
/// `chain` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_chain_nullifier_variances(
    chain: *const CvmbqcChain,
    var_x_out: *mut f64,
    var_p_out: *mut f64,
) -> CvmbqcStatus {
    let (Some(chain), false) = (chain.as_ref(), var_x_out.is_null() || var_p_out.is_null()) else {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    };
    let (vx, vp) = nullifier_variance_analytic(&chain.analytic, &NullifierSpec::identity());
    *var_x_out = vx;
    *var_p_out = vp;
    CvmbqcStatus::Ok
}

/// Infinite-statistics estimate of the realized chain matrix, 4 row-major
/// doubles; against the logical input when `vs_reference` is false.
///
/// # Safety
/// `chain` must be a live handle; `s_out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_chain_estimate(
    chain: *const CvmbqcChain,
    vs_reference: bool,
    s_out: *mut f64,
) -> CvmbqcStatus {
    let (Some(chain), false) = (chain.as_ref(), s_out.is_null()) else {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    };
    let frame = if vs_reference {
        SFrame::VsReference
    } else {
        SFrame::VsInput
    };
    match estimate_s_analytic(&chain.analytic, frame) {
        Ok(s) => {
            for i in 0..2 {
                for j in 0..2 {
                    *s_out.add(i * 2 + j) = s[(i, j)];
                }
            }
            CvmbqcStatus::Ok
        }
        Err(e) => fail(CvmbqcStatus::NumericalFailure, e.to_string()),
    }
}

/// Predicted nullifier variance of an `n`-step chain at the given squeezing
/// level: `(n+1) 10^(db/10)` vacuum units.
///
/// # Safety
/// Out-pointers must be writable or NULL (skipped).
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_predict_multistep_variance(
    n_steps: usize,
    squeezing_db: f64,
    variance_out: *mut f64,
    variance_db_out: *mut f64,
) -> CvmbqcStatus {
    if squeezing_db > 0.0 {
        return fail(CvmbqcStatus::InvalidArgument, "squeezing_db must be <= 0");
    }
    let r = r_from_variance_db(squeezing_db);
    let (v, _) = cvmbqc::estimation::predict_multistep_variance(n_steps, r, r);
    if !variance_out.is_null() {
        *variance_out = v;
    }
    if !variance_db_out.is_null() {
        *variance_db_out = cvmbqc::chain::db_from_variance(v);
    }
    CvmbqcStatus::Ok
}

/// Separability bound of a named gate's nullifier pair, vacuum units.
///
/// # Safety
/// `threshold_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_inseparability_threshold(
    gate: CvmbqcGate,
    phi_rad: f64,
    threshold_out: *mut f64,
) -> CvmbqcStatus {
    if threshold_out.is_null() {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    }
    let spec = NullifierSpec::for_gate(gate.gate(), phi_rad);
    *threshold_out = inseparability_threshold(&spec);
    CvmbqcStatus::Ok
}

/// The single-step operation induced by measuring at `(theta_a, theta_b)`;
/// 4 row-major doubles. Degenerate pairs are rejected.
///
/// # Safety
/// `m_out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_step_map(
    theta_a_rad: f64,
    theta_b_rad: f64,
    m_out: *mut f64,
) -> CvmbqcStatus {
    if m_out.is_null() {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    }
    let pair = match AnglePair::new(theta_a_rad, theta_b_rad) {
        Ok(p) => p,
        Err(e) => return fail(CvmbqcStatus::InvalidArgument, e.to_string()),
    };
    let m = v_map(&pair);
    for i in 0..2 {
        for j in 0..2 {
            *m_out.add(i * 2 + j) = m.matrix()[(i, j)];
        }
    }
    CvmbqcStatus::Ok
}

/// Measurement angles (degrees) realizing a named gate in one step:
/// writes `[theta_a, theta_b]`.
///
/// # Safety
/// `angles_deg_out` must point to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_gate_angles(
    gate: CvmbqcGate,
    phi_rad: f64,
    angles_deg_out: *mut f64,
) -> CvmbqcStatus {
    if angles_deg_out.is_null() {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    }
    match angles_for(gate.gate(), phi_rad) {
        Ok(pair) => {
            *angles_deg_out = pair.theta_a().to_degrees();
            *angles_deg_out.add(1) = pair.theta_b().to_degrees();
            CvmbqcStatus::Ok
        }
        Err(e) => fail(CvmbqcStatus::InvalidArgument, e.to_string()),
    }
}

/// Compile a det-1 target matrix (4 row-major doubles) into measurement
/// steps. Writes up to `capacity` `(theta_a_deg, theta_b_deg)` pairs into
/// `angles_deg_out` and the number of steps into `steps_out`.
///
/// # Safety
/// `target` must point to 4 readable doubles; `angles_deg_out` to
/// `2 * capacity` writable doubles; `steps_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_compile(
    target: *const f64,
    angles_deg_out: *mut f64,
    capacity: usize,
    steps_out: *mut usize,
) -> CvmbqcStatus {
    if target.is_null() || angles_deg_out.is_null() || steps_out.is_null() {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    }
    let rows = [[*target, *target.add(1)], [*target.add(2), *target.add(3)]];
    let parsed = match SingleModeTarget::from_rows(rows) {
        Ok(t) => t,
        Err(e) => return fail(CvmbqcStatus::InvalidArgument, e.to_string()),
    };
    let steps = match compile(&parsed, 2) {
        Ok(s) => s,
        Err(e) => return fail(CvmbqcStatus::NumericalFailure, e.to_string()),
    };
    if steps.len() > capacity {
        return fail(
            CvmbqcStatus::InvalidArgument,
            format!("need capacity {} steps, got {capacity}", steps.len()),
        );
    }
    for (k, pair) in steps.iter().enumerate() {
        *angles_deg_out.add(2 * k) = pair.theta_a().to_degrees();
        *angles_deg_out.add(2 * k + 1) = pair.theta_b().to_degrees();
    }
    *steps_out = steps.len();
    CvmbqcStatus::Ok
}

/// Sample an `n_steps` identity chain and return the measured nullifier
/// variance sum with its bootstrap standard error; deterministic in `seed`.
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_sample_nullifier_sum(
    n_steps: usize,
    squeezing_db: f64,
    shots: u64,
    seed: u64,
    sum_out: *mut f64,
    err_out: *mut f64,
) -> CvmbqcStatus {
    if sum_out.is_null() || err_out.is_null() {
        return fail(CvmbqcStatus::NullArgument, "null pointer argument");
    }
    if squeezing_db > 0.0 {
        return fail(CvmbqcStatus::InvalidArgument, "squeezing_db must be <= 0");
    }
    let r = r_from_variance_db(squeezing_db);
    let cfg = ChainConfig::ideal(n_steps, r, r);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let spec = NullifierSpec::identity();
    let mut sum = 0.0;
    let mut err_sq = 0.0;
    for (k, (theta, combo)) in [(0.0, spec.delta1), (half_pi, spec.delta2)]
        .into_iter()
        .enumerate()
    {
        let schedule = MeasurementSchedule::identity_chain(n_steps, theta, theta);
        let records = match run_sampled(
            &cfg,
            &schedule,
            shots,
            seed.wrapping_add(k as u64),
            FeedforwardMode::Postprocess,
        ) {
            Ok(r) => r,
            Err(e) => return fail(CvmbqcStatus::NumericalFailure, e.to_string()),
        };
        let values: Vec<f64> = records
            .corrected_pairs()
            .iter()
            .map(|&(r, o)| combo.evaluate(r, o))
            .collect();
        let stat = |d: &[f64]| {
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        };
        match bootstrap(&values, stat, 400, seed ^ 0x5157) {
            Ok(b) => {
                sum += b.estimate;
                err_sq += b.std_error * b.std_error;
            }
            Err(e) => return fail(CvmbqcStatus::NumericalFailure, e.to_string()),
        }
    }
    *sum_out = sum;
    *err_out = err_sq.sqrt();
    CvmbqcStatus::Ok
}

/// True when `message` occurs in the last error (test helper for bindings).
///
/// # Safety
/// `message` must be a valid NUL-terminated string or NULL.
#[no_mangle]
pub unsafe extern "C" fn cvmbqc_last_error_contains(message: *const c_char) -> bool {
    if message.is_null() {
        return false;
    }
    let needle = CStr::from_ptr(message).to_string_lossy();
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.to_string_lossy().contains(needle.as_ref()))
            .unwrap_or(false)
    })
}
