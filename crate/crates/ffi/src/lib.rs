//! C ABI for `gasg-core`.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Every function returns a [`GasgStatus`]; on failure a message is kept in
//! thread-local storage and can be read with [`gasg_last_error`]. Matrices
//! cross the boundary in column-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gasg_core::gasg21::{self, Outcome, RecoveryConfig, StepConfig, StreamingRecovery};
use gasg_core::grassmann::{self, ObservedVector, Subspace};
use gasg_core::stepsize::StepParams;
use gasg_core::{cli, rng, Error};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GasgStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad parameter values or sizes.
    InvalidArgument = 2,
    /// Malformed or incompatible input data.
    DataError = 3,
    /// The computation could not proceed (e.g. every column unusable).
    NumericalError = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Result of feeding one column to a streaming recovery.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GasgOutcome {
    Updated = 0,
    /// Column already lies in the subspace; nothing moved.
    Degenerate = 1,
    /// Column could not be fit (zero norm or too few observed rows).
    Unusable = 2,
}

/// Adaptive step-size parameters. Obtain defaults from
/// [`gasg_step_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasgStepParams {
    pub eta0: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub omega: f64,
}

impl From<StepParams> for GasgStepParams {
    fn from(p: StepParams) -> Self {
        GasgStepParams { eta0: p.eta0, mu_min: p.mu_min, mu_max: p.mu_max, f_min: p.f_min, f_max: p.f_max, omega: p.omega }
    }
}

impl From<GasgStepParams> for StepParams {
    fn from(p: GasgStepParams) -> Self {
        StepParams { eta0: p.eta0, mu_min: p.mu_min, mu_max: p.mu_max, f_min: p.f_min, f_max: p.f_max, omega: p.omega }
    }
}

/// Orthonormal basis of a subspace.
pub struct GasgSubspace(Subspace);

/// Streaming recovery state.
pub struct GasgRecovery(StreamingRecovery);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

type Res<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> Res<()>) -> GasgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GasgStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            GasgStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            GasgStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            match cli::exit_code(&e) {
                cli::EXIT_USAGE => GasgStatus::InvalidArgument,
                cli::EXIT_DATA => GasgStatus::DataError,
                _ => GasgStatus::NumericalError,
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            GasgStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Res<&'a T> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Res<&'a mut T> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Res<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn checked_len(n: usize, m: usize) -> Res<usize> {
    n.checked_mul(m).ok_or_else(|| Fail::Arg(format!("{n} x {m} overflows")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Res<()> {
    if out.is_null() {
        return Err(Fail::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn step_config(params: *const GasgStepParams) -> StepConfig {
    let mut step = StepConfig::default();
    // SAFETY: caller guarantees `params` is null or valid.
    if let Some(p) = unsafe { params.as_ref() } {
        step.params = (*p).into();
    }
    step
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gasg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn gasg_step_params_default() -> GasgStepParams {
    StepParams::default().into()
}

/// Random subspace drawn from `seed`, identical to the initialization used
/// by [`gasg_recover_dense`] with the same seed.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_subspace_random(n: usize, d: usize, seed: u64, out: *mut *mut GasgSubspace) -> GasgStatus {
    guard(|| {
        let s = gasg21::init_subspace(n, d, &mut rng::seeded(seed))?;
        write_out(out, GasgSubspace(s))
    })
}

/// Subspace spanned by the `n x d` column-major `basis`. Columns are
/// orthonormalized when they are not already orthonormal.
///
/// # Safety
/// `basis` must point to `n * d` doubles and `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_subspace_from_basis(
    basis: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut GasgSubspace,
) -> GasgStatus {
    guard(|| {
        let vals = slice(basis, checked_len(n, d)?, "basis")?;
        let m = DMatrix::from_column_slice(n, d, vals);
        let s = Subspace::from_orthonormal(m.clone()).or_else(|_| Subspace::orthonormalize(m))?;
        write_out(out, GasgSubspace(s))
    })
}

/// # Safety
/// `s` must be a live handle; `n` and `d` null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_subspace_dims(s: *const GasgSubspace, n: *mut usize, d: *mut usize) -> GasgStatus {
    guard(|| {
        let s = &deref(s, "subspace")?.0;
        if let Some(n) = n.as_mut() {
            *n = s.ambient_dim();
        }
        if let Some(d) = d.as_mut() {
            *d = s.rank();
        }
        Ok(())
    })
}

/// Copies the basis into `out` (column-major, `len >= n * d`).
///
/// # Safety
/// `s` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gasg_subspace_basis(s: *const GasgSubspace, out: *mut f64, len: usize) -> GasgStatus {
    guard(|| {
        let b = deref(s, "subspace")?.0.basis();
        if len < b.len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, basis has {}", b.len())));
        }
        if out.is_null() {
            return Err(Fail::Null("output buffer"));
        }
        ptr::copy_nonoverlapping(b.as_slice().as_ptr(), out, b.len());
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gasg_subspace_free(s: *mut GasgSubspace) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Largest principal angle between two subspaces of equal shape, in radians.
///
/// # Safety
/// Handles must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_principal_angle(a: *const GasgSubspace, b: *const GasgSubspace, out: *mut f64) -> GasgStatus {
    guard(|| {
        let t = grassmann::principal_angle(&deref(a, "first subspace")?.0, &deref(b, "second subspace")?.0)?;
        *deref_mut(out, "output")? = t;
        Ok(())
    })
}

/// Streaming recovery starting from a copy of `initial` with the adaptive
/// step rule. `params` may be null for defaults.
///
/// # Safety
/// `initial` must be live, `params` null or valid, `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_recovery_new(
    initial: *const GasgSubspace,
    params: *const GasgStepParams,
    out: *mut *mut GasgRecovery,
) -> GasgStatus {
    guard(|| {
        let u = deref(initial, "initial subspace")?.0.clone();
        let r = StreamingRecovery::new(u, step_config(params))?;
        write_out(out, GasgRecovery(r))
    })
}

/// Feeds one partially observed column: `values[i]` is the entry in row
/// `rows[i]`. Rows must be strictly increasing. `outcome` and `residual`
/// may be null; `residual` receives the fit residual before the update
/// (NaN for unusable columns).
///
/// # Safety
/// `r` must be live; `rows` and `values` valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn gasg_recovery_push(
    r: *mut GasgRecovery,
    rows: *const usize,
    values: *const f64,
    len: usize,
    outcome: *mut GasgOutcome,
    residual: *mut f64,
) -> GasgStatus {
    guard(|| {
        let rec = &mut deref_mut(r, "recovery")?.0;
        let rows = slice(rows, len, "rows")?.to_vec();
        let vals = slice(values, len, "values")?.to_vec();
        let x = ObservedVector::new(rec.iterations() as usize, rows, vals)?;
        let (record, o) = rec.push(&x)?;
        if let Some(p) = outcome.as_mut() {
            *p = match o {
                Outcome::Updated => GasgOutcome::Updated,
                Outcome::Degenerate => GasgOutcome::Degenerate,
                Outcome::Unusable => GasgOutcome::Unusable,
            };
        }
        if let Some(p) = residual.as_mut() {
            *p = record.residual_norm;
        }
        Ok(())
    })
}

/// Copy of the current estimate as a new subspace handle.
///
/// # Safety
/// `r` must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_recovery_subspace(r: *const GasgRecovery, out: *mut *mut GasgSubspace) -> GasgStatus {
    guard(|| {
        let s = deref(r, "recovery")?.0.subspace().clone();
        write_out(out, GasgSubspace(s))
    })
}

/// Number of columns pushed so far.
///
/// # Safety
/// `r` must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gasg_recovery_iterations(r: *const GasgRecovery, out: *mut u64) -> GasgStatus {
    guard(|| {
        *deref_mut(out, "output")? = deref(r, "recovery")?.0.iterations();
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gasg_recovery_free(r: *mut GasgRecovery) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Batch recovery of a rank-`d` subspace from an `n x m` column-major
/// matrix. `mask` (same layout, nonzero = observed) may be null for full
/// observation; `params` may be null for defaults. Columns are drawn
/// uniformly at random for `iterations` steps from the generator seeded
/// with `seed`.
///
/// # Safety
/// `data` must hold `n * m` doubles, `mask` null or `n * m` bytes, `params`
/// null or valid, `out` valid for a write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gasg_recover_dense(
    data: *const f64,
    mask: *const u8,
    n: usize,
    m: usize,
    d: usize,
    iterations: u64,
    seed: u64,
    params: *const GasgStepParams,
    out: *mut *mut GasgSubspace,
) -> GasgStatus {
    guard(|| {
        let len = checked_len(n, m)?;
        let x = slice(data, len, "data")?;
        let mask = if mask.is_null() { None } else { Some(slice(mask, len, "mask")?) };
        let columns: Vec<ObservedVector> = (0..m)
            .map(|j| {
                let col = &x[j * n..(j + 1) * n];
                match mask {
                    None => Ok(ObservedVector::full(j, col)),
                    Some(mk) => {
                        let rows: Vec<usize> = (0..n).filter(|&i| mk[j * n + i] != 0).collect();
                        let vals = rows.iter().map(|&i| col[i]).collect();
                        ObservedVector::new(j, rows, vals)
                    }
                }
            })
            .collect::<Result<_, Error>>()?;
        let mut cfg = RecoveryConfig::new(d);
        cfg.step = step_config(params);
        cfg.max_iterations = iterations;
        cfg.seed = seed;
        let (u, _) = gasg21::run(&columns, n, &cfg)?;
        write_out(out, GasgSubspace(u))
    })
}
