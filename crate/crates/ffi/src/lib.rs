//! C ABI over `hjb-ng`.
//!
//! Market parameters and finite-difference fields live behind opaque
//! handles created and released by this library. Every fallible call
//! returns an [`HjbStatus`] and writes results through out-pointers; panics
//! are caught at the boundary and reported as `HJB_STATUS_PANIC`.
//!
//! The C header `include/hjb_ng.h` is regenerated by the build script.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hjb_ng::fd::{FdSolver, Field, Grid};
use hjb_ng::model::{MarketParams, SpacePoint};
use hjb_ng::pricing::{indifference_price_closed, PriceQuery};
use hjb_ng::trial::{rate_constants, value_function, RateMode};
use hjb_ng::Error;

/// Rate mode selector: divide by the integrated mass entry.
pub const HJB_MODE_ORACLE: u32 = 0;
/// Rate mode selector: keep the single-coordinate mass entry `alpha^2 / 4`.
pub const HJB_MODE_PAPER: u32 = 1;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    SingularHessian = 3,
    ConvergenceFailure = 4,
    NotPositiveDefinite = 5,
    CflViolation = 6,
    NonPositiveField = 7,
    DomainMismatch = 8,
    InvalidBranch = 9,
    NoSignChange = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for HjbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParams(_) => HjbStatus::InvalidParams,
            Error::SingularHessian { .. } => HjbStatus::SingularHessian,
            Error::ConvergenceFailure { .. } => HjbStatus::ConvergenceFailure,
            Error::NotPositiveDefinite => HjbStatus::NotPositiveDefinite,
            Error::CflViolation { .. } => HjbStatus::CflViolation,
            Error::NonPositiveField { .. } => HjbStatus::NonPositiveField,
            Error::DomainMismatch(_) => HjbStatus::DomainMismatch,
            Error::InvalidBranch(_) => HjbStatus::InvalidBranch,
            Error::NoSignChange { .. } => HjbStatus::NoSignChange,
        }
    }
}

/// Plain-data description of a market, used to build an `HjbParams`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HjbMarket {
    pub r: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub a0: f64,
    pub b0: f64,
    pub rho: f64,
    pub n: u32,
    pub k: f64,
    pub horizon: f64,
}

/// Opaque validated market parameters.
pub struct HjbParams(MarketParams);

/// Opaque finite-difference solution.
pub struct HjbField(Field);

fn guard(f: impl FnOnce() -> Result<(), HjbStatus>) -> HjbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HjbStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => HjbStatus::Panic,
    }
}

fn lift<T>(r: hjb_ng::Result<T>) -> Result<T, HjbStatus> {
    r.map_err(|e| HjbStatus::from(&e))
}

fn mode_of(mode: u32) -> Result<RateMode, HjbStatus> {
    match mode {
        HJB_MODE_ORACLE => Ok(RateMode::Oracle),
        HJB_MODE_PAPER => Ok(RateMode::Paper),
        _ => Err(HjbStatus::InvalidParams),
    }
}

unsafe fn params_ref<'a>(p: *const HjbParams) -> Result<&'a MarketParams, HjbStatus> {
    p.as_ref().map(|h| &h.0).ok_or(HjbStatus::NullPointer)
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize) -> Result<&'a [f64], HjbStatus> {
    if len == 0 {
        Ok(&[])
    } else if data.is_null() {
        Err(HjbStatus::NullPointer)
    } else {
        Ok(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), HjbStatus> {
    if out.is_null() {
        return Err(HjbStatus::NullPointer);
    }
    out.write(value);
    Ok(())
}

/// Static description of a status code. Never returns NULL; unknown codes
/// map to "unknown status".
#[no_mangle]
pub extern "C" fn hjb_status_message(status: i32) -> *const c_char {
    const ALL: [HjbStatus; 13] = [
        HjbStatus::Ok,
        HjbStatus::NullPointer,
        HjbStatus::InvalidParams,
        HjbStatus::SingularHessian,
        HjbStatus::ConvergenceFailure,
        HjbStatus::NotPositiveDefinite,
        HjbStatus::CflViolation,
        HjbStatus::NonPositiveField,
        HjbStatus::DomainMismatch,
        HjbStatus::InvalidBranch,
        HjbStatus::NoSignChange,
        HjbStatus::BufferTooSmall,
        HjbStatus::Panic,
    ];
    let Some(status) = ALL.into_iter().find(|s| *s as i32 == status) else {
        return c"unknown status".as_ptr();
    };
    let s: &'static CStr = match status {
        HjbStatus::Ok => c"ok",
        HjbStatus::NullPointer => c"null pointer argument",
        HjbStatus::InvalidParams => c"invalid parameters",
        HjbStatus::SingularHessian => c"u_xx at or below the singularity guard",
        HjbStatus::ConvergenceFailure => c"quadrature node search did not converge",
        HjbStatus::NotPositiveDefinite => c"mass matrix not positive definite",
        HjbStatus::CflViolation => c"time step exceeds the stability bound",
        HjbStatus::NonPositiveField => c"finite-difference field lost positivity",
        HjbStatus::DomainMismatch => c"grids are not nested",
        HjbStatus::InvalidBranch => c"invalid value-function branch",
        HjbStatus::NoSignChange => c"bracket does not straddle a root",
        HjbStatus::BufferTooSmall => c"output buffer too small",
        HjbStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Validate `market` and store a new handle in `*out`.
///
/// # Safety
/// `market` must point to a valid `HjbMarket`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hjb_params_new(market: *const HjbMarket, out: *mut *mut HjbParams) -> HjbStatus {
    guard(|| {
        let m = market.as_ref().ok_or(HjbStatus::NullPointer)?;
        let mp = MarketParams {
            r: m.r,
            lambda: m.lambda,
            gamma: m.gamma,
            a0: m.a0,
            b0: m.b0,
            rho: m.rho,
            n: m.n as usize,
            k: m.k,
            horizon: m.horizon,
        };
        lift(mp.validate())?;
        write_out(out, Box::into_raw(Box::new(HjbParams(mp))))
    })
}

/// Reference parameter set with `n` non-tradables.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hjb_params_reference(n: u32, out: *mut *mut HjbParams) -> HjbStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(HjbParams(MarketParams::reference(n as usize))))))
}

/// Copy the parameters behind a handle into `*out`.
///
/// # Safety
/// `params` must be a live handle or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hjb_params_get(params: *const HjbParams, out: *mut HjbMarket) -> HjbStatus {
    guard(|| {
        let mp = params_ref(params)?;
        let m = HjbMarket {
            r: mp.r,
            lambda: mp.lambda,
            gamma: mp.gamma,
            a0: mp.a0,
            b0: mp.b0,
            rho: mp.rho,
            n: mp.n as u32,
            k: mp.k,
            horizon: mp.horizon,
        };
        write_out(out, m)
    })
}

/// Release a handle from `hjb_params_new` or `hjb_params_reference`.
///
/// # Safety
/// `params` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hjb_params_free(params: *mut HjbParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Log-parameter rates. `c_zeta` receives NaN when `n = 0`.
///
/// # Safety
/// `params` must be a live handle; the three out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hjb_rate_constants(
    params: *const HjbParams,
    mode: u32,
    c_alpha: *mut f64,
    c_beta: *mut f64,
    c_zeta: *mut f64,
) -> HjbStatus {
    guard(|| {
        let rc = rate_constants(params_ref(params)?, mode_of(mode)?);
        write_out(c_alpha, rc.c_alpha)?;
        write_out(c_beta, rc.c_beta)?;
        write_out(c_zeta, rc.c_zeta.unwrap_or(f64::NAN))
    })
}

/// Trial value function `V(t, x, y)`. `y` must have `n` entries.
///
/// # Safety
/// `params` must be a live handle; `y` must point to `ny` doubles (may be
/// NULL when `ny = 0`); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hjb_value_function(
    params: *const HjbParams,
    mode: u32,
    t: f64,
    x: f64,
    y: *const f64,
    ny: usize,
    out: *mut f64,
) -> HjbStatus {
    guard(|| {
        let mp = params_ref(params)?;
        let y = slice_arg(y, ny)?;
        if y.len() != mp.n || !(0.0..=mp.horizon).contains(&t) {
            return Err(HjbStatus::InvalidParams);
        }
        write_out(out, value_function(mp, mode_of(mode)?, t, &SpacePoint::new(x, y.to_vec())))
    })
}

/// Closed-form buyer's indifference price of the handle's `k` forwards.
///
/// # Safety
/// As for `hjb_value_function`.
#[no_mangle]
pub unsafe extern "C" fn hjb_indifference_price(
    params: *const HjbParams,
    mode: u32,
    x0: f64,
    y0: *const f64,
    ny: usize,
    out: *mut f64,
) -> HjbStatus {
    guard(|| {
        let mp = params_ref(params)?;
        let y0 = slice_arg(y0, ny)?;
        let q = lift(PriceQuery::new(mp.clone(), x0, y0.to_vec()))?;
        write_out(out, lift(indifference_price_closed(&q, mode_of(mode)?))?)
    })
}

/// Explicit finite-difference solve on `[0, edge]^(n+1)` with `2^level + 1`
/// points per axis up to reversed time `horizon`.
///
/// # Safety
/// `params` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hjb_fd_solve(
    params: *const HjbParams,
    level: u32,
    edge: f64,
    horizon: f64,
    out: *mut *mut HjbField,
) -> HjbStatus {
    guard(|| {
        let mp = params_ref(params)?;
        let grid = lift(Grid::new(mp.n + 1, level, edge))?;
        let (field, _) = lift(FdSolver::default().solve(&grid, mp, horizon, None))?;
        write_out(out, Box::into_raw(Box::new(HjbField(field))))
    })
}

/// Number of nodes of a field (0 for NULL).
///
/// # Safety
/// `field` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hjb_field_len(field: *const HjbField) -> usize {
    field.as_ref().map_or(0, |f| f.0.values.len())
}

/// Spatial dimension of a field (0 for NULL).
///
/// # Safety
/// `field` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hjb_field_dim(field: *const HjbField) -> usize {
    field.as_ref().map_or(0, |f| f.0.grid.d)
}

/// Copy all node values (flat order, `x` fastest) into `buf`.
///
/// # Safety
/// `field` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hjb_field_values(field: *const HjbField, buf: *mut f64, len: usize) -> HjbStatus {
    guard(|| {
        let f = &field.as_ref().ok_or(HjbStatus::NullPointer)?.0;
        if buf.is_null() {
            return Err(HjbStatus::NullPointer);
        }
        if len < f.values.len() {
            return Err(HjbStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(f.values.as_ptr(), buf, f.values.len());
        Ok(())
    })
}

/// Coordinates `(x, y_1, ..)` of node `index` into `coords`.
///
/// # Safety
/// `field` must be a live handle; `coords` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hjb_field_point(field: *const HjbField, index: usize, coords: *mut f64, len: usize) -> HjbStatus {
    guard(|| {
        let f = &field.as_ref().ok_or(HjbStatus::NullPointer)?.0;
        if coords.is_null() {
            return Err(HjbStatus::NullPointer);
        }
        if index >= f.values.len() {
            return Err(HjbStatus::InvalidParams);
        }
        if len < f.grid.d {
            return Err(HjbStatus::BufferTooSmall);
        }
        let p = f.grid.point(index);
        coords.write(p.x);
        for (i, y) in p.y.iter().enumerate() {
            coords.add(i + 1).write(*y);
        }
        Ok(())
    })
}

/// Release a field handle.
///
/// # Safety
/// `field` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hjb_field_free(field: *mut HjbField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}
