//! C ABI over `fde-relax`.
//!
//! Every function returns an [`FdeStatus`]; results go through out-pointers.
//! Handles are opaque and must be released with the matching `*_free`.
//! The message of the last failure on the calling thread is available from
//! [`fde_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fde_relax::stationary::{self, StationaryProfile};
use fde_relax::stepper::{NewtonSettings, RunParameters, State, Stepper};
use fde_relax::{grid, Error, Field, Grid, PowerLaw, TimeGrid};

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    BufferTooSmall = 4,
    Finished = 5,
    Panic = 6,
}

/// Parameters of a coupled run on `[0, length]^dim`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FdeRunConfig {
    pub dim: u32,
    pub length: f64,
    pub h: f64,
    pub q: f64,
    pub mu: f64,
    pub eps: f64,
    pub xi: f64,
    pub dt: f64,
    pub t_final: f64,
}

/// Normalized Lane-Emden profile.
pub struct FdeProfile {
    inner: StationaryProfile,
}

/// Coupled time stepper together with its current state.
pub struct FdeSimulation {
    stepper: Stepper,
    state: State,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: FdeStatus, msg: impl Into<String>) -> FdeStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> FdeStatus {
    let status = match e {
        Error::Contract(_) | Error::Config(_) => FdeStatus::InvalidArgument,
        _ => FdeStatus::SolverFailure,
    };
    fail(status, e.to_string())
}

/// Run `f`, converting panics and library errors into status codes.
fn guard(f: impl FnOnce() -> Result<(), FdeStatus>) -> FdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(FdeStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: fde_relax::Result<T>) -> Result<T, FdeStatus> {
    r.map_err(from_error)
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), FdeStatus> {
    if p.is_null() {
        Err(fail(FdeStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn law(q: f64) -> Result<PowerLaw, FdeStatus> {
    lib(PowerLaw::new(q))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), FdeStatus> {
    non_null(out, name)?;
    *out = value;
    Ok(())
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), FdeStatus> {
    non_null(buf, "buf")?;
    if len < values.len() {
        return Err(fail(
            FdeStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

unsafe fn read_field(buf: *const f64, len: usize, expected: usize, name: &str) -> Result<Field, FdeStatus> {
    non_null(buf, name)?;
    if len != expected {
        return Err(fail(
            FdeStatus::InvalidArgument,
            format!("{name} has {len} values, the grid has {expected} nodes"),
        ));
    }
    Ok(Field::from_vec(std::slice::from_raw_parts(buf, len).to_vec()))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, FdeStatus> {
    non_null(p, name)?;
    Ok(&*p)
}

unsafe fn handle_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, FdeStatus> {
    non_null(p, name)?;
    Ok(&mut *p)
}

impl FdeRunConfig {
    fn params(&self) -> Result<RunParameters, FdeStatus> {
        let p = RunParameters {
            law: law(self.q)?,
            mu: self.mu,
            eps: self.eps,
            xi: self.xi,
            time: lib(TimeGrid::new(self.dt, self.t_final))?,
            grid: lib(Grid::new(self.dim as usize, self.length, self.h))?,
        };
        lib(p.validate())?;
        Ok(p)
    }
}

/// Copy the last error message of this thread, NUL-terminated and truncated
/// to `len` bytes. Writes the full message length (without NUL) to `needed`
/// when it is non-null.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn fde_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> FdeStatus {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map(|s| s.as_bytes()).unwrap_or(b"");
        if !needed.is_null() {
            *needed = bytes.len();
        }
        if len == 0 {
            return FdeStatus::Ok;
        }
        if buf.is_null() {
            return FdeStatus::NullPointer;
        }
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        FdeStatus::Ok
    })
}

/// `alpha(s) = |s|^{q-2} s`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_alpha(q: f64, s: f64, out: *mut f64) -> FdeStatus {
    guard(|| write(out, law(q)?.alpha(s), "out"))
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_alpha_inverse(q: f64, r: f64, out: *mut f64) -> FdeStatus {
    guard(|| write(out, law(q)?.alpha_inverse(r), "out"))
}

/// `eta(s) = s - mu alpha(s)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_eta(q: f64, mu: f64, s: f64, out: *mut f64) -> FdeStatus {
    guard(|| write(out, law(q)?.eta(s, mu), "out"))
}

/// Inverse of `zeta(u) = alpha^{-1}(u) - mu u`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_zeta_inverse(q: f64, mu: f64, v: f64, out: *mut f64) -> FdeStatus {
    guard(|| write(out, lib(law(q)?.zeta_inverse(v, mu))?, "out"))
}

/// Solve the normalized Lane-Emden problem on `intervals` cells per axis.
///
/// # Safety
/// `out` must be valid for writes. On success `*out` owns a profile that
/// must be released with [`fde_profile_free`].
#[no_mangle]
pub unsafe extern "C" fn fde_profile_solve(
    dim: u32,
    length: f64,
    intervals: usize,
    q: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut FdeProfile,
) -> FdeStatus {
    guard(|| {
        non_null(out, "out")?;
        let g = lib(Grid::with_intervals(dim as usize, length, intervals))?;
        let inner = lib(stationary::solve_lane_emden(&g, &law(q)?, tol, max_iter))?;
        *out = Box::into_raw(Box::new(FdeProfile { inner }));
        Ok(())
    })
}

/// # Safety
/// `profile` must come from [`fde_profile_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fde_profile_free(profile: *mut FdeProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// # Safety
/// `profile` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_profile_t_star(profile: *const FdeProfile, out: *mut f64) -> FdeStatus {
    guard(|| write(out, handle(profile, "profile")?.inner.t_star(), "out"))
}

/// Energy `c` of the profile.
///
/// # Safety
/// `profile` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_profile_c(profile: *const FdeProfile, out: *mut f64) -> FdeStatus {
    guard(|| write(out, handle(profile, "profile")?.inner.c, "out"))
}

/// Number of grid nodes of the profile.
///
/// # Safety
/// `profile` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_profile_len(profile: *const FdeProfile, out: *mut usize) -> FdeStatus {
    guard(|| write(out, handle(profile, "profile")?.inner.z0.len(), "out"))
}

/// Copy the nodal values of the profile (x fastest) into `buf`.
///
/// # Safety
/// `profile` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fde_profile_values(profile: *const FdeProfile, buf: *mut f64, len: usize) -> FdeStatus {
    guard(|| copy_out(handle(profile, "profile")?.inner.z0.as_slice(), buf, len))
}

/// Compatible initial data `(u0, v0)` on the run grid of `config`, from a
/// profile whose grid refines it.
///
/// # Safety
/// `profile` and `config` must be valid; `u0` and `v0` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fde_profile_initial_data(
    profile: *const FdeProfile,
    config: *const FdeRunConfig,
    u0: *mut f64,
    v0: *mut f64,
    len: usize,
) -> FdeStatus {
    guard(|| {
        let p = &handle(profile, "profile")?.inner;
        let params = handle(config, "config")?.params()?;
        let exact = lib(p.exact_solution(&params.grid))?;
        let (u, v) = lib(stationary::initial_uv(&exact.z0, params.mu, &params.law))?;
        copy_out(u.as_slice(), u0, len)?;
        copy_out(v.as_slice(), v0, len)
    })
}

/// Start a coupled run from `(u0, v0)` with default Newton settings.
///
/// # Safety
/// `config` must be valid, `u0` and `v0` valid for `len` reads and `out`
/// valid for writes. Release the handle with [`fde_simulation_free`].
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_new(
    config: *const FdeRunConfig,
    u0: *const f64,
    v0: *const f64,
    len: usize,
    out: *mut *mut FdeSimulation,
) -> FdeStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = handle(config, "config")?.params()?;
        let n = params.grid.len();
        let u = read_field(u0, len, n, "u0")?;
        let v = read_field(v0, len, n, "v0")?;
        let stepper = lib(Stepper::new(params, NewtonSettings::default()))?;
        *out = Box::into_raw(Box::new(FdeSimulation {
            stepper,
            state: State::new(u, v),
        }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`fde_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_free(sim: *mut FdeSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advance one step. Returns `Finished` once `t_final` is reached; the
/// Newton iteration count goes to `iterations` when it is non-null.
///
/// # Safety
/// `sim` must be a live handle; `iterations` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_step(sim: *mut FdeSimulation, iterations: *mut usize) -> FdeStatus {
    guard(|| {
        let sim = handle_mut(sim, "sim")?;
        if sim.state.n >= sim.stepper.params().time.n_steps() {
            return Err(fail(FdeStatus::Finished, "the run has reached t_final"));
        }
        let (next, report) = lib(sim.stepper.step(&sim.state))?;
        sim.state = next;
        if !iterations.is_null() {
            *iterations = report.iterations;
        }
        Ok(())
    })
}

/// Index of the current time level.
///
/// # Safety
/// `sim` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_step_index(sim: *const FdeSimulation, out: *mut usize) -> FdeStatus {
    guard(|| write(out, handle(sim, "sim")?.state.n, "out"))
}

/// # Safety
/// `sim` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_time(sim: *const FdeSimulation, out: *mut f64) -> FdeStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        write(out, sim.stepper.params().time.time(sim.state.n), "out")
    })
}

/// Number of grid nodes.
///
/// # Safety
/// `sim` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_len(sim: *const FdeSimulation, out: *mut usize) -> FdeStatus {
    guard(|| write(out, handle(sim, "sim")?.state.u.len(), "out"))
}

/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_u(sim: *const FdeSimulation, buf: *mut f64, len: usize) -> FdeStatus {
    guard(|| copy_out(handle(sim, "sim")?.state.u.as_slice(), buf, len))
}

/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_v(sim: *const FdeSimulation, buf: *mut f64, len: usize) -> FdeStatus {
    guard(|| copy_out(handle(sim, "sim")?.state.v.as_slice(), buf, len))
}

/// `z = mu u + v`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_z(sim: *const FdeSimulation, buf: *mut f64, len: usize) -> FdeStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        copy_out(sim.state.z(sim.stepper.params().mu).as_slice(), buf, len)
    })
}

/// Discrete `l^q` norm of `z`.
///
/// # Safety
/// `sim` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fde_simulation_lq_norm(sim: *const FdeSimulation, out: *mut f64) -> FdeStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        let p = sim.stepper.params();
        let norm = lib(grid::lq_norm(&sim.state.z(p.mu), &p.grid, p.law.q()))?;
        write(out, norm, "out")
    })
}
