//! C interface: plain-data parameters and states, opaque handles for
//! trajectories and Fokker-Planck solvers, status codes, and a per-thread
//! last-error message.
//!
//! Every function catches panics and reports them as `LW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lattice_walk::config::RunConfig;
use lattice_walk::dynamics::{EventSink, Integrator, Trajectory};
use lattice_walk::ensemble::{derive_stream, write_ensemble, TrajectoryRng};
use lattice_walk::fokker_planck::{point_density, Boundary, Coefficients, FpeGrid, FpeSolver};
use lattice_walk::{observables, AtomState, Error, LatticeParams, SpontaneousEvent, StateRecord};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    InsufficientData = 4,
    Aborted = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Normalized lattice parameters; SI conversion constants take their defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LwParams {
    pub delta: f64,
    pub gamma: f64,
    pub omega_r: f64,
    pub diffusion_delta_divisor: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LwState {
    pub x: f64,
    pub p: f64,
    pub u: f64,
    pub v: f64,
    pub z: f64,
    pub tau: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LwEnsembleSummary {
    pub trajectories: u64,
    pub se_events: u64,
    pub sign_changes: u64,
    pub flights: u64,
    pub aborted: u64,
}

impl From<LwParams> for LatticeParams {
    fn from(p: LwParams) -> Self {
        LatticeParams {
            delta: p.delta,
            gamma: p.gamma,
            omega_r: p.omega_r,
            diffusion_delta_divisor: p.diffusion_delta_divisor,
            ..LatticeParams::default()
        }
    }
}

impl From<LwState> for AtomState {
    fn from(s: LwState) -> Self {
        AtomState {
            x: s.x,
            p: s.p,
            u: s.u,
            v: s.v,
            z: s.z,
            tau: s.tau,
        }
    }
}

impl From<AtomState> for LwState {
    fn from(s: AtomState) -> Self {
        LwState {
            x: s.x,
            p: s.p,
            u: s.u,
            v: s.v,
            z: s.z,
            tau: s.tau,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(e: &Error) -> LwStatus {
    match e {
        Error::Config { .. } => LwStatus::Config,
        Error::Contract(_) => LwStatus::InvalidArgument,
        Error::InsufficientData(_) => LwStatus::InsufficientData,
        Error::Aborted { .. } => LwStatus::Aborted,
        Error::Numerical(_) => LwStatus::Numerical,
        Error::Parse { .. } | Error::Io { .. } => LwStatus::Io,
    }
}

enum Failure {
    Status(LwStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(LwStatus::NullPointer, format!("`{what}` is NULL"))
}

/// Run `body`, translating errors and panics into a status plus last-error text.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> LwStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => LwStatus::Ok,
        Ok(Err(Failure::Status(status, message))) => {
            set_error(message);
            status
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            LwStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure::Status(LwStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Message for the most recent failure on this thread, or NULL.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default parameters (detuning -0.001).
#[no_mangle]
pub extern "C" fn lw_params_default() -> LwParams {
    let p = LatticeParams::default();
    LwParams {
        delta: p.delta,
        gamma: p.gamma,
        omega_r: p.omega_r,
        diffusion_delta_divisor: p.diffusion_delta_divisor,
    }
}

/// Total energy of `state`.
///
/// # Safety
/// `state` and `out_energy` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lw_energy(params: LwParams, state: *const LwState, out_energy: *mut f64) -> LwStatus {
    guard(|| {
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        *out(out_energy, "out_energy")? = observables::energy(&(*s).into(), &params.into());
        Ok(())
    })
}

#[derive(Default)]
struct Recorder {
    sign_changes: Vec<f64>,
    jumps: u64,
}

impl EventSink for Recorder {
    fn on_jump(&mut self, _event: &SpontaneousEvent) {
        self.jumps += 1;
    }
    fn on_sign_change(&mut self, record: &StateRecord) {
        self.sign_changes.push(record.state.tau);
    }
}

/// A seeded trajectory together with its random stream and recorded events.
pub struct LwTrajectory {
    inner: Trajectory,
    rng: TrajectoryRng,
    events: Recorder,
}

/// Create a trajectory. Equal `(seed, stream)` pairs reproduce the same run.
///
/// # Safety
/// `initial` must be valid; `out_handle` must be writable. Release the handle
/// with `lw_trajectory_free()`.
#[no_mangle]
pub unsafe extern "C" fn lw_trajectory_new(
    params: LwParams,
    initial: *const LwState,
    dtau: f64,
    seed: u64,
    stream: u64,
    out_handle: *mut *mut LwTrajectory,
) -> LwStatus {
    guard(|| {
        let initial = *initial.as_ref().ok_or_else(|| null("initial"))?;
        let slot = out(out_handle, "out_handle")?;
        let params: LatticeParams = params.into();
        params.validate()?;
        let integrator = Integrator::new(dtau)?;
        let handle = LwTrajectory {
            inner: Trajectory::new(params, integrator, initial.into()),
            rng: derive_stream(seed, stream),
            events: Recorder::default(),
        };
        *slot = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Advance to `tau_end` and write the final state.
///
/// # Safety
/// `handle` must come from `lw_trajectory_new()`; `out_state` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn lw_trajectory_evolve(
    handle: *mut LwTrajectory,
    tau_end: f64,
    out_state: *mut LwState,
) -> LwStatus {
    guard(|| {
        let t = out(handle, "handle")?;
        let state = t.inner.evolve_to(tau_end, &mut t.rng, &mut t.events)?;
        if let Some(o) = out_state.as_mut() {
            *o = state.into();
        }
        Ok(())
    })
}

/// Number of spontaneous emissions so far.
///
/// # Safety
/// `handle` must come from `lw_trajectory_new()`.
#[no_mangle]
pub unsafe extern "C" fn lw_trajectory_jump_count(handle: *const LwTrajectory, out_count: *mut u64) -> LwStatus {
    guard(|| {
        let t = handle.as_ref().ok_or_else(|| null("handle"))?;
        *out(out_count, "out_count")? = t.events.jumps;
        Ok(())
    })
}

/// Copy up to `capacity` momentum sign-change times into `buffer` and store
/// the total number recorded in `out_len`. Pass a NULL buffer to query the length.
///
/// # Safety
/// `buffer` must hold `capacity` doubles when non-NULL.
#[no_mangle]
pub unsafe extern "C" fn lw_trajectory_sign_changes(
    handle: *const LwTrajectory,
    buffer: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> LwStatus {
    guard(|| {
        let t = handle.as_ref().ok_or_else(|| null("handle"))?;
        copy_out(&t.events.sign_changes, buffer, capacity, out_len)
    })
}

/// # Safety
/// `handle` must come from `lw_trajectory_new()` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn lw_trajectory_free(handle: *mut LwTrajectory) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn copy_out(data: &[f64], buffer: *mut f64, capacity: usize, out_len: *mut usize) -> Result<(), Failure> {
    *out(out_len, "out_len")? = data.len();
    if !buffer.is_null() {
        let n = data.len().min(capacity);
        std::ptr::copy_nonoverlapping(data.as_ptr(), buffer, n);
    }
    Ok(())
}

/// Grid for `lw_fpe_new_constant()`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LwFpeGrid {
    pub h_min: f64,
    pub h_max: f64,
    pub n_cells: usize,
    pub dtau: f64,
    pub left_absorbing: bool,
    pub right_absorbing: bool,
}

/// Crank-Nicolson solver for the energy-space Fokker-Planck equation.
pub struct LwFpe {
    inner: FpeSolver,
}

fn boundary(absorbing: bool) -> Boundary {
    if absorbing {
        Boundary::Absorbing
    } else {
        Boundary::Reflecting
    }
}

/// Solver with constant drift `c` and diffusion `d`, started from a point mass at `h0`.
///
/// # Safety
/// `out_handle` must be writable. Release with `lw_fpe_free()`.
#[no_mangle]
pub unsafe extern "C" fn lw_fpe_new_constant(
    grid: LwFpeGrid,
    c: f64,
    d: f64,
    h0: f64,
    out_handle: *mut *mut LwFpe,
) -> LwStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        let grid = FpeGrid {
            h_min: grid.h_min,
            h_max: grid.h_max,
            n_cells: grid.n_cells,
            dtau: grid.dtau,
            left: boundary(grid.left_absorbing),
            right: boundary(grid.right_absorbing),
            ..FpeGrid::default()
        };
        let initial = point_density(&grid, h0)?;
        let inner = FpeSolver::new(grid, &Coefficients::Constant { c, d }, initial)?;
        *slot = Box::into_raw(Box::new(LwFpe { inner }));
        Ok(())
    })
}

/// Take `steps` time steps.
///
/// # Safety
/// `handle` must come from `lw_fpe_new_constant()`.
#[no_mangle]
pub unsafe extern "C" fn lw_fpe_step(handle: *mut LwFpe, steps: u64) -> LwStatus {
    guard(|| {
        let f = out(handle, "handle")?;
        for _ in 0..steps {
            f.inner.step()?;
        }
        Ok(())
    })
}

/// Current time and absorbed mass at the lower and upper walls. Any output may be NULL.
///
/// # Safety
/// `handle` must come from `lw_fpe_new_constant()`.
#[no_mangle]
pub unsafe extern "C" fn lw_fpe_status(
    handle: *const LwFpe,
    out_tau: *mut f64,
    out_absorbed_low: *mut f64,
    out_absorbed_high: *mut f64,
) -> LwStatus {
    guard(|| {
        let f = handle.as_ref().ok_or_else(|| null("handle"))?;
        let (lo, hi) = f.inner.absorbed();
        for (ptr, value) in [(out_tau, f.inner.tau()), (out_absorbed_low, lo), (out_absorbed_high, hi)] {
            if let Some(o) = ptr.as_mut() {
                *o = value;
            }
        }
        Ok(())
    })
}

/// Copy the cell densities; same buffer protocol as `lw_trajectory_sign_changes()`.
///
/// # Safety
/// `buffer` must hold `capacity` doubles when non-NULL.
#[no_mangle]
pub unsafe extern "C" fn lw_fpe_density(
    handle: *const LwFpe,
    buffer: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> LwStatus {
    guard(|| {
        let f = handle.as_ref().ok_or_else(|| null("handle"))?;
        copy_out(f.inner.density(), buffer, capacity, out_len)
    })
}

/// # Safety
/// `handle` must come from `lw_fpe_new_constant()` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn lw_fpe_free(handle: *mut LwFpe) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Run an ensemble from a TOML configuration (NULL for defaults) and write
/// the event files and manifest into `out_dir`. `workers == 0` uses every core.
///
/// # Safety
/// `config_path` may be NULL; `out_dir` must be a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn lw_simulate(
    config_path: *const c_char,
    out_dir: *const c_char,
    workers: usize,
    out_summary: *mut LwEnsembleSummary,
) -> LwStatus {
    guard(|| {
        let config_path = if config_path.is_null() {
            None
        } else {
            Some(path_arg(config_path, "config_path")?)
        };
        let dir = path_arg(out_dir, "out_dir")?;
        let config = RunConfig::load(config_path, &[])?;
        config.validate()?;
        let manifest = write_ensemble(&config.ensemble_config(), dir, workers)?;
        if let Some(o) = out_summary.as_mut() {
            let s = manifest.summary;
            *o = LwEnsembleSummary {
                trajectories: s.trajectories,
                se_events: s.se_events,
                sign_changes: s.sign_changes,
                flights: s.flights,
                aborted: s.aborted,
            };
        }
        Ok(())
    })
}
