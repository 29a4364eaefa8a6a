//! C ABI over the `wellpose` toolkit.
//!
//! Objects are opaque handles created by `wp_*_create`/`wp_*_parse` style
//! functions and released by the matching `wp_*_free`. Every fallible call
//! returns a [`WpStatus`]; on failure the message is available from
//! [`wp_last_error_message`] on the same thread. Panics never cross the
//! boundary and are reported as [`WpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wellpose::admissibility::{self, InitialDataSpec, Verdict};
use wellpose::bench;
use wellpose::config::{emit_config, parse_config, RunConfig};
use wellpose::fields::ScalarField2D;
use wellpose::reversal::{solve_decomposition, ReversedPoiseuilleProblem};
use wellpose::solver::{self, FluidParams, Integrator, SimState, Trajectory};
use wellpose::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Domain = 4,
    Numeric = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpVerdict {
    Admissible = 0,
    Inadmissible = 1,
    Inconclusive = 2,
}

/// Parsed run configuration.
pub struct WpConfig(RunConfig);

/// Simulation state with its forcing and integrator buffers.
pub struct WpState {
    state: SimState,
    params: FluidParams,
    integ: Integrator,
}

/// Recorded forward run.
pub struct WpTrajectory(Trajectory);

/// One diagnostic sample of a trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WpSample {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub kinetic_energy: f64,
    pub max_abs_divergence: f64,
    pub max_abs_eps_rho: f64,
    /// NaN when the run had no reference field.
    pub l2_distance: f64,
    pub total_mass: f64,
    pub diverged: bool,
}

/// Classification of one initial-data point.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WpPointResult {
    pub verdict: WpVerdict,
    pub final_l2: f64,
    pub energy_ratio: f64,
    pub diverged: bool,
    pub little_o_pass: bool,
    pub t_reached: f64,
    pub steps: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(WpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => WpStatus::Parse,
            Error::Constraint { .. } => WpStatus::InvalidArgument,
            Error::Domain(_) | Error::GridMismatch(_) | Error::MissingSnapshot(_) => WpStatus::Domain,
            Error::NonFinite(_) => WpStatus::Numeric,
            Error::Io(_) => WpStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(WpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("panic: {msg}"));
            WpStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(WpStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    nonnull(p, name)?;
    Ok(&*p)
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Fail> {
    nonnull(out, name)?;
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn wp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_config_default(out: *mut *mut WpConfig) -> WpStatus {
    guard(|| write(out, boxed(WpConfig(RunConfig::default())), "out"))
}

/// Parses `section.key=value` configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_config_parse(text: *const c_char, out: *mut *mut WpConfig) -> WpStatus {
    guard(|| {
        nonnull(text, "text")?;
        nonnull(out, "out")?;
        let s = CStr::from_ptr(text).to_str().map_err(|e| Fail(WpStatus::Parse, format!("text is not UTF-8: {e}")))?;
        let cfg = parse_config(s)?;
        write(out, boxed(WpConfig(cfg)), "out")
    })
}

/// Writes the canonical text of `cfg` into `buf` (NUL-terminated, truncated
/// to `cap`). `needed` receives the full length including the NUL; pass a
/// null `buf` to query it.
///
/// # Safety
/// `cfg` must come from this library; `buf` must hold `cap` bytes when
/// non-null; `needed` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_config_emit(cfg: *const WpConfig, buf: *mut c_char, cap: usize, needed: *mut usize) -> WpStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        let text = emit_config(&cfg.0);
        write(needed, text.len() + 1, "needed")?;
        if !buf.is_null() && cap > 0 {
            let n = text.len().min(cap - 1);
            ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn wp_config_free(cfg: *mut WpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Steady channel velocity `-px/(2μ) y(h−y)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_poiseuille_profile(y: f64, mu: f64, px: f64, h: f64, out: *mut f64) -> WpStatus {
    guard(|| write(out, bench::poiseuille_profile(y, mu, px, h)?, "out"))
}

/// Steady residual max-norm of the configured benchmark on the configured
/// grid, and whether it meets `run.tol_residual`.
///
/// # Safety
/// `cfg` must come from this library; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_bench_residual(cfg: *const WpConfig, max_norm: *mut f64, passed: *mut bool) -> WpStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        nonnull(max_norm, "max_norm")?;
        nonnull(passed, "passed")?;
        let grid = c.grid()?;
        let b = c.benchmark()?;
        b.check_grid(&grid)?;
        let vel = b.velocity_field(grid, c.fluid.mu, 1.0);
        let rho = ScalarField2D::constant(grid, c.fluid.rho0);
        let p = ScalarField2D::from_fn(grid, |x, _| c.px * x);
        let r = bench::steady_residual(&vel, &rho, &p, &c.fluid, c.fluid.f, c.run.tol_residual);
        *max_norm = r.max_norm;
        *passed = r.passed;
        Ok(())
    })
}

fn initial(c: &RunConfig) -> Result<(SimState, FluidParams, Option<wellpose::fields::VectorField2D>), Fail> {
    let grid = c.grid()?;
    let b = c.benchmark()?;
    let spec = InitialDataSpec::new(c.init.alpha, c.init.eps, c.init.k)?;
    let state = admissibility::generate_initial(&spec, &b, grid, &c.fluid)?;
    let params = spec.forced_params(&b, &c.fluid);
    Ok((state, params, Some(b.velocity_field(grid, c.fluid.mu, spec.alpha))))
}

/// State built from the configuration's `init.*` data on its grid.
///
/// # Safety
/// `cfg` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_state_create(cfg: *const WpConfig, out: *mut *mut WpState) -> WpStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        nonnull(out, "out")?;
        let (state, params, _) = initial(c)?;
        let integ = Integrator::new(*state.grid()).with_blowup_ratio(c.run.blowup_ratio);
        write(out, boxed(WpState { state, params, integ }), "out")
    })
}

/// Advances `n_steps` RK4 steps, choosing each step from the stability
/// limit scaled by `cfl`. Stops early, still returning `Ok`, once the state
/// has diverged.
///
/// # Safety
/// `state` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn wp_state_step(state: *mut WpState, n_steps: u64, cfl: f64) -> WpStatus {
    guard(|| {
        nonnull(state, "state")?;
        let s = &mut *state;
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(invalid(format!("cfl must be in (0, 1], got {cfl}")));
        }
        for _ in 0..n_steps {
            if s.state.diverged {
                break;
            }
            let dt = solver::stable_dt(&s.state, &s.params, cfl)?;
            s.integ.step(&mut s.state, &s.params, dt);
        }
        Ok(())
    })
}

/// Grid size of the state.
///
/// # Safety
/// `state` must come from this library; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_state_grid(state: *const WpState, nx: *mut usize, ny: *mut usize) -> WpStatus {
    guard(|| {
        let g = *deref(state, "state")?.state.grid();
        write(nx, g.nx(), "nx")?;
        write(ny, g.ny(), "ny")
    })
}

/// Copies both velocity components, row-major with `x` fastest
/// (index `j*nx + i`), into buffers of exactly `len = nx*ny` values.
///
/// # Safety
/// `state` must come from this library; `ux` and `uy` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn wp_state_copy_velocity(state: *const WpState, ux: *mut f64, uy: *mut f64, len: usize) -> WpStatus {
    guard(|| {
        let s = &deref(state, "state")?.state;
        nonnull(ux, "ux")?;
        nonnull(uy, "uy")?;
        let n = s.grid().len();
        if len != n {
            return Err(invalid(format!("buffer length {len} does not match grid size {n}")));
        }
        ptr::copy_nonoverlapping(s.vel.ux.data().as_ptr(), ux, n);
        ptr::copy_nonoverlapping(s.vel.uy.data().as_ptr(), uy, n);
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_state_time(state: *const WpState, out: *mut f64) -> WpStatus {
    guard(|| write(out, deref(state, "state")?.state.t, "out"))
}

/// # Safety
/// `state` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_state_diverged(state: *const WpState, out: *mut bool) -> WpStatus {
    guard(|| write(out, deref(state, "state")?.state.diverged, "out"))
}

/// # Safety
/// `state` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_state_kinetic_energy(state: *const WpState, out: *mut f64) -> WpStatus {
    guard(|| write(out, deref(state, "state")?.state.kinetic_energy(), "out"))
}

/// # Safety
/// `state` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_state_total_mass(state: *const WpState, out: *mut f64) -> WpStatus {
    guard(|| write(out, deref(state, "state")?.state.total_mass(), "out"))
}

/// # Safety
/// `state` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn wp_state_free(state: *mut WpState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Forward run of the configuration's `init.*` data to `run.t_end`, with
/// the scaled steady profile as reference.
///
/// # Safety
/// `cfg` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_run_forward(cfg: *const WpConfig, out: *mut *mut WpTrajectory) -> WpStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        nonnull(out, "out")?;
        let (state, params, reference) = initial(c)?;
        let mut opts = c.run_options();
        if let Some(r) = reference {
            opts = opts.with_reference(r);
        }
        if c.run.freeze_dt {
            opts = opts.with_fixed_dt(solver::stable_dt(&state, &params, c.run.cfl)?);
        }
        let traj = solver::run_forward(&state, &params, &opts)?;
        write(out, boxed(WpTrajectory(traj)), "out")
    })
}

/// Number of recorded samples.
///
/// # Safety
/// `traj` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_trajectory_len(traj: *const WpTrajectory, out: *mut usize) -> WpStatus {
    guard(|| write(out, deref(traj, "traj")?.0.samples.len(), "out"))
}

/// # Safety
/// `traj` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_trajectory_sample(traj: *const WpTrajectory, k: usize, out: *mut WpSample) -> WpStatus {
    guard(|| {
        let t = &deref(traj, "traj")?.0;
        let s = t
            .samples
            .get(k)
            .ok_or_else(|| Fail(WpStatus::Domain, format!("sample {k} out of range (len {})", t.samples.len())))?;
        let d = &s.diagnostics;
        let sample = WpSample {
            step: s.step as u64,
            t: s.t,
            dt: s.dt,
            kinetic_energy: d.kinetic_energy,
            max_abs_divergence: d.max_abs_divergence,
            max_abs_eps_rho: d.max_abs_eps_rho,
            l2_distance: d.l2_distance_to_reference.unwrap_or(f64::NAN),
            total_mass: d.total_mass,
            diverged: s.diverged,
        };
        write(out, sample, "out")
    })
}

/// # Safety
/// `traj` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_trajectory_diverged(traj: *const WpTrajectory, out: *mut bool) -> WpStatus {
    guard(|| write(out, deref(traj, "traj")?.0.diverged, "out"))
}

/// # Safety
/// `traj` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn wp_trajectory_free(traj: *mut WpTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Reversed-time decomposition at height `y` of a channel of width `h`:
/// integrates from `j(t0) = j0` to `t_end` in `steps` RK4 steps and returns
/// the extrapolated numeric limit and the closed-form limit.
///
/// # Safety
/// Outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_decomposition_limit(
    y: f64,
    mu: f64,
    h: f64,
    j0: f64,
    t0: f64,
    t_end: f64,
    steps: usize,
    numeric: *mut f64,
    closed_form: *mut f64,
) -> WpStatus {
    guard(|| {
        nonnull(numeric, "numeric")?;
        nonnull(closed_form, "closed_form")?;
        let prob = ReversedPoiseuilleProblem::new(mu, h, -1.0, vec![y])?;
        let sol = solve_decomposition(&prob, j0, t0, t_end, steps)?;
        if let Some((_, msg)) = sol.failures.first() {
            return Err(Fail(WpStatus::Numeric, msg.clone()));
        }
        *numeric = sol.j_inf_numeric[0];
        *closed_form = sol.j_inf_closed_form[0];
        Ok(())
    })
}

/// Classifies the initial data `(alpha, eps, k)` with the configuration's
/// grid, fluid and `run.*` options.
///
/// # Safety
/// `cfg` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_classify(cfg: *const WpConfig, alpha: f64, eps: f64, k: u32, out: *mut WpPointResult) -> WpStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        nonnull(out, "out")?;
        let spec = InitialDataSpec::new(alpha, eps, k)?;
        let r = admissibility::classify(&spec, &c.benchmark()?, c.grid()?, &c.fluid, &c.classify_options())?;
        let verdict = match r.verdict {
            Verdict::Admissible => WpVerdict::Admissible,
            Verdict::Inadmissible => WpVerdict::Inadmissible,
            Verdict::Inconclusive => WpVerdict::Inconclusive,
        };
        let result = WpPointResult {
            verdict,
            final_l2: r.final_l2,
            energy_ratio: r.energy_ratio,
            diverged: r.diverged,
            little_o_pass: r.little_o_pass,
            t_reached: r.t_reached,
            steps: r.steps as u64,
        };
        write(out, result, "out")
    })
}
