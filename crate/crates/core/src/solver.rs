//! Explicit integration of the 2D weakly-compressible Navier–Stokes system
//! with constant viscosities.
//!
//! Momentum and mass are advanced in primitive form,
//!
//! ```text
//! ∂u/∂t = [−∇p + μ(∇²u + ∇(∇·u)) + λ∇(∇·u)]/ρ + f − (u·∇)u
//! ∂ρ/∂t = −∇·(ρu)
//! ```
//!
//! closed by the barotropic law `p = cs²(ρ − ρ₀)`. A channel pressure gradient
//! is carried by the body force `f` so that `p` stays periodic in `x`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fields::{self, fmt17, Grid2D, ScalarField2D, VectorField2D};

/// Kinetic energy growth factor, relative to the state's energy scale, that
/// flags a run as diverged.
pub const DEFAULT_BLOWUP_RATIO: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    /// Dynamic viscosity.
    pub mu: f64,
    /// Bulk-viscosity coefficient.
    pub lambda: f64,
    /// Reference density.
    pub rho0: f64,
    /// Artificial sound speed of the pressure closure.
    pub cs: f64,
    /// Body force per unit mass.
    pub f: [f64; 2],
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            lambda: 0.0,
            rho0: 1.0,
            cs: 2.5,
            f: [0.0, 0.0],
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::constraint("fluid.mu", format!("must be > 0, got {}", self.mu)));
        }
        if !(self.rho0.is_finite() && self.rho0 > 0.0) {
            return Err(Error::constraint("fluid.rho0", format!("must be > 0, got {}", self.rho0)));
        }
        if !(self.cs.is_finite() && self.cs > 0.0) {
            return Err(Error::constraint("fluid.cs", format!("must be > 0, got {}", self.cs)));
        }
        let floor = -2.0 / 3.0 * self.mu;
        if !(self.lambda.is_finite() && self.lambda >= floor) {
            return Err(Error::constraint(
                "fluid.lambda",
                format!("must be >= -(2/3)*mu = {floor}, got {}", self.lambda),
            ));
        }
        if !self.f.iter().all(|v| v.is_finite()) {
            return Err(Error::constraint("fluid.f", "must be finite"));
        }
        Ok(())
    }

    /// `ρ₀ U h / μ`.
    pub fn reynolds(&self, velocity: f64, length: f64) -> f64 {
        self.rho0 * velocity * length / self.mu
    }

    pub fn with_force(mut self, f: [f64; 2]) -> Self {
        self.f = f;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub vel: VectorField2D,
    pub rho: ScalarField2D,
    pub t: f64,
    pub diverged: bool,
    /// Energy against which blow-up is measured. Zero disables the energy
    /// test and leaves only the finiteness and positivity checks.
    pub energy_scale: f64,
}

impl SimState {
    /// Builds a state, imposing no-slip on the wall rows. The blow-up energy
    /// scale is the initial kinetic energy.
    pub fn new(mut vel: VectorField2D, rho: ScalarField2D, t: f64) -> Result<Self> {
        if vel.grid() != rho.grid() {
            return Err(Error::GridMismatch("velocity and density grids differ".into()));
        }
        if !rho.data().iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::domain("density must be finite and positive"));
        }
        if !vel.all_finite() {
            return Err(Error::NonFinite("initial velocity".into()));
        }
        vel.impose_no_slip();
        let energy_scale = kinetic_energy(&vel, &rho);
        Ok(Self {
            vel,
            rho,
            t,
            diverged: false,
            energy_scale,
        })
    }

    pub fn rest(grid: Grid2D, params: &FluidParams) -> Self {
        Self::new(VectorField2D::zeros(grid), ScalarField2D::constant(grid, params.rho0), 0.0)
            .expect("rest state is valid")
    }

    pub fn grid(&self) -> &Grid2D {
        self.rho.grid()
    }

    pub fn with_energy_scale(mut self, scale: f64) -> Self {
        self.energy_scale = scale;
        self
    }

    pub fn kinetic_energy(&self) -> f64 {
        kinetic_energy(&self.vel, &self.rho)
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.integral()
    }
}

/// `½∫ρ|u|²` per unit depth.
pub fn kinetic_energy(vel: &VectorField2D, rho: &ScalarField2D) -> f64 {
    energy_and_health(vel, rho).0
}

/// Kinetic energy, and whether every value is finite with positive density.
fn energy_and_health(vel: &VectorField2D, rho: &ScalarField2D) -> (f64, bool) {
    let g = rho.grid();
    let nx = g.nx();
    let mut healthy = true;
    let mut total = 0.0;
    for (j, ((u, v), r)) in vel
        .ux
        .data()
        .chunks_exact(nx)
        .zip(vel.uy.data().chunks_exact(nx))
        .zip(rho.data().chunks_exact(nx))
        .enumerate()
    {
        let mut row = 0.0;
        for i in 0..nx {
            row += r[i] * (u[i] * u[i] + v[i] * v[i]);
            healthy &= r[i] > 0.0 && u[i].is_finite() && v[i].is_finite() && r[i].is_finite();
        }
        total += g.row_weight(j) * row;
    }
    (0.5 * total * g.dx() * g.dy(), healthy)
}

/// Linear barotropic closure `p = cs²(ρ − ρ₀)`.
pub fn pressure_of(rho: &ScalarField2D, params: &FluidParams) -> ScalarField2D {
    let c2 = params.cs * params.cs;
    rho.map(|r| c2 * (r - params.rho0))
}

/// Relative density fluctuation `(ρ − ρ₀)/ρ₀`.
pub fn eps_rho_of(rho: &ScalarField2D, params: &FluidParams) -> ScalarField2D {
    rho.map(|r| (r - params.rho0) / params.rho0)
}

/// Time derivatives `(∂u/∂t, ∂ρ/∂t)` of a state.
pub fn rhs(state: &SimState, params: &FluidParams) -> (VectorField2D, ScalarField2D) {
    let g = *state.grid();
    let mut du = vec![0.0; g.len()];
    let mut dv = vec![0.0; g.len()];
    let mut dr = vec![0.0; g.len()];
    let mut div = vec![0.0; g.len()];
    rhs_kernel(
        &g,
        params,
        state.vel.ux.data(),
        state.vel.uy.data(),
        state.rho.data(),
        &mut du,
        &mut dv,
        &mut dr,
        &mut div,
    );
    let wrap = |d| ScalarField2D::from_vec(g, d).expect("sized from grid");
    (VectorField2D::new(wrap(du), wrap(dv)), wrap(dr))
}

/// Single-sweep evaluation of the right-hand side. Produces the same
/// discretisation as composing the operators in [`crate::fields`]; wall rows
/// of the momentum tendency are zero.
#[allow(clippy::too_many_arguments)]
fn rhs_kernel(
    g: &Grid2D,
    p: &FluidParams,
    u: &[f64],
    v: &[f64],
    r: &[f64],
    du: &mut [f64],
    dv: &mut [f64],
    dr: &mut [f64],
    div: &mut [f64],
) {
    let (nx, ny) = (g.nx(), g.ny());
    let hx = 0.5 / g.dx();
    let hy = 0.5 / g.dy();
    let wy = 1.0 / g.dy();
    let ix2 = 1.0 / (g.dx() * g.dx());
    let iy2 = 1.0 / (g.dy() * g.dy());
    let cs2 = p.cs * p.cs;
    let (mu, grad_div) = (p.mu, p.mu + p.lambda);
    let [fx, fy] = p.f;

    // ∇·u everywhere, one-sided in y on the walls
    for j in 0..ny {
        let row = j * nx;
        let uc = &u[row..row + nx];
        let out = &mut div[row..row + nx];
        let (a, b, c, sign) = if j == 0 {
            (row, row + nx, row + 2 * nx, -1.0)
        } else if j == ny - 1 {
            (row, row - nx, row - 2 * nx, 1.0)
        } else {
            (row + nx, row - nx, row - nx, 0.0)
        };
        let (va, vb, vc) = (&v[a..a + nx], &v[b..b + nx], &v[c..c + nx]);
        for i in 0..nx {
            let vy = if sign == 0.0 {
                (va[i] - vb[i]) * hy
            } else {
                sign * (3.0 * va[i] - 4.0 * vb[i] + vc[i]) * hy
            };
            let (e, w) = (if i + 1 == nx { 0 } else { i + 1 }, if i == 0 { nx - 1 } else { i - 1 });
            out[i] = (uc[e] - uc[w]) * hx + vy;
        }
    }

    for j in [0, ny - 1] {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let (e, w) = neighbours(row, i, nx);
            let flux_y = if j == 0 {
                (r[k + nx] * v[k + nx] - r[k] * v[k]) * wy
            } else {
                (r[k] * v[k] - r[k - nx] * v[k - nx]) * wy
            };
            du[k] = 0.0;
            dv[k] = 0.0;
            dr[k] = -((r[e] * u[e] - r[w] * u[w]) * hx + flux_y);
        }
    }

    let c = Coeffs { hx, hy, ix2, iy2, cs2, mu, grad_div, fx, fy };
    for j in 1..ny - 1 {
        let row = j * nx;
        let rows = |a| three_rows(a, row, nx);
        let ([us, uc, un], [vs, vc, vn], [rs, rc, rn], [ds, dc, dn]) = (rows(u), rows(v), rows(r), rows(div));
        let du = &mut du[row..row + nx];
        let dv = &mut dv[row..row + nx];
        let dr = &mut dr[row..row + nx];
        let cols = |i: usize| -> (usize, usize) {
            (if i + 1 == nx { 0 } else { i + 1 }, if i == 0 { nx - 1 } else { i - 1 })
        };
        for i in [0, nx - 1] {
            let (e, w) = cols(i);
            let out = c.node(
                [uc[i], uc[e], uc[w], un[i], us[i]],
                [vc[i], vc[e], vc[w], vn[i], vs[i]],
                [rc[i], rc[e], rc[w], rn[i], rs[i]],
                [dc[e], dc[w], dn[i], ds[i]],
            );
            (du[i], dv[i], dr[i]) = out;
        }
        for i in 1..nx - 1 {
            let out = c.node(
                [uc[i], uc[i + 1], uc[i - 1], un[i], us[i]],
                [vc[i], vc[i + 1], vc[i - 1], vn[i], vs[i]],
                [rc[i], rc[i + 1], rc[i - 1], rn[i], rs[i]],
                [dc[i + 1], dc[i - 1], dn[i], ds[i]],
            );
            (du[i], dv[i], dr[i]) = out;
        }
    }
}

#[inline(always)]
fn three_rows(a: &[f64], row: usize, nx: usize) -> [&[f64]; 3] {
    [&a[row - nx..row], &a[row..row + nx], &a[row + nx..row + 2 * nx]]
}

struct Coeffs {
    hx: f64,
    hy: f64,
    ix2: f64,
    iy2: f64,
    cs2: f64,
    mu: f64,
    grad_div: f64,
    fx: f64,
    fy: f64,
}

impl Coeffs {
    /// Interior tendency from the five-point neighbourhoods `[c, e, w, n, s]`
    /// of `u`, `v`, `ρ` and the four neighbours `[e, w, n, s]` of `∇·u`.
    #[inline(always)]
    fn node(&self, u: [f64; 5], v: [f64; 5], r: [f64; 5], div: [f64; 4]) -> (f64, f64, f64) {
        let [uk, ue, uw, un, us] = u;
        let [vk, ve, vw, vn, vs] = v;
        let [rk, re, rw, rn, rs] = r;
        let ux = (ue - uw) * self.hx;
        let uy = (un - us) * self.hy;
        let vx = (ve - vw) * self.hx;
        let vy = (vn - vs) * self.hy;
        let lap_u = (ue - 2.0 * uk + uw) * self.ix2 + (un - 2.0 * uk + us) * self.iy2;
        let lap_v = (ve - 2.0 * vk + vw) * self.ix2 + (vn - 2.0 * vk + vs) * self.iy2;
        let gdx = (div[0] - div[1]) * self.hx;
        let gdy = (div[2] - div[3]) * self.hy;
        let rx = (re - rw) * self.hx;
        let ry = (rn - rs) * self.hy;
        let inv_r = 1.0 / rk;
        let du = (-self.cs2 * rx + self.mu * lap_u + self.grad_div * gdx) * inv_r + self.fx - (uk * ux + vk * uy);
        let dv = (-self.cs2 * ry + self.mu * lap_v + self.grad_div * gdy) * inv_r + self.fy - (uk * vx + vk * vy);
        let dr = -((re * ue - rw * uw) * self.hx + (rn * vn - rs * vs) * self.hy);
        (du, dv, dr)
    }
}

#[inline(always)]
fn neighbours(row: usize, i: usize, nx: usize) -> (usize, usize) {
    let e = if i + 1 == nx { row } else { row + i + 1 };
    let w = if i == 0 { row + nx - 1 } else { row + i - 1 };
    (e, w)
}

/// Explicit step limit from the acoustic and viscous constraints.
pub fn stable_dt(state: &SimState, params: &FluidParams, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::constraint("run.cfl", format!("must lie in (0, 1], got {cfl}")));
    }
    let umax = state.vel.ux.max_abs();
    let vmax = state.vel.uy.max_abs();
    if !state.vel.all_finite() {
        return Err(Error::NonFinite("velocity in stable_dt".into()));
    }
    let g = state.grid();
    let h = g.dx().min(g.dy());
    let acoustic_x = g.dx() / (umax + params.cs);
    let acoustic_y = g.dy() / (vmax + params.cs);
    let viscous = params.rho0 * h * h / (4.0 * (2.0 * params.mu + params.lambda));
    Ok(cfl * acoustic_x.min(acoustic_y).min(viscous))
}

/// Classical four-stage Runge–Kutta stepper with reusable scratch storage.
#[derive(Debug, Clone)]
pub struct Integrator {
    grid: Grid2D,
    blowup_ratio: f64,
    stage: [Vec<f64>; 3],
    k: [Vec<f64>; 3],
    acc: [Vec<f64>; 3],
    div: Vec<f64>,
}

impl Integrator {
    pub fn new(grid: Grid2D) -> Self {
        let n = grid.len();
        let buf = || [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        Self {
            grid,
            blowup_ratio: DEFAULT_BLOWUP_RATIO,
            stage: buf(),
            k: buf(),
            acc: buf(),
            div: vec![0.0; n],
        }
    }

    pub fn with_blowup_ratio(mut self, ratio: f64) -> Self {
        self.blowup_ratio = ratio;
        self
    }

    /// Advances `state` by `dt`. Instability surfaces as `state.diverged`.
    pub fn step(&mut self, state: &mut SimState, params: &FluidParams, dt: f64) {
        assert_eq!(state.grid(), &self.grid, "integrator built for another grid");
        assert!(dt > 0.0, "time step must be positive");
        if state.diverged {
            return;
        }
        let g = self.grid;
        let nx = g.nx();
        let top = g.idx(0, g.ny() - 1);

        let Self { stage, k, acc, div, .. } = self;
        let [u0, v0, r0] = [state.vel.ux.data(), state.vel.uy.data(), state.rho.data()];

        // (stage weight for the next stage input, weight of k in the sum)
        let plan = [(0.5, 1.0), (0.5, 2.0), (1.0, 2.0), (0.0, 1.0)];
        for (s, &(next, weight)) in plan.iter().enumerate() {
            {
                let (su, sv, sr) = if s == 0 {
                    (u0, v0, r0)
                } else {
                    (&stage[0][..], &stage[1][..], &stage[2][..])
                };
                let [ku, kv, kr] = k;
                rhs_kernel(&g, params, su, sv, sr, ku, kv, kr, div);
            }
            for c in 0..3 {
                let a = &mut acc[c];
                let kc = &k[c];
                if s == 0 {
                    a.copy_from_slice(kc);
                } else {
                    for (x, y) in a.iter_mut().zip(kc) {
                        *x += weight * y;
                    }
                }
            }
            if s < 3 {
                let h = next * dt;
                for (c, base) in [u0, v0, r0].into_iter().enumerate() {
                    let st = &mut stage[c];
                    for ((x, b), y) in st.iter_mut().zip(base).zip(&k[c]) {
                        *x = b + h * y;
                    }
                }
                for st in stage.iter_mut().take(2) {
                    st[..nx].fill(0.0);
                    st[top..].fill(0.0);
                }
            }
        }

        let h = dt / 6.0;
        for (field, a) in [
            state.vel.ux.data_mut(),
            state.vel.uy.data_mut(),
            state.rho.data_mut(),
        ]
        .into_iter()
        .zip(acc.iter())
        {
            for (x, y) in field.iter_mut().zip(a) {
                *x += h * y;
            }
        }
        state.vel.impose_no_slip();
        state.t += dt;

        let (energy, healthy) = energy_and_health(&state.vel, &state.rho);
        let blown = state.energy_scale > 0.0 && energy > self.blowup_ratio * state.energy_scale;
        if !healthy || !energy.is_finite() || blown {
            state.diverged = true;
        }
    }
}

/// One RK4 step from `state`, returning the advanced state.
pub fn step(state: &SimState, params: &FluidParams, dt: f64) -> SimState {
    let mut next = state.clone();
    Integrator::new(*state.grid()).step(&mut next, params, dt);
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub kinetic_energy: f64,
    /// `sqrt(∫|u|² / area)`.
    pub rms_velocity: f64,
    pub max_abs_divergence: f64,
    pub max_abs_eps_rho: f64,
    /// Area-normalised L2 distance of the velocity to the attached reference.
    pub l2_distance_to_reference: Option<f64>,
    /// L∞ rate of change of velocity since the previous sample.
    pub max_dudt_norm: Option<f64>,
    /// Area-mean of `|∇·u|`.
    pub mean_abs_divergence: f64,
    /// Area-mean of `|∇·u + ∂ln(1+ε_ρ)/∂t|`.
    pub mean_abs_continuity_residual: f64,
    pub total_mass: f64,
}

pub fn diagnostics(
    state: &SimState,
    params: &FluidParams,
    reference: Option<&VectorField2D>,
) -> Diagnostics {
    let g = *state.grid();
    let area = g.area();
    let (u, v, r) = (state.vel.ux.data(), state.vel.uy.data(), state.rho.data());
    let speed2: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * a + b * b).collect();
    let div = fields::divergence(&state.vel);
    let (_, drho) = rhs(state, params);
    let residual: Vec<f64> = div
        .data()
        .iter()
        .zip(drho.data())
        .zip(r)
        .map(|((d, dr), rho)| (d + dr / rho).abs())
        .collect();
    let abs_div: Vec<f64> = div.data().iter().map(|d| d.abs()).collect();
    let l2 = reference.map(|rf| {
        let d2: Vec<f64> = u
            .iter()
            .zip(v)
            .zip(rf.ux.data().iter().zip(rf.uy.data()))
            .map(|((a, b), (ra, rb))| (a - ra).powi(2) + (b - rb).powi(2))
            .collect();
        (g.integrate(&d2) / area).sqrt()
    });
    Diagnostics {
        kinetic_energy: state.kinetic_energy(),
        rms_velocity: (g.integrate(&speed2) / area).sqrt(),
        max_abs_divergence: div.max_abs(),
        max_abs_eps_rho: eps_rho_of(&state.rho, params).max_abs(),
        l2_distance_to_reference: l2,
        max_dudt_norm: None,
        mean_abs_divergence: g.integrate(&abs_div) / area,
        mean_abs_continuity_residual: g.integrate(&residual) / area,
        total_mass: state.total_mass(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub diverged: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Index into [`Trajectory::samples`].
    pub sample: usize,
    pub step: usize,
    pub t: f64,
    pub vel: VectorField2D,
    pub rho: ScalarField2D,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    pub cfl: f64,
    /// Record diagnostics every this many steps (the initial and final states
    /// are always recorded).
    pub sample_every: usize,
    /// Store a field snapshot every this many samples; 0 stores none.
    pub snapshot_every: usize,
    pub reference: Option<VectorField2D>,
    /// Use this step throughout instead of re-evaluating [`stable_dt`].
    pub fixed_dt: Option<f64>,
    pub blowup_ratio: f64,
    /// Additional step indices at which to record a sample, sorted ascending.
    pub extra_sample_steps: Vec<usize>,
}

impl RunOptions {
    pub fn new(t_end: f64, cfl: f64, sample_every: usize) -> Self {
        Self {
            t_end,
            cfl,
            sample_every: sample_every.max(1),
            snapshot_every: 0,
            reference: None,
            fixed_dt: None,
            blowup_ratio: DEFAULT_BLOWUP_RATIO,
            extra_sample_steps: Vec::new(),
        }
    }

    pub fn with_extra_samples(mut self, mut steps: Vec<usize>) -> Self {
        steps.sort_unstable();
        steps.dedup();
        self.extra_sample_steps = steps;
        self
    }

    pub fn with_reference(mut self, reference: VectorField2D) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_snapshots(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_fixed_dt(mut self, dt: f64) -> Self {
        self.fixed_dt = Some(dt);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub diverged: bool,
    pub final_state: SimState,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    /// Writes the diagnostics table; missing values are written as `NaN`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,kinetic_energy,rms_velocity,max_div,max_eps_rho,l2_dist,dudt_norm,diverged")?;
        for s in &self.samples {
            let d = &s.diagnostics;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt17(s.t),
                fmt17(d.kinetic_energy),
                fmt17(d.rms_velocity),
                fmt17(d.max_abs_divergence),
                fmt17(d.max_abs_eps_rho),
                fmt17(d.l2_distance_to_reference.unwrap_or(f64::NAN)),
                fmt17(d.max_dudt_norm.unwrap_or(f64::NAN)),
                u8::from(s.diverged)
            )?;
        }
        Ok(())
    }
}

/// Integrates from `initial` to `opts.t_end`, sampling diagnostics and
/// stopping early if the state diverges.
pub fn run_forward(initial: &SimState, params: &FluidParams, opts: &RunOptions) -> Result<Trajectory> {
    if !(opts.t_end > initial.t) {
        return Err(Error::domain(format!(
            "t_end {} must exceed the initial time {}",
            opts.t_end, initial.t
        )));
    }
    if let Some(dt) = opts.fixed_dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::domain(format!("fixed dt must be positive, got {dt}")));
        }
    }
    let reference = opts.reference.as_ref();
    let mut state = initial.clone();
    let mut integrator = Integrator::new(*state.grid()).with_blowup_ratio(opts.blowup_ratio);
    let mut traj = Trajectory {
        samples: Vec::new(),
        snapshots: Vec::new(),
        steps: 0,
        diverged: state.diverged,
        final_state: initial.clone(),
    };
    let record = |traj: &mut Trajectory, state: &SimState, step: usize, dt: f64, prev: Option<(&VectorField2D, f64)>| {
        let mut d = diagnostics(state, params, reference);
        d.max_dudt_norm = prev.map(|(pv, pt)| rate_norm(&state.vel, pv, state.t - pt));
        let sample = traj.samples.len();
        traj.samples.push(Sample { step, t: state.t, dt, diverged: state.diverged, diagnostics: d });
        if opts.snapshot_every > 0 && sample.is_multiple_of(opts.snapshot_every) {
            traj.snapshots.push(Snapshot {
                sample,
                step,
                t: state.t,
                vel: state.vel.clone(),
                rho: state.rho.clone(),
            });
        }
    };
    record(&mut traj, &state, 0, 0.0, None);
    if state.diverged {
        return Ok(traj);
    }

    let mut prev_vel = state.vel.clone();
    let mut prev_t = state.t;
    let end_slack = 1e-12 * opts.t_end.abs().max(1.0);
    let mut step = 0usize;
    while opts.t_end - state.t > end_slack {
        let dt = match opts.fixed_dt {
            Some(dt) => dt,
            None => stable_dt(&state, params, opts.cfl)?,
        };
        let dt = dt.min(opts.t_end - state.t);
        integrator.step(&mut state, params, dt);
        step += 1;
        let done = opts.t_end - state.t <= end_slack;
        if state.diverged
            || done
            || step.is_multiple_of(opts.sample_every)
            || opts.extra_sample_steps.binary_search(&step).is_ok()
        {
            record(&mut traj, &state, step, dt, Some((&prev_vel, prev_t)));
            prev_vel.clone_from(&state.vel);
            prev_t = state.t;
        }
        if state.diverged {
            break;
        }
    }
    traj.steps = step;
    traj.diverged = state.diverged;
    traj.final_state = state;
    Ok(traj)
}

fn rate_norm(now: &VectorField2D, before: &VectorField2D, dt: f64) -> f64 {
    let mut m = 0.0_f64;
    for (a, b) in now.ux.data().iter().zip(before.ux.data()) {
        m = m.max(((a - b) / dt).abs());
    }
    for (a, b) in now.uy.data().iter().zip(before.uy.data()) {
        m = m.max(((a - b) / dt).abs());
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub value: f64,
    /// Sample whose difference produced `value`.
    pub sample: usize,
    /// Set when a later snapshot was non-finite and an earlier value is reported.
    pub diverged: bool,
}

/// L∞ norm of `(u_k − u_{k−1})/(t_k − t_{k−1})` from stored snapshots.
pub fn dudt_norm(traj: &Trajectory, k: usize) -> Result<RateSample> {
    if k == 0 {
        return Err(Error::domain("dudt_norm needs a sample index >= 1"));
    }
    let find = |s: usize| traj.snapshots.iter().find(|snap| snap.sample == s);
    let mut idx = k;
    let mut diverged = false;
    loop {
        let cur = find(idx).ok_or(Error::MissingSnapshot(idx))?;
        let prev = find(idx - 1).ok_or(Error::MissingSnapshot(idx - 1))?;
        let value = rate_norm(&cur.vel, &prev.vel, cur.t - prev.t);
        if value.is_finite() {
            return Ok(RateSample { value, sample: idx, diverged });
        }
        diverged = true;
        if idx == 1 {
            return Err(Error::NonFinite("no finite velocity rate in trajectory".into()));
        }
        idx -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gradient, laplacian};
    use std::f64::consts::PI;

    fn poiseuille_state(nx: usize, ny: usize) -> (SimState, FluidParams) {
        let g = Grid2D::new(nx, ny, 1.0, 1.0).unwrap();
        let params = FluidParams { f: [2.0, 0.0], ..FluidParams::default() };
        let vel = VectorField2D::from_fn(g, |_, y| (-(y * y - y), 0.0));
        (SimState::new(vel, ScalarField2D::constant(g, 1.0), 0.0).unwrap(), params)
    }

    #[test]
    fn params_validation_names_the_key() {
        let bad = FluidParams { mu: -1.0, ..FluidParams::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("mu") && msg.contains("must be > 0"), "{msg}");
        let bulk = FluidParams { lambda: -0.7, ..FluidParams::default() };
        assert!(bulk.validate().is_err());
        let ok = FluidParams { lambda: -2.0 / 3.0, ..FluidParams::default() };
        ok.validate().unwrap();
    }

    #[test]
    fn pressure_and_eps_rho() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let params = FluidParams { cs: 10.0, rho0: 1.0, ..FluidParams::default() };
        assert_eq!(pressure_of(&ScalarField2D::constant(g, 1.0), &params).max_abs(), 0.0);
        let p = pressure_of(&ScalarField2D::constant(g, 1.01), &params);
        assert!((p.get(2, 2) - 1.0).abs() < 1e-12);
        let eps = eps_rho_of(&ScalarField2D::constant(g, 1.02), &params);
        assert!((eps.get(1, 1) - 0.02).abs() < 1e-15);
        let e = 0.003;
        let eps = eps_rho_of(&ScalarField2D::constant(g, params.rho0 * (1.0 + e)), &params);
        assert!((eps.get(0, 0) - e).abs() < 1e-15);
    }

    #[test]
    fn poiseuille_is_a_fixed_point_of_rhs() {
        for ny in [8, 17, 64] {
            let (state, params) = poiseuille_state(16, ny);
            let (dvel, drho) = rhs(&state, &params);
            assert!(dvel.max_abs_interior() <= 1e-10, "ny={ny}: {}", dvel.max_abs_interior());
            assert!(drho.max_abs() <= 1e-12);
        }
    }

    #[test]
    fn rest_state_has_zero_rhs() {
        let g = Grid2D::new(12, 10, 1.0, 1.0).unwrap();
        let params = FluidParams::default();
        let (dvel, drho) = rhs(&SimState::rest(g, &params), &params);
        assert_eq!(dvel.max_norm(), 0.0);
        assert_eq!(drho.max_abs(), 0.0);
    }

    #[test]
    fn density_wave_drives_pressure_gradient_only() {
        let g = Grid2D::new(32, 9, 1.0, 1.0).unwrap();
        let params = FluidParams { cs: 2.0, ..FluidParams::default() };
        let rho = ScalarField2D::from_fn(g, |x, _| 1.0 + 0.01 * (2.0 * PI * x).sin());
        let state = SimState::new(VectorField2D::zeros(g), rho.clone(), 0.0).unwrap();
        let (dvel, drho) = rhs(&state, &params);
        assert_eq!(drho.max_abs(), 0.0);
        let grad = gradient(&rho);
        for j in 1..g.ny() - 1 {
            for i in 0..g.nx() {
                let expected = -params.cs * params.cs * grad.ux.get(i, j) / rho.get(i, j);
                assert!((dvel.ux.get(i, j) - expected).abs() < 1e-13);
                // symbolic derivative, up to O(dx²)
                let x = g.x(i);
                let symbolic = -4.0 * 0.01 * 2.0 * PI * (2.0 * PI * x).cos() / rho.get(i, j);
                assert!((dvel.ux.get(i, j) - symbolic).abs() < 1e-2 * 4.0 * 0.01 * 2.0 * PI);
                assert_eq!(dvel.uy.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn fused_rhs_matches_operator_composition() {
        let g = Grid2D::new(16, 13, 2.0, 1.0).unwrap();
        let params = FluidParams { mu: 0.7, lambda: 0.3, rho0: 1.2, cs: 3.0, f: [0.5, -0.25] };
        let vel = VectorField2D::from_fn(g, |x, y| {
            let s = (PI * x).sin();
            (y * (1.0 - y) * (1.0 + 0.3 * s), 0.2 * s * y * y * (1.0 - y))
        });
        let rho = ScalarField2D::from_fn(g, |x, y| 1.2 + 0.05 * (PI * x).cos() * y);
        let state = SimState::new(vel, rho, 0.0).unwrap();
        let (dvel, drho) = rhs(&state, &params);

        let v = &state.vel;
        let p = pressure_of(&state.rho, &params);
        let gp = gradient(&p);
        let div = fields::divergence(v);
        let gd = gradient(&div);
        let lap_u = laplacian(&v.ux);
        let lap_v = laplacian(&v.uy);
        let gu = gradient(&v.ux);
        let gv = gradient(&v.uy);
        let mflux = fields::mass_flux_divergence(v, &state.rho);
        for j in 1..g.ny() - 1 {
            for i in 0..g.nx() {
                let r = state.rho.get(i, j);
                let (u, w) = (v.ux.get(i, j), v.uy.get(i, j));
                let ex = (-gp.ux.get(i, j) + params.mu * lap_u.get(i, j) + (params.mu + params.lambda) * gd.ux.get(i, j)) / r
                    + params.f[0]
                    - (u * gu.ux.get(i, j) + w * gu.uy.get(i, j));
                let ey = (-gp.uy.get(i, j) + params.mu * lap_v.get(i, j) + (params.mu + params.lambda) * gd.uy.get(i, j)) / r
                    + params.f[1]
                    - (u * gv.ux.get(i, j) + w * gv.uy.get(i, j));
                assert!((dvel.ux.get(i, j) - ex).abs() < 1e-10);
                assert!((dvel.uy.get(i, j) - ey).abs() < 1e-10);
            }
        }
        for k in 0..g.len() {
            assert!((drho.data()[k] + mflux.data()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn stable_dt_viscous_limit() {
        let g = Grid2D::new(64, 65, 1.0, 1.0).unwrap();
        let params = FluidParams { cs: 10.0, mu: 1.0, lambda: 0.0, rho0: 1.0, f: [0.0; 2] };
        let state = SimState::rest(g, &params);
        let dt = stable_dt(&state, &params, 0.5).unwrap();
        assert!((dt - 0.5 / 32768.0).abs() < 1e-18);
        assert!((stable_dt(&state, &params, 0.25).unwrap() - dt / 2.0).abs() < 1e-18);
        assert!(stable_dt(&state, &params, 0.0).is_err());
        assert!(stable_dt(&state, &params, 1.5).is_err());
    }

    #[test]
    fn stable_dt_acoustic_limit_halves_with_doubled_sound_speed() {
        let g = Grid2D::new(16, 17, 1.0, 1.0).unwrap();
        let slow = FluidParams { cs: 100.0, mu: 1e-3, ..FluidParams::default() };
        let fast = FluidParams { cs: 200.0, ..slow };
        let state = SimState::rest(g, &slow);
        let a = stable_dt(&state, &slow, 1.0).unwrap();
        let b = stable_dt(&state, &fast, 1.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stable_dt_rejects_non_finite_state() {
        let (mut state, params) = poiseuille_state(8, 8);
        state.vel.ux.set(2, 3, f64::NAN);
        assert!(stable_dt(&state, &params, 0.5).is_err());
    }

    #[test]
    fn rest_steps_to_rest() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let params = FluidParams::default();
        let s0 = SimState::rest(g, &params);
        let s1 = step(&s0, &params, 1e-4);
        assert_eq!(s1.vel, s0.vel);
        assert_eq!(s1.rho, s0.rho);
        assert_eq!(s1.t, 1e-4);
        assert!(!s1.diverged);
    }

    #[test]
    fn one_step_from_poiseuille_barely_moves() {
        let (s0, params) = poiseuille_state(32, 32);
        let dt = stable_dt(&s0, &params, 0.5).unwrap();
        let s1 = step(&s0, &params, dt);
        let change = s1.vel.ux.zip_map(&s0.vel.ux, |a, b| a - b).max_abs();
        assert!(change <= 1e-9, "{change}");
    }

    #[test]
    fn oversized_step_diverges() {
        let (mut s0, params) = poiseuille_state(16, 16);
        let g = *s0.grid();
        for j in 1..g.ny() - 1 {
            for i in 0..g.nx() {
                let bump = 0.01 * (2.0 * PI * g.x(i)).sin();
                s0.vel.ux.set(i, j, s0.vel.ux.get(i, j) + bump);
            }
        }
        let dt = 100.0 * stable_dt(&s0, &params, 1.0).unwrap();
        let mut integ = Integrator::new(g);
        let mut s = s0.clone();
        let mut n = 0;
        while !s.diverged && n < 200 {
            integ.step(&mut s, &params, dt);
            n += 1;
        }
        assert!(s.diverged, "no divergence after {n} steps");
    }

    #[test]
    fn run_forward_samples_and_truncates_on_divergence() {
        let (s0, params) = poiseuille_state(12, 12);
        let opts = RunOptions::new(0.01, 0.5, 10).with_reference(s0.vel.clone());
        let traj = run_forward(&s0, &params, &opts).unwrap();
        assert!(!traj.diverged);
        assert!((traj.last().t - 0.01).abs() < 1e-14);
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        assert!(traj.samples.iter().all(|s| s.diagnostics.l2_distance_to_reference.unwrap() < 1e-12));

        let blown = RunOptions::new(1.0, 0.5, 1).with_fixed_dt(1.0);
        let mut bumped = s0.clone();
        bumped.vel.ux.set(3, 5, 0.5);
        let traj = run_forward(&bumped, &params, &blown).unwrap();
        assert!(traj.diverged);
        assert!(traj.last().diverged);
        assert!(traj.steps < 1000);

        assert!(run_forward(&s0, &params, &RunOptions::new(0.0, 0.5, 1)).is_err());
    }

    #[test]
    fn dudt_norm_from_snapshots() {
        let (s0, params) = poiseuille_state(12, 12);
        let opts = RunOptions::new(0.002, 0.5, 5).with_snapshots(1);
        let traj = run_forward(&s0, &params, &opts).unwrap();
        let r = dudt_norm(&traj, 1).unwrap();
        assert!(r.value < 1e-8);
        assert!(!r.diverged);
        assert!(dudt_norm(&traj, 0).is_err());

        let sparse = run_forward(&s0, &params, &RunOptions::new(0.002, 0.5, 5)).unwrap();
        assert!(matches!(dudt_norm(&sparse, 1), Err(Error::MissingSnapshot(_))));
    }

    #[test]
    fn dudt_norm_reports_last_finite_value_after_divergence() {
        let (s0, params) = poiseuille_state(12, 12);
        let mut bumped = s0.clone();
        bumped.vel.ux.set(3, 5, 0.5);
        let opts = RunOptions::new(10.0, 0.5, 1).with_fixed_dt(0.05).with_snapshots(1);
        let traj = run_forward(&bumped, &params, &opts).unwrap();
        assert!(traj.diverged);
        let last = traj.samples.len() - 1;
        let r = dudt_norm(&traj, last).unwrap();
        assert!(r.value.is_finite());
        if !traj.snapshots[last].vel.all_finite() {
            assert!(r.diverged && r.sample < last);
        }
    }

    #[test]
    fn trajectory_csv_header() {
        let (s0, params) = poiseuille_state(8, 8);
        let traj = run_forward(&s0, &params, &RunOptions::new(1e-3, 0.5, 100)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,kinetic_energy,rms_velocity,max_div,max_eps_rho,l2_dist,dudt_norm,diverged");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 8);
        assert_eq!(first[5], "NaN");
        assert_eq!(first[7], "0");
    }
}
