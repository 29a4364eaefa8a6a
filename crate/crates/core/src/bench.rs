//! Analytic steady channel flows and the steady-state residual.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{advection_div, curl_of_curl, divergence, gradient, Grid2D, ScalarField2D, VectorField2D};
use crate::solver::{FluidParams, SimState};

/// Default max-norm tolerance for [`steady_residual`].
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;

/// Plane Poiseuille profile `(1/2μ)(∂p/∂x)(y² − yh)`.
pub fn poiseuille_profile(y: f64, mu: f64, px: f64, h: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::constraint("mu", format!("must be > 0, got {mu}")));
    }
    if !(h > 0.0) {
        return Err(Error::constraint("h", format!("must be > 0, got {h}")));
    }
    if !(0.0..=h).contains(&y) {
        return Err(Error::domain(format!("y = {y} lies outside the channel [0, {h}]")));
    }
    Ok(px / (2.0 * mu) * (y * y - y * h))
}

type ProfileFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Steady, streamwise-invariant channel flow driven by a constant pressure
/// gradient.
#[derive(Clone)]
pub struct SteadyBenchmark {
    name: String,
    h: f64,
    px: f64,
    /// `(y, mu) -> u_x`.
    profile: Arc<ProfileFn>,
}

impl fmt::Debug for SteadyBenchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SteadyBenchmark")
            .field("name", &self.name)
            .field("h", &self.h)
            .field("px", &self.px)
            .finish_non_exhaustive()
    }
}

impl SteadyBenchmark {
    /// User-defined entry. The profile must vanish on both walls.
    pub fn custom(
        name: impl Into<String>,
        h: f64,
        px: f64,
        profile: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::constraint("bench.h", format!("must be > 0, got {h}")));
        }
        if !px.is_finite() {
            return Err(Error::constraint("bench.px", "must be finite"));
        }
        let bench = Self { name: name.into(), h, px, profile: Arc::new(profile) };
        let (lo, hi) = (bench.velocity(0.0, 1.0), bench.velocity(h, 1.0));
        if lo.abs() > 1e-14 || hi.abs() > 1e-14 {
            return Err(Error::constraint("bench.profile", "must satisfy no-slip at y = 0 and y = h"));
        }
        Ok(bench)
    }

    pub fn poiseuille(h: f64, px: f64) -> Result<Self> {
        Self::custom("poiseuille", h, px, move |y, mu| px / (2.0 * mu) * (y * y - y * h))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn px(&self) -> f64 {
        self.px
    }

    /// Streamwise velocity at height `y`.
    pub fn velocity(&self, y: f64, mu: f64) -> f64 {
        (self.profile)(y, mu)
    }

    /// Largest speed of the profile, sampled on 1001 evenly spaced heights.
    pub fn peak_velocity(&self, mu: f64) -> f64 {
        (0..=1000)
            .map(|k| self.velocity(self.h * k as f64 / 1000.0, mu).abs())
            .fold(0.0, f64::max)
    }

    /// Body force per unit mass equivalent to the driving pressure gradient.
    pub fn body_force(&self, params: &FluidParams) -> [f64; 2] {
        [-self.px / params.rho0, 0.0]
    }

    pub fn check_grid(&self, grid: &Grid2D) -> Result<()> {
        if (grid.ly() - self.h).abs() > 1e-12 * self.h {
            return Err(Error::GridMismatch(format!(
                "grid height {} differs from channel height {}",
                grid.ly(),
                self.h
            )));
        }
        Ok(())
    }

    /// Velocity field of the profile scaled by `scale`.
    pub fn velocity_field(&self, grid: Grid2D, mu: f64, scale: f64) -> VectorField2D {
        VectorField2D::from_fn(grid, |_, y| (scale * self.velocity(y, mu), 0.0))
    }
}

/// Named collection of steady benchmarks; ships with plane Poiseuille flow.
#[derive(Debug, Clone)]
pub struct BenchmarkRegistry {
    entries: Vec<SteadyBenchmark>,
}

impl BenchmarkRegistry {
    pub fn new(h: f64, px: f64) -> Result<Self> {
        Ok(Self { entries: vec![SteadyBenchmark::poiseuille(h, px)?] })
    }

    /// Adds an entry, replacing any existing entry with the same name.
    pub fn register(&mut self, bench: SteadyBenchmark) {
        self.entries.retain(|b| b.name != bench.name);
        self.entries.push(bench);
    }

    pub fn get(&self, name: &str) -> Option<&SteadyBenchmark> {
        self.entries.iter().find(|b| b.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SteadyBenchmark> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyResidualReport {
    pub max_norm: f64,
    /// Root-mean-square of the residual magnitude over the checked nodes.
    pub l2_norm: f64,
    pub max_divergence: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SteadyResidualReport {
    /// Single-line `key=value` record.
    pub fn record(&self) -> String {
        format!(
            "max_norm={:.16e} l2_norm={:.16e} max_div={:.16e} tolerance={:.16e} pass={}",
            self.max_norm, self.l2_norm, self.max_divergence, self.tolerance, self.passed
        )
    }
}

/// Evaluates `∇·(uu) + ρ⁻¹[∇p + μ∇∧(∇∧u)] − f`.
///
/// Norms run over rows `1..ny-1` and columns `1..nx-1`: the wall rows carry
/// the no-slip constraint rather than momentum balance, and the two seam
/// columns are skipped so that a pressure with a mean streamwise slope can be
/// passed in directly.
pub fn steady_residual(
    vel: &VectorField2D,
    rho: &ScalarField2D,
    p: &ScalarField2D,
    params: &FluidParams,
    f: [f64; 2],
    tolerance: f64,
) -> SteadyResidualReport {
    let g = *rho.grid();
    assert!(vel.grid() == &g && p.grid() == &g, "residual fields live on different grids");
    let adv = advection_div(vel);
    let gp = gradient(p);
    let cc = curl_of_curl(vel);
    let div = divergence(vel);

    let (mut max_norm, mut sum2, mut max_div, mut count) = (0.0_f64, 0.0, 0.0_f64, 0usize);
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let r = rho.get(i, j);
            let rx = adv.ux.get(i, j) + (gp.ux.get(i, j) + params.mu * cc.ux.get(i, j)) / r - f[0];
            let ry = adv.uy.get(i, j) + (gp.uy.get(i, j) + params.mu * cc.uy.get(i, j)) / r - f[1];
            let mag = rx.hypot(ry);
            max_norm = max_norm.max(mag);
            sum2 += mag * mag;
            max_div = max_div.max(div.get(i, j).abs());
            count += 1;
        }
    }
    let l2_norm = (sum2 / count as f64).sqrt();
    SteadyResidualReport {
        max_norm,
        l2_norm,
        max_divergence: max_div,
        tolerance,
        passed: max_norm <= tolerance && max_div <= tolerance,
    }
}

/// Starting state sampled from a benchmark: `u = profile(y)`, `v = 0`,
/// `ρ = ρ₀`. The returned parameters add the benchmark's equivalent body
/// force to `params.f`.
pub fn as_initial_state(
    bench: &SteadyBenchmark,
    grid: Grid2D,
    params: &FluidParams,
) -> Result<(SimState, FluidParams)> {
    bench.check_grid(&grid)?;
    params.validate()?;
    let vel = bench.velocity_field(grid, params.mu, 1.0);
    let state = SimState::new(vel, ScalarField2D::constant(grid, params.rho0), 0.0)?;
    let force = bench.body_force(params);
    let forced = params.with_force([params.f[0] + force[0], params.f[1] + force[1]]);
    Ok((state, forced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::pressure_of;

    fn unit_params() -> FluidParams {
        FluidParams { mu: 1.0, lambda: 0.0, rho0: 1.0, cs: 10.0, f: [0.0; 2] }
    }

    #[test]
    fn profile_values() {
        assert!((poiseuille_profile(0.5, 1.0, -2.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((poiseuille_profile(0.25, 1.0, -2.0, 1.0).unwrap() - 0.1875).abs() < 1e-15);
        assert_eq!(poiseuille_profile(0.0, 3.0, -7.0, 2.0).unwrap(), 0.0);
        assert!(poiseuille_profile(1.5, 1.0, -2.0, 1.0).is_err());
        assert!(poiseuille_profile(-0.1, 1.0, -2.0, 1.0).is_err());
        assert!(poiseuille_profile(0.5, 0.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn benchmark_peak_and_force() {
        let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
        assert!((b.peak_velocity(1.0) - 0.25).abs() < 1e-15);
        assert_eq!(b.body_force(&unit_params()), [2.0, 0.0]);
        assert!(SteadyBenchmark::custom("bad", 1.0, -1.0, |y, _| y + 1.0).is_err());
    }

    #[test]
    fn registry_lookup_and_replace() {
        let mut reg = BenchmarkRegistry::new(1.0, -2.0).unwrap();
        assert!(reg.get("poiseuille").is_some());
        assert!(reg.get("couette").is_none());
        let quartic = SteadyBenchmark::custom("quartic", 1.0, 0.0, |y, _| y * y * (1.0 - y) * (1.0 - y)).unwrap();
        reg.register(quartic);
        assert_eq!(reg.iter().count(), 2);
        reg.register(SteadyBenchmark::poiseuille(1.0, -4.0).unwrap());
        assert_eq!(reg.iter().count(), 2);
        assert_eq!(reg.get("poiseuille").unwrap().px(), -4.0);
    }

    fn poiseuille_residual(p_slope: f64) -> SteadyResidualReport {
        let g = Grid2D::new(64, 64, 1.0, 1.0).unwrap();
        let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
        let vel = b.velocity_field(g, 1.0, 1.0);
        let rho = ScalarField2D::constant(g, 1.0);
        let p = ScalarField2D::from_fn(g, |x, _| p_slope * x);
        steady_residual(&vel, &rho, &p, &unit_params(), [0.0; 2], DEFAULT_RESIDUAL_TOL)
    }

    #[test]
    fn poiseuille_with_linear_pressure_is_steady() {
        let r = poiseuille_residual(-2.0);
        assert!(r.max_norm <= 1e-10, "{r:?}");
        assert!(r.passed);
    }

    #[test]
    fn doubled_pressure_gradient_leaves_residual_of_px() {
        let r = poiseuille_residual(-4.0);
        assert!((r.max_norm - 2.0).abs() < 1e-9, "{r:?}");
        assert!(!r.passed);
    }

    #[test]
    fn rest_state_residual_is_exactly_zero() {
        let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
        let r = steady_residual(
            &VectorField2D::zeros(g),
            &ScalarField2D::constant(g, 1.0),
            &ScalarField2D::constant(g, 5.0),
            &unit_params(),
            [0.0; 2],
            DEFAULT_RESIDUAL_TOL,
        );
        assert_eq!(r.max_norm, 0.0);
        assert_eq!(r.l2_norm, 0.0);
        assert!(r.passed);
        assert!(r.record().ends_with("pass=true"));
    }

    #[test]
    fn initial_state_matches_profile_and_passes() {
        let g = Grid2D::new(64, 64, 1.0, 1.0).unwrap();
        let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
        let (s, params) = as_initial_state(&b, g, &unit_params()).unwrap();
        for j in 0..g.ny() {
            let expected = poiseuille_profile(g.y(j), 1.0, -2.0, 1.0).unwrap();
            assert_eq!(s.vel.ux.get(7, j), expected);
            assert_eq!(s.vel.uy.get(7, j), 0.0);
        }
        assert_eq!(s.vel.ux.get(3, 0), 0.0);
        assert_eq!(s.vel.ux.get(3, g.ny() - 1), 0.0);
        assert_eq!(params.f, [2.0, 0.0]);
        let p = pressure_of(&s.rho, &params);
        let r = steady_residual(&s.vel, &s.rho, &p, &params, params.f, DEFAULT_RESIDUAL_TOL);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn initial_state_rejects_height_mismatch() {
        let g = Grid2D::new(16, 16, 1.0, 2.0).unwrap();
        let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
        assert!(matches!(as_initial_state(&b, g, &unit_params()), Err(Error::GridMismatch(_))));
    }
}
