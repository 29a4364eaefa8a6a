//! Time reversal of the channel problem.
//!
//! A [`TimeMap`] is a strictly decreasing change of time variable `t' = g(t)`.
//! Forward-time rates convert to reversed-time rates through the factor
//! `d(g⁻¹)/dt'`, and the reversed Poiseuille problem reduces, under the
//! product ansatz `ũ(y, t') = j(y, t') ũ(y, 0)`, to the scalar ODE
//!
//! ```text
//! dj/dt' = c(y) (1 − j) / t'²,    c(y) = 2μ / (y² − y h)
//! ```
//!
//! solved here per height sample. The module also holds the sampled
//! little-o / big-O ratio tests used to express the asymptotic conditions.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::Grid2D;

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Closed-form change of time variable with its inverse and the derivative of
/// the inverse.
#[derive(Clone)]
pub struct TimeMap {
    name: String,
    g: Arc<ScalarFn>,
    g_inv: Arc<ScalarFn>,
    dg_inv: Arc<ScalarFn>,
    /// Open interval of valid forward times.
    domain: (f64, f64),
    /// Positive sub-interval used for log-spaced validation samples.
    window: (f64, f64),
}

impl fmt::Debug for TimeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeMap")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("window", &self.window)
            .finish_non_exhaustive()
    }
}

impl TimeMap {
    pub fn new(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain: (f64, f64),
    ) -> Result<Self> {
        if !(domain.0 < domain.1) {
            return Err(Error::domain(format!("empty time-map domain {domain:?}")));
        }
        let lo = if domain.0 >= 1e-3 { domain.0 * 1.001 } else { 1e-3 };
        let hi = if domain.1 <= 1e3 { domain.1 * 0.999 } else { 1e3 };
        Ok(Self {
            name: name.into(),
            g: Arc::new(g),
            g_inv: Arc::new(g_inv),
            dg_inv: Arc::new(dg_inv),
            domain,
            window: (lo, hi),
        })
    }

    /// Overrides the validation window; it must be positive and inside the domain.
    pub fn with_window(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && lo > self.domain.0 && hi < self.domain.1) {
            return Err(Error::domain(format!("window ({lo}, {hi}) not inside {:?}", self.domain)));
        }
        self.window = (lo, hi);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn in_domain(&self, t: f64) -> bool {
        t > self.domain.0 && t < self.domain.1
    }

    /// `t' = g(t)`.
    pub fn forward(&self, t: f64) -> Result<f64> {
        if !self.in_domain(t) {
            return Err(Error::domain(format!("t = {t} outside {:?} of map '{}'", self.domain, self.name)));
        }
        Ok((self.g)(t))
    }

    /// `t = g⁻¹(t')`, rejecting `t'` outside the image of the domain.
    pub fn inverse(&self, t_prime: f64) -> Result<f64> {
        let t = (self.g_inv)(t_prime);
        if !(t.is_finite() && self.in_domain(t)) {
            return Err(Error::domain(format!("t' = {t_prime} outside the image of map '{}'", self.name)));
        }
        Ok(t)
    }

    /// `d(g⁻¹)/dt'` at `t'`.
    pub fn inverse_derivative(&self, t_prime: f64) -> Result<f64> {
        self.inverse(t_prime)?;
        Ok((self.dg_inv)(t_prime))
    }

    fn sample_times(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.window.0.ln(), self.window.1.ln());
        (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
    }
}

/// `g(t) = 1/t` on `(0, ∞)`.
pub fn reciprocal_map() -> TimeMap {
    TimeMap::new("reciprocal", |t| 1.0 / t, |tp| 1.0 / tp, |tp| -1.0 / (tp * tp), (0.0, f64::INFINITY))
        .expect("non-empty domain")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Finite-difference `dg/dt` is not negative.
    Increasing,
    /// `g(g⁻¹(t'))` differs from `t'`.
    RoundTrip,
    /// `g` failed to decrease strictly between consecutive samples.
    NotMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub sample: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapValidation {
    pub samples: usize,
    pub first_violation: Option<Violation>,
}

impl MapValidation {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks negativity of `dg/dt`, the round-trip identity and strict
/// monotonicity on `samples` log-spaced points of the map's window.
pub fn validate_map(m: &TimeMap, samples: usize) -> Result<MapValidation> {
    if samples < 2 {
        return Err(Error::domain("validate_map needs at least 2 samples"));
    }
    let ts = m.sample_times(samples);
    let violation = |kind, sample, t, value| {
        Ok(MapValidation { samples, first_violation: Some(Violation { kind, sample, t, value }) })
    };
    let mut prev: Option<f64> = None;
    for (k, &t) in ts.iter().enumerate() {
        let h = 1e-6 * t;
        let slope = ((m.g)(t + h) - (m.g)(t - h)) / (2.0 * h);
        if !(slope < 0.0) {
            return violation(ViolationKind::Increasing, k, t, slope);
        }
        let tp = (m.g)(t);
        let back = (m.g)((m.g_inv)(tp));
        let err = (back - tp).abs() / tp.abs().max(f64::MIN_POSITIVE);
        if !(err <= 1e-12) {
            return violation(ViolationKind::RoundTrip, k, t, err);
        }
        if let Some(p) = prev {
            if !(tp < p) {
                return violation(ViolationKind::NotMonotone, k, t, tp - p);
            }
        }
        prev = Some(tp);
    }
    Ok(MapValidation { samples, first_violation: None })
}

/// Factor converting a forward-time rate into a reversed-time rate at `t'`;
/// the reversed evolution operator is this factor times the forward one.
pub fn chain_rule_factor(m: &TimeMap, t_prime: f64) -> Result<f64> {
    m.inverse_derivative(t_prime)
}

/// `c(y) = 2μ/(y² − y h)`, negative inside the channel.
pub fn decomposition_coefficient(y: f64, mu: f64, h: f64) -> f64 {
    2.0 * mu / (y * y - y * h)
}

/// `dj/dt' = c (1 − j) / t'²`.
pub fn decomposition_ode_rhs(j: f64, t_prime: f64, c_y: f64) -> Result<f64> {
    if !(t_prime > 0.0) {
        return Err(Error::domain(format!("t' must be > 0, got {t_prime}")));
    }
    Ok(c_y * (1.0 - j) / (t_prime * t_prime))
}

/// Limit of `j` as `t' → ∞` for the ODE started at `j(t0) = j0`.
pub fn closed_form_limit(j0: f64, c_y: f64, t0: f64) -> f64 {
    1.0 - (1.0 - j0) * (-c_y / t0).exp()
}

/// Steady reversed velocity from the initial value `u0` and the value `u_tbar`
/// reached at `t_bar`: `u0 + (u_tbar − u0) exp(−c/t_bar)`.
pub fn reversed_steady_limit(u0: f64, u_tbar: f64, c_y: f64, t_bar: f64) -> Result<f64> {
    if !(t_bar > 0.0) {
        return Err(Error::domain(format!("t_bar must be > 0, got {t_bar}")));
    }
    Ok(u0 + (u_tbar - u0) * (-c_y / t_bar).exp())
}

/// Reversed Poiseuille problem sampled at a set of heights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversedPoiseuilleProblem {
    pub mu: f64,
    pub h: f64,
    /// Pressure gradient of the reversed problem; equal to the forward one.
    pub px: f64,
    pub ys: Vec<f64>,
}

impl ReversedPoiseuilleProblem {
    pub fn new(mu: f64, h: f64, px: f64, ys: Vec<f64>) -> Result<Self> {
        if !(mu > 0.0 && h > 0.0) {
            return Err(Error::domain("mu and h must be positive"));
        }
        if let Some(y) = ys.iter().find(|y| !(**y > 0.0 && **y < h)) {
            return Err(Error::domain(format!("sample y = {y} is not strictly inside (0, {h})")));
        }
        Ok(Self { mu, h, px, ys })
    }

    /// Grid rows at least `margin_cells · dy` away from both walls.
    pub fn from_grid(grid: &Grid2D, mu: f64, px: f64, margin_cells: f64) -> Result<Self> {
        let h = grid.ly();
        let margin = margin_cells * grid.dy();
        let ys = (0..grid.ny())
            .map(|j| grid.y(j))
            .filter(|&y| y >= margin - 1e-12 * h && y <= h - margin + 1e-12 * h && y > 0.0 && y < h)
            .collect();
        Self::new(mu, h, px, ys)
    }

    /// Initial reversed profile, the forward steady profile.
    pub fn initial_profile(&self, y: f64) -> f64 {
        self.px / (2.0 * self.mu) * (y * y - y * self.h)
    }

    pub fn coefficient(&self, y: f64) -> f64 {
        decomposition_coefficient(y, self.mu, self.h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSolution {
    pub ys: Vec<f64>,
    pub c: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// `j[y][k]` at `t_grid[k]`.
    pub j: Vec<Vec<f64>>,
    /// Limit extrapolated from the last integrated value.
    pub j_inf_numeric: Vec<f64>,
    pub j_inf_closed_form: Vec<f64>,
    /// `ũ(y, ∞) = ũ(y, 0) · j(y, ∞)` from the numeric limit.
    pub steady_limit: Vec<f64>,
    /// Heights whose integration produced a non-finite value.
    pub failures: Vec<(usize, String)>,
}

impl DecompositionSolution {
    pub fn relative_difference(&self, k: usize) -> f64 {
        let (a, b) = (self.j_inf_numeric[k], self.j_inf_closed_form[k]);
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Integrates `dj/dt'` with classical RK4 on a geometric `t'` grid from `t0`
/// to `t_end` for every height sample.
///
/// The limit `t' → ∞` is extrapolated from `j(t_end)` through the exact tail
/// factor of the linear ODE: `1 − j` scales by `exp(−c/t_end)` between
/// `t_end` and infinity.
pub fn solve_decomposition(
    prob: &ReversedPoiseuilleProblem,
    j0: f64,
    t0: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<DecompositionSolution> {
    if !(t0 > 0.0) {
        return Err(Error::domain(format!("t0 must be > 0, got {t0}")));
    }
    if !(t_end > t0) {
        return Err(Error::domain(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    if n_steps == 0 {
        return Err(Error::domain("n_steps must be positive"));
    }
    let ratio = (t_end / t0).powf(1.0 / n_steps as f64);
    let mut t_grid: Vec<f64> = (0..=n_steps).map(|k| t0 * ratio.powi(k as i32)).collect();
    t_grid[n_steps] = t_end;

    let per_y: Vec<(f64, Vec<f64>)> = prob
        .ys
        .par_iter()
        .map(|&y| {
            let c = prob.coefficient(y);
            let f = |j: f64, t: f64| c * (1.0 - j) / (t * t);
            let mut table = Vec::with_capacity(t_grid.len());
            let mut j = j0;
            table.push(j);
            for w in t_grid.windows(2) {
                let (t, h) = (w[0], w[1] - w[0]);
                let k1 = f(j, t);
                let k2 = f(j + 0.5 * h * k1, t + 0.5 * h);
                let k3 = f(j + 0.5 * h * k2, t + 0.5 * h);
                let k4 = f(j + h * k3, t + h);
                j += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                table.push(j);
            }
            (c, table)
        })
        .collect();

    let mut sol = DecompositionSolution {
        ys: prob.ys.clone(),
        c: Vec::with_capacity(per_y.len()),
        t_grid,
        j: Vec::with_capacity(per_y.len()),
        j_inf_numeric: Vec::with_capacity(per_y.len()),
        j_inf_closed_form: Vec::with_capacity(per_y.len()),
        steady_limit: Vec::with_capacity(per_y.len()),
        failures: Vec::new(),
    };
    for (k, (c, table)) in per_y.into_iter().enumerate() {
        let last = *table.last().expect("table holds j0");
        let numeric = 1.0 - (1.0 - last) * (-c / t_end).exp();
        if let Some(bad) = table.iter().position(|v| !v.is_finite()) {
            sol.failures.push((k, format!("non-finite j at t' = {}", sol.t_grid[bad])));
        } else if !numeric.is_finite() {
            sol.failures.push((k, "non-finite extrapolated limit".into()));
        }
        sol.steady_limit.push(prob.initial_profile(prob.ys[k]) * numeric);
        sol.j_inf_closed_form.push(closed_form_limit(j0, c, t0));
        sol.j_inf_numeric.push(numeric);
        sol.c.push(c);
        sol.j.push(table);
    }
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticVerdict {
    pub passed: bool,
    /// `|value / envelope|` per sample (`NaN` where the envelope underflowed).
    pub ratios: Vec<f64>,
    /// First sample responsible for a failure.
    pub first_failure: Option<usize>,
}

/// Default decrease factor for [`check_little_o`].
pub const DEFAULT_LITTLE_O_FACTOR: f64 = 0.1;
/// Default bound for [`check_big_o`].
pub const DEFAULT_BIG_O_BOUND: f64 = 10.0;

/// Sampled little-o test as `t' → ∞`.
///
/// Passes when `|value/envelope|` is non-increasing over the second half of
/// the samples and falls across that half by at least `factor`.
pub fn check_little_o(
    samples: &[(f64, f64)],
    envelope: impl Fn(f64) -> f64,
    factor: f64,
) -> Result<AsymptoticVerdict> {
    if samples.len() < 8 {
        return Err(Error::domain(format!("need at least 8 samples, got {}", samples.len())));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::domain("sample abscissae must be strictly increasing"));
    }
    let mut ratios = Vec::with_capacity(samples.len());
    for &(t, v) in samples {
        let e = envelope(t);
        if e == 0.0 || !e.is_finite() {
            return Err(Error::domain(format!("envelope is {e} at t' = {t}")));
        }
        ratios.push((v / e).abs());
    }
    let n = ratios.len();
    let mut first_failure = None;
    for k in n / 2 + 1..n {
        if !(ratios[k] <= ratios[k - 1]) {
            first_failure = Some(k);
            break;
        }
    }
    if first_failure.is_none() && !(ratios[n - 1] <= factor * ratios[n / 2]) {
        first_failure = Some(n - 1);
    }
    Ok(AsymptoticVerdict { passed: first_failure.is_none(), ratios, first_failure })
}

/// Sampled big-O test as `t̄ → 0⁺`.
///
/// Ratios `|value/envelope|` are normalised by the first finite ratio, so
/// the test does not depend on the envelope's scale; it passes when every
/// normalised ratio is at most `bound`. Where the envelope underflows to zero
/// the value must be zero too.
pub fn check_big_o(
    samples: &[(f64, f64)],
    envelope: impl Fn(f64) -> f64,
    bound: f64,
) -> Result<AsymptoticVerdict> {
    if samples.len() < 8 {
        return Err(Error::domain(format!("need at least 8 samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.0 > 0.0)) || samples.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::domain("sample abscissae must be positive and strictly decreasing"));
    }
    let mut ratios = Vec::with_capacity(samples.len());
    let mut first_failure = None;
    for (k, &(t, v)) in samples.iter().enumerate() {
        let e = envelope(t);
        if e == 0.0 {
            if v != 0.0 && first_failure.is_none() {
                first_failure = Some(k);
            }
            ratios.push(f64::NAN);
        } else {
            ratios.push((v / e).abs());
        }
    }
    let reference = ratios.iter().copied().find(|r| !r.is_nan());
    if let Some(reference) = reference {
        for (k, &r) in ratios.iter().enumerate() {
            if r.is_nan() {
                continue;
            }
            let normalised = if reference == 0.0 {
                if r == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                r / reference
            };
            if !(normalised <= bound) {
                first_failure = Some(first_failure.map_or(k, |f: usize| f.min(k)));
                break;
            }
        }
    }
    Ok(AsymptoticVerdict { passed: first_failure.is_none(), ratios, first_failure })
}
