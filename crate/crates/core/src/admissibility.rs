//! Parameterised initial data and the classification of parameter points by
//! forward simulation.
//!
//! Initial data are `u = alpha·profile(y) + eps·sin(2πk x/lx)·4y(h−y)/h²`,
//! `v = 0`, `ρ = ρ₀`, driven by `alpha` times the benchmark's body force so the
//! scaled profile is the expected steady end state.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::bench::SteadyBenchmark;
use crate::error::{Error, Result};
use crate::fields::{Grid2D, ScalarField2D, VectorField2D};
use crate::reversal::{check_little_o, reciprocal_map, TimeMap, DEFAULT_LITTLE_O_FACTOR};
use crate::solver::{kinetic_energy, run_forward, stable_dt, FluidParams, RunOptions, SimState, Trajectory};

/// Point `(alpha, eps, k)` of the initial-data parameter space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDataSpec {
    /// Multiplier of the steady profile.
    pub alpha: f64,
    /// Perturbation amplitude (velocity units).
    pub eps: f64,
    /// Streamwise wavenumber of the perturbation.
    pub k: u32,
}

impl InitialDataSpec {
    pub fn new(alpha: f64, eps: f64, k: u32) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::constraint("init.alpha", "must be finite"));
        }
        if !eps.is_finite() {
            return Err(Error::constraint("init.eps", "must be finite"));
        }
        Ok(Self { alpha, eps, k })
    }

    /// Initial streamwise velocity at `(x, y)`.
    pub fn velocity_at(&self, bench: &SteadyBenchmark, mu: f64, lx: f64, x: f64, y: f64) -> f64 {
        let h = bench.h();
        let envelope = 4.0 * y * (h - y) / (h * h);
        let wave = (2.0 * PI * self.k as f64 * x / lx).sin();
        self.alpha * bench.velocity(y, mu) + self.eps * wave * envelope
    }

    /// Parameters with the body force scaled by `alpha`.
    pub fn forced_params(&self, bench: &SteadyBenchmark, params: &FluidParams) -> FluidParams {
        let f = bench.body_force(params);
        params.with_force([params.f[0] + self.alpha * f[0], params.f[1] + self.alpha * f[1]])
    }
}

pub fn generate_initial(
    spec: &InitialDataSpec,
    bench: &SteadyBenchmark,
    grid: Grid2D,
    params: &FluidParams,
) -> Result<SimState> {
    bench.check_grid(&grid)?;
    params.validate()?;
    let lx = grid.lx();
    let vel = VectorField2D::from_fn(grid, |x, y| (spec.velocity_at(bench, params.mu, lx, x, y), 0.0));
    SimState::new(vel, ScalarField2D::constant(grid, params.rho0), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Admissible => "admissible",
            Verdict::Inadmissible => "inadmissible",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "admissible" => Ok(Verdict::Admissible),
            "inadmissible" => Ok(Verdict::Inadmissible),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(Error::domain(format!("unknown verdict '{other}'"))),
        }
    }
}

/// Run settings and thresholds used by [`classify`].
#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub t_end: f64,
    pub cfl: f64,
    pub sample_every: usize,
    /// Final L2 distance to the scaled steady profile required for admissibility.
    pub tol_steady: f64,
    /// Largest allowed kinetic energy relative to the initial or steady energy.
    pub energy_ratio: f64,
    pub little_o_factor: f64,
    pub blowup_ratio: f64,
    /// Keep the step chosen at `t = 0` for the whole run.
    pub freeze_dt: bool,
    /// Log-spaced samples added to the first tenth of the run.
    pub early_samples: usize,
    pub map: TimeMap,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            cfl: 1.0,
            sample_every: 100,
            tol_steady: 2.5e-5,
            energy_ratio: 10.0,
            little_o_factor: DEFAULT_LITTLE_O_FACTOR,
            blowup_ratio: crate::solver::DEFAULT_BLOWUP_RATIO,
            freeze_dt: false,
            early_samples: 32,
            map: reciprocal_map(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamPointResult {
    pub spec: InitialDataSpec,
    pub verdict: Verdict,
    /// L2 distance to the scaled steady profile at the last sample.
    pub final_l2: f64,
    /// Largest kinetic energy over `max(initial, steady)` energy.
    pub energy_ratio: f64,
    pub diverged: bool,
    pub little_o_pass: bool,
    /// Simulated time reached.
    pub t_reached: f64,
    pub steps: usize,
    pub wall_seconds: f64,
}

impl ParamPointResult {
    /// Row of the sweep table; wall-clock time is left out so the row is reproducible.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{},{},{:.16e},{:.16e},{},{},{:.16e}",
            self.spec.alpha,
            self.spec.eps,
            self.spec.k,
            self.verdict,
            self.final_l2,
            self.energy_ratio,
            self.diverged as u8,
            self.little_o_pass as u8,
            self.t_reached
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 9 {
            return Err(Error::domain(format!("expected 9 columns, got {}", cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::domain(format!("'{s}': {e}")));
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::domain(format!("'{s}' is not 0 or 1"))),
        };
        Ok(Self {
            spec: InitialDataSpec {
                alpha: num(cols[0])?,
                eps: num(cols[1])?,
                k: cols[2].parse().map_err(|e| Error::domain(format!("'{}': {e}", cols[2])))?,
            },
            verdict: cols[3].parse()?,
            final_l2: num(cols[4])?,
            energy_ratio: num(cols[5])?,
            diverged: flag(cols[6])?,
            little_o_pass: flag(cols[7])?,
            t_reached: num(cols[8])?,
            steps: 0,
            wall_seconds: 0.0,
        })
    }
}

pub const CSV_HEADER: &str = "alpha,eps,k,verdict,final_l2,energy_ratio,diverged,little_o_pass,seconds";

fn point_run(
    spec: &InitialDataSpec,
    bench: &SteadyBenchmark,
    grid: Grid2D,
    params: &FluidParams,
    opts: &ClassifyOptions,
) -> Result<(ParamPointResult, Trajectory)> {
    let started = Instant::now();
    let initial = generate_initial(spec, bench, grid, params)?;
    let forced = spec.forced_params(bench, params);
    let reference = bench.velocity_field(grid, params.mu, spec.alpha);

    let dt0 = stable_dt(&initial, &forced, opts.cfl)?;
    let early_steps = (0.1 * opts.t_end / dt0).ceil().max(1.0);
    let n = opts.early_samples.max(2);
    let mut extra: Vec<usize> = (0..n)
        .map(|i| early_steps.powf(i as f64 / (n - 1) as f64).round() as usize)
        .collect();
    extra.dedup();
    let mut run = RunOptions::new(opts.t_end, opts.cfl, opts.sample_every)
        .with_reference(reference.clone())
        .with_extra_samples(extra.clone());
    run.blowup_ratio = opts.blowup_ratio;
    if opts.freeze_dt {
        run = run.with_fixed_dt(dt0);
    }
    let traj = run_forward(&initial, &forced, &run)?;

    let steady_energy = kinetic_energy(&reference, &ScalarField2D::constant(grid, params.rho0));
    let denom = initial.kinetic_energy().max(steady_energy);
    let peak = traj.samples.iter().map(|s| s.diagnostics.kinetic_energy).fold(0.0, f64::max);
    let energy_ratio = if denom > 0.0 {
        peak / denom
    } else if peak == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let last = traj.last();
    let final_l2 = last.diagnostics.l2_distance_to_reference.unwrap_or(f64::NAN);
    let diverged = traj.diverged;
    let velocity_scale = initial.vel.max_norm().max(reference.max_norm());
    let little_o_pass = !diverged && early_rate_check(&traj, &extra, opts, velocity_scale)?;

    let verdict = if diverged || !(energy_ratio <= opts.energy_ratio) || !little_o_pass {
        Verdict::Inadmissible
    } else if !(final_l2 <= opts.tol_steady) {
        Verdict::Inconclusive
    } else {
        Verdict::Admissible
    };
    let result = ParamPointResult {
        spec: *spec,
        verdict,
        final_l2,
        energy_ratio,
        diverged,
        little_o_pass,
        t_reached: last.t,
        steps: traj.steps,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((result, traj))
}

/// Little-o test of `|∂u/∂t|` against the map's envelope `1/|d(g⁻¹)/dt'|`
/// at the log-spaced early steps, ordered by increasing `t'`. Rates whose
/// velocity increments all sit at round-off level pass outright.
fn early_rate_check(
    traj: &Trajectory,
    steps: &[usize],
    opts: &ClassifyOptions,
    velocity_scale: f64,
) -> Result<bool> {
    let window = 0.1 * opts.t_end;
    let mut rates = Vec::new();
    let mut noise_only = true;
    for pair in traj.samples.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.t > window {
            break;
        }
        if steps.binary_search(&cur.step).is_err() {
            continue;
        }
        let Some(rate) = cur.diagnostics.max_dudt_norm else { continue };
        if !rate.is_finite() {
            return Ok(false);
        }
        if rate * (cur.t - prev.t) > 1e-10 * velocity_scale {
            noise_only = false;
        }
        rates.push((cur.t, rate));
    }
    if noise_only {
        return Ok(true);
    }
    let map = &opts.map;
    let mut samples = Vec::with_capacity(rates.len());
    for &(t, rate) in &rates {
        samples.push((map.forward(t)?, rate));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    if samples.len() < 8 {
        return Ok(false);
    }
    let verdict = check_little_o(
        &samples,
        |tp| 1.0 / map.inverse_derivative(tp).map(f64::abs).unwrap_or(f64::NAN),
        opts.little_o_factor,
    )?;
    Ok(verdict.passed)
}

/// Forward run from the initial data of `spec` and its verdict. Failures of
/// the run itself are reported through the verdict.
pub fn classify(
    spec: &InitialDataSpec,
    bench: &SteadyBenchmark,
    grid: Grid2D,
    params: &FluidParams,
    opts: &ClassifyOptions,
) -> Result<ParamPointResult> {
    point_run(spec, bench, grid, params, opts).map(|(r, _)| r)
}

/// `‖u(t_end; eps + delta) − u(t_end; eps)‖ / delta`, infinite when either run diverges.
pub fn continuity_probe(
    spec: &InitialDataSpec,
    delta: f64,
    bench: &SteadyBenchmark,
    grid: Grid2D,
    params: &FluidParams,
    opts: &ClassifyOptions,
) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta must be > 0, got {delta}")));
    }
    let shifted = InitialDataSpec { eps: spec.eps + delta, ..*spec };
    let (_, a) = point_run(spec, bench, grid, params, opts)?;
    let (_, b) = point_run(&shifted, bench, grid, params, opts)?;
    if a.diverged || b.diverged {
        return Ok(f64::INFINITY);
    }
    let (ua, ub) = (&a.final_state.vel, &b.final_state.vel);
    let d2: Vec<f64> = ua
        .ux
        .data()
        .iter()
        .zip(ub.ux.data())
        .zip(ua.uy.data().iter().zip(ub.uy.data()))
        .map(|((p, q), (r, s))| (p - q).powi(2) + (r - s).powi(2))
        .collect();
    Ok((grid.integrate(&d2) / grid.area()).sqrt() / delta)
}

/// Axes of a rectangular parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxes {
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    pub k: Vec<u32>,
}

impl SweepAxes {
    pub fn new(alpha: Vec<f64>, eps: Vec<f64>, k: Vec<u32>) -> Result<Self> {
        for (name, empty) in [("sweep.alpha", alpha.is_empty()), ("sweep.eps", eps.is_empty()), ("sweep.k", k.is_empty())] {
            if empty {
                return Err(Error::constraint(name, "must not be empty"));
            }
        }
        Ok(Self { alpha, eps, k })
    }

    pub fn len(&self) -> usize {
        self.alpha.len() * self.eps.len() * self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point at grid index `i`; `k` varies fastest, then `eps`, then `alpha`.
    pub fn point(&self, i: usize) -> InitialDataSpec {
        let nk = self.k.len();
        let ne = self.eps.len();
        InitialDataSpec { alpha: self.alpha[i / (ne * nk)], eps: self.eps[(i / nk) % ne], k: self.k[i % nk] }
    }
}

/// `n` evenly spaced values from `lo` to `hi`; a degenerate range gives one value.
pub fn axis_range(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || n == 0 {
        return Err(Error::domain(format!("invalid range {lo}:{hi}:{n}")));
    }
    if lo == hi || n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Verdict counts and admissible extent along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSummary {
    pub name: &'static str,
    pub admissible_min: Option<f64>,
    pub admissible_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    pub axes: SweepAxes,
    /// One result per grid index.
    pub results: Vec<ParamPointResult>,
}

impl AdmissibleSet {
    pub fn count(&self, verdict: Verdict) -> usize {
        self.results.iter().filter(|r| r.verdict == verdict).count()
    }

    pub fn summaries(&self) -> [AxisSummary; 3] {
        let adm: Vec<&ParamPointResult> = self.results.iter().filter(|r| r.verdict == Verdict::Admissible).collect();
        let extent = |name, f: &dyn Fn(&ParamPointResult) -> f64| {
            let vals = adm.iter().map(|r| f(r));
            AxisSummary {
                name,
                admissible_min: vals.clone().reduce(f64::min),
                admissible_max: vals.reduce(f64::max),
            }
        };
        [
            extent("alpha", &|r| r.spec.alpha),
            extent("eps", &|r| r.spec.eps),
            extent("k", &|r| r.spec.k as f64),
        ]
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.results {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Classifies every point of `axes`, skipping indices present in `completed`.
///
/// `threads = 0` uses rayon's default pool size. `on_done` is called from
/// worker threads as each new point finishes. Results are ordered by grid
/// index regardless of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    axes: &SweepAxes,
    bench: &SteadyBenchmark,
    grid: Grid2D,
    params: &FluidParams,
    opts: &ClassifyOptions,
    threads: usize,
    completed: &BTreeMap<usize, ParamPointResult>,
    on_done: &(dyn Fn(usize, &ParamPointResult) + Sync),
) -> Result<AdmissibleSet> {
    bench.check_grid(&grid)?;
    params.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    let todo: Vec<usize> = (0..axes.len()).filter(|i| !completed.contains_key(i)).collect();
    let fresh: Vec<(usize, Result<ParamPointResult>)> = pool.install(|| {
        todo.par_iter()
            .map(|&i| {
                let r = classify(&axes.point(i), bench, grid, params, opts);
                if let Ok(res) = &r {
                    on_done(i, res);
                }
                (i, r)
            })
            .collect()
    });
    let mut all = completed.clone();
    for (i, r) in fresh {
        all.insert(i, r?);
    }
    let results = (0..axes.len())
        .map(|i| all.remove(&i).ok_or_else(|| Error::domain(format!("missing sweep point {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdmissibleSet { axes: axes.clone(), results })
}

/// Frozen-step configuration expected to blow up: `alpha = 1`,
/// `eps = 1000·U_max`, `k = 2`.
pub fn frozen_dt_blowup_spec(bench: &SteadyBenchmark, mu: f64) -> InitialDataSpec {
    InitialDataSpec { alpha: 1.0, eps: 1e3 * bench.peak_velocity(mu), k: 2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (SteadyBenchmark, Grid2D, FluidParams) {
        let bench = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
        let grid = Grid2D::new(n, n, 1.0, 1.0).unwrap();
        (bench, grid, FluidParams::default())
    }

    #[test]
    fn initial_data_examples() {
        let (bench, grid, params) = setup(16);
        let s = generate_initial(&InitialDataSpec::new(1.0, 0.0, 1).unwrap(), &bench, grid, &params).unwrap();
        let (base, _) = crate::bench::as_initial_state(&bench, grid, &params).unwrap();
        assert_eq!(s.vel, base.vel);
        let rest = generate_initial(&InitialDataSpec::new(0.0, 0.0, 3).unwrap(), &bench, grid, &params).unwrap();
        assert_eq!(rest.vel.max_norm(), 0.0);

        let spec = InitialDataSpec::new(0.0, 0.01, 2).unwrap();
        // sin(4πx) peaks at x = 1/8; envelope peaks at y = 1/2
        let v = spec.velocity_at(&bench, 1.0, 1.0, 0.125, 0.5);
        assert!((v - 0.01).abs() < 1e-15);
        assert_eq!(spec.velocity_at(&bench, 1.0, 1.0, 0.3, 0.0), 0.0);
        assert_eq!(spec.velocity_at(&bench, 1.0, 1.0, 0.3, 1.0), 0.0);

        let tall = Grid2D::new(16, 16, 1.0, 2.0).unwrap();
        assert!(generate_initial(&spec, &bench, tall, &params).is_err());
    }

    #[test]
    fn verdict_strings_round_trip() {
        for v in [Verdict::Admissible, Verdict::Inadmissible, Verdict::Inconclusive] {
            assert_eq!(v.as_str().parse::<Verdict>().unwrap(), v);
        }
        assert!("maybe".parse::<Verdict>().is_err());
    }

    #[test]
    fn axis_helpers() {
        assert_eq!(axis_range(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(axis_range(2.0, 2.0, 5).unwrap(), vec![2.0]);
        assert!(axis_range(0.0, 1.0, 0).is_err());
        let axes = SweepAxes::new(vec![1.0, 2.0], vec![0.0, 0.1, 0.2], vec![1, 2]).unwrap();
        assert_eq!(axes.len(), 12);
        assert_eq!(axes.point(0), InitialDataSpec { alpha: 1.0, eps: 0.0, k: 1 });
        assert_eq!(axes.point(3), InitialDataSpec { alpha: 1.0, eps: 0.1, k: 2 });
        assert_eq!(axes.point(11), InitialDataSpec { alpha: 2.0, eps: 0.2, k: 2 });
        assert!(SweepAxes::new(vec![], vec![0.0], vec![1]).is_err());
    }

    #[test]
    fn csv_row_round_trips() {
        let r = ParamPointResult {
            spec: InitialDataSpec { alpha: 0.5, eps: 1.0 / 3.0, k: 2 },
            verdict: Verdict::Inconclusive,
            final_l2: 1.234e-7,
            energy_ratio: 1.0000000000000002,
            diverged: false,
            little_o_pass: true,
            t_reached: 0.5,
            steps: 0,
            wall_seconds: 0.0,
        };
        assert_eq!(ParamPointResult::parse_csv_row(&r.csv_row()).unwrap(), r);
    }

    #[test]
    fn steady_start_is_admissible() {
        let (bench, grid, params) = setup(16);
        let opts = ClassifyOptions { t_end: 0.2, ..ClassifyOptions::default() };
        let r = classify(&InitialDataSpec::new(1.0, 0.0, 1).unwrap(), &bench, grid, &params, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Admissible, "{r:?}");
        assert!(r.little_o_pass);
        assert!((r.t_reached - 0.2).abs() < 1e-12);
    }

    #[test]
    fn probe_rejects_zero_delta() {
        let (bench, grid, params) = setup(8);
        let spec = InitialDataSpec::new(1.0, 0.0, 1).unwrap();
        assert!(continuity_probe(&spec, 0.0, &bench, grid, &params, &ClassifyOptions::default()).is_err());
    }
}
