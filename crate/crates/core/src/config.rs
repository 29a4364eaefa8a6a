//! Flat `section.key=value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional;
//! unknown or repeated keys are errors. [`emit_config`] writes every key in
//! canonical order, and parsing that text gives back the same configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::admissibility::{axis_range, ClassifyOptions, InitialDataSpec, SweepAxes};
use crate::bench::SteadyBenchmark;
use crate::error::{Error, Result};
use crate::fields::Grid2D;
use crate::reversal::reciprocal_map;
use crate::solver::{FluidParams, RunOptions, DEFAULT_BLOWUP_RATIO};

/// Every recognised key with a one-line description, in emission order.
pub const KEYS: &[(&str, &str)] = &[
    ("grid.nx", "cells along the periodic x axis"),
    ("grid.ny", "nodes across the channel, walls included"),
    ("grid.lx", "domain length"),
    ("grid.ly", "channel height; must equal bench.h"),
    ("fluid.mu", "dynamic viscosity"),
    ("fluid.lambda", "bulk viscosity, >= -2/3 mu"),
    ("fluid.rho0", "reference density"),
    ("fluid.cs", "sound speed"),
    ("fluid.fx", "extra body force per unit mass, x"),
    ("fluid.fy", "extra body force per unit mass, y"),
    ("bench.px", "driving pressure gradient dp/dx"),
    ("bench.h", "channel height"),
    ("run.t_end", "end time of forward runs"),
    ("run.cfl", "fraction of the stable step, in (0, 1]"),
    ("run.sample_every", "steps between diagnostic samples"),
    ("run.snapshot_every", "samples between stored snapshots, 0 for none"),
    ("run.tol_residual", "steady residual tolerance"),
    ("run.tol_steady", "final L2 distance required for admissibility"),
    ("run.blowup_ratio", "kinetic energy growth flagged as divergence"),
    ("run.energy_ratio", "kinetic energy growth tolerated by classification"),
    ("run.little_o_factor", "decrease required by the little-o check"),
    ("run.big_o_bound", "bound used by the big-O check"),
    ("run.freeze_dt", "keep the initial step for the whole run"),
    ("run.early_samples", "log-spaced samples in the first tenth of a run"),
    ("reverse.t0", "start of the reversed time integration"),
    ("reverse.t_end", "end of the reversed time integration"),
    ("reverse.steps", "RK4 steps of the reversed integration"),
    ("reverse.j0", "initial value of the decomposition factor"),
    ("reverse.wall_margin", "rows skipped next to each wall, in units of dy"),
    ("reverse.tol", "relative tolerance between numeric and closed-form limits"),
    ("init.alpha", "steady profile multiplier"),
    ("init.eps", "perturbation amplitude"),
    ("init.k", "perturbation wavenumber"),
    ("sweep.alpha", "alpha axis: comma list or lo:hi:n"),
    ("sweep.eps", "eps axis: comma list or lo:hi:n"),
    ("sweep.k", "k axis: comma list"),
    ("out.dir", "output directory"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub t_end: f64,
    pub cfl: f64,
    pub sample_every: usize,
    pub snapshot_every: usize,
    pub tol_residual: f64,
    pub tol_steady: f64,
    pub blowup_ratio: f64,
    pub energy_ratio: f64,
    pub little_o_factor: f64,
    pub big_o_bound: f64,
    pub freeze_dt: bool,
    pub early_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseSection {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
    pub j0: f64,
    pub wall_margin: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub fluid: FluidParams,
    pub px: f64,
    pub h: f64,
    pub run: RunSection,
    pub reverse: ReverseSection,
    pub init: InitialDataSpec,
    pub sweep: SweepAxes,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
            fluid: FluidParams::default(),
            px: -2.0,
            h: 1.0,
            run: RunSection {
                t_end: 5.0,
                cfl: 1.0,
                sample_every: 100,
                snapshot_every: 0,
                tol_residual: crate::bench::DEFAULT_RESIDUAL_TOL,
                tol_steady: 2.5e-5,
                blowup_ratio: DEFAULT_BLOWUP_RATIO,
                energy_ratio: 10.0,
                little_o_factor: crate::reversal::DEFAULT_LITTLE_O_FACTOR,
                big_o_bound: crate::reversal::DEFAULT_BIG_O_BOUND,
                freeze_dt: false,
                early_samples: 32,
            },
            reverse: ReverseSection { t0: 1.0, t_end: 1e4, steps: 40_000, j0: 0.9, wall_margin: 2.0, tol: 1e-6 },
            init: InitialDataSpec { alpha: 1.0, eps: 0.0025, k: 2 },
            sweep: SweepAxes { alpha: vec![0.5, 1.0, 2.0], eps: vec![0.0, 0.0025, 0.25], k: vec![1, 2] },
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("{key}: '{v}' is not a number"))?;
    if !x.is_finite() {
        return Err(format!("{key}: '{v}' is not finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("{key}: '{v}' is not a non-negative integer"))
}

fn parse_axis(key: &str, v: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi, n] => {
            let (lo, hi) = (parse_f64(key, lo)?, parse_f64(key, hi)?);
            let n = parse_usize(key, n)?;
            axis_range(lo, hi, n).map_err(|e| format!("{key}: {e}"))
        }
        [_] => v.split(',').map(|s| parse_f64(key, s.trim())).collect(),
        _ => Err(format!("{key}: expected a comma list or lo:hi:n")),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let f = |v: &str| parse_f64(key, v);
        let u = |v: &str| parse_usize(key, v);
        match key {
            "grid.nx" => self.nx = u(v)?,
            "grid.ny" => self.ny = u(v)?,
            "grid.lx" => self.lx = f(v)?,
            "grid.ly" => self.ly = f(v)?,
            "fluid.mu" => self.fluid.mu = f(v)?,
            "fluid.lambda" => self.fluid.lambda = f(v)?,
            "fluid.rho0" => self.fluid.rho0 = f(v)?,
            "fluid.cs" => self.fluid.cs = f(v)?,
            "fluid.fx" => self.fluid.f[0] = f(v)?,
            "fluid.fy" => self.fluid.f[1] = f(v)?,
            "bench.px" => self.px = f(v)?,
            "bench.h" => self.h = f(v)?,
            "run.t_end" => self.run.t_end = f(v)?,
            "run.cfl" => self.run.cfl = f(v)?,
            "run.sample_every" => self.run.sample_every = u(v)?,
            "run.snapshot_every" => self.run.snapshot_every = u(v)?,
            "run.tol_residual" => self.run.tol_residual = f(v)?,
            "run.tol_steady" => self.run.tol_steady = f(v)?,
            "run.blowup_ratio" => self.run.blowup_ratio = f(v)?,
            "run.energy_ratio" => self.run.energy_ratio = f(v)?,
            "run.little_o_factor" => self.run.little_o_factor = f(v)?,
            "run.big_o_bound" => self.run.big_o_bound = f(v)?,
            "run.freeze_dt" => {
                self.run.freeze_dt = v.parse().map_err(|_| format!("{key}: '{v}' is not true or false"))?
            }
            "run.early_samples" => self.run.early_samples = u(v)?,
            "reverse.t0" => self.reverse.t0 = f(v)?,
            "reverse.t_end" => self.reverse.t_end = f(v)?,
            "reverse.steps" => self.reverse.steps = u(v)?,
            "reverse.j0" => self.reverse.j0 = f(v)?,
            "reverse.wall_margin" => self.reverse.wall_margin = f(v)?,
            "reverse.tol" => self.reverse.tol = f(v)?,
            "init.alpha" => self.init.alpha = f(v)?,
            "init.eps" => self.init.eps = f(v)?,
            "init.k" => self.init.k = v.parse().map_err(|_| format!("{key}: '{v}' is not a non-negative integer"))?,
            "sweep.alpha" => self.sweep.alpha = parse_axis(key, v)?,
            "sweep.eps" => self.sweep.eps = parse_axis(key, v)?,
            "sweep.k" => {
                self.sweep.k = v
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| format!("{key}: '{s}' is not a non-negative integer")))
                    .collect::<std::result::Result<_, _>>()?
            }
            "out.dir" => {
                if v.is_empty() {
                    return Err(format!("{key}: must not be empty"));
                }
                self.out_dir = PathBuf::from(v)
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "grid.nx" => self.nx.to_string(),
            "grid.ny" => self.ny.to_string(),
            "grid.lx" => self.lx.to_string(),
            "grid.ly" => self.ly.to_string(),
            "fluid.mu" => self.fluid.mu.to_string(),
            "fluid.lambda" => self.fluid.lambda.to_string(),
            "fluid.rho0" => self.fluid.rho0.to_string(),
            "fluid.cs" => self.fluid.cs.to_string(),
            "fluid.fx" => self.fluid.f[0].to_string(),
            "fluid.fy" => self.fluid.f[1].to_string(),
            "bench.px" => self.px.to_string(),
            "bench.h" => self.h.to_string(),
            "run.t_end" => self.run.t_end.to_string(),
            "run.cfl" => self.run.cfl.to_string(),
            "run.sample_every" => self.run.sample_every.to_string(),
            "run.snapshot_every" => self.run.snapshot_every.to_string(),
            "run.tol_residual" => self.run.tol_residual.to_string(),
            "run.tol_steady" => self.run.tol_steady.to_string(),
            "run.blowup_ratio" => self.run.blowup_ratio.to_string(),
            "run.energy_ratio" => self.run.energy_ratio.to_string(),
            "run.little_o_factor" => self.run.little_o_factor.to_string(),
            "run.big_o_bound" => self.run.big_o_bound.to_string(),
            "run.freeze_dt" => self.run.freeze_dt.to_string(),
            "run.early_samples" => self.run.early_samples.to_string(),
            "reverse.t0" => self.reverse.t0.to_string(),
            "reverse.t_end" => self.reverse.t_end.to_string(),
            "reverse.steps" => self.reverse.steps.to_string(),
            "reverse.j0" => self.reverse.j0.to_string(),
            "reverse.wall_margin" => self.reverse.wall_margin.to_string(),
            "reverse.tol" => self.reverse.tol.to_string(),
            "init.alpha" => self.init.alpha.to_string(),
            "init.eps" => self.init.eps.to_string(),
            "init.k" => self.init.k.to_string(),
            "sweep.alpha" => join(&self.sweep.alpha),
            "sweep.eps" => join(&self.sweep.eps),
            "sweep.k" => join(&self.sweep.k),
            "out.dir" => self.out_dir.display().to_string(),
            _ => unreachable!("key table and getter disagree on '{key}'"),
        }
    }

    /// Re-checks every bound; constraint errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.fluid.validate()?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::constraint(key, format!("must be > 0, got {v}")))
            }
        };
        positive("bench.h", self.h)?;
        if (self.h - self.ly).abs() > 1e-12 * self.h {
            return Err(Error::constraint("bench.h", format!("must equal grid.ly = {}", self.ly)));
        }
        let r = &self.run;
        positive("run.t_end", r.t_end)?;
        if !(r.cfl > 0.0 && r.cfl <= 1.0) {
            return Err(Error::constraint("run.cfl", format!("must lie in (0, 1], got {}", r.cfl)));
        }
        if r.sample_every == 0 {
            return Err(Error::constraint("run.sample_every", "must be > 0"));
        }
        positive("run.tol_residual", r.tol_residual)?;
        positive("run.tol_steady", r.tol_steady)?;
        if !(r.blowup_ratio > 1.0) {
            return Err(Error::constraint("run.blowup_ratio", format!("must be > 1, got {}", r.blowup_ratio)));
        }
        positive("run.energy_ratio", r.energy_ratio)?;
        if !(r.little_o_factor > 0.0 && r.little_o_factor <= 1.0) {
            return Err(Error::constraint(
                "run.little_o_factor",
                format!("must lie in (0, 1], got {}", r.little_o_factor),
            ));
        }
        positive("run.big_o_bound", r.big_o_bound)?;
        if r.early_samples < 16 {
            return Err(Error::constraint("run.early_samples", "must be >= 16"));
        }
        let v = &self.reverse;
        positive("reverse.t0", v.t0)?;
        if !(v.t_end > v.t0) {
            return Err(Error::constraint("reverse.t_end", format!("must be > reverse.t0 = {}", v.t0)));
        }
        if v.steps == 0 {
            return Err(Error::constraint("reverse.steps", "must be > 0"));
        }
        if !(v.wall_margin >= 0.0) {
            return Err(Error::constraint("reverse.wall_margin", "must be >= 0"));
        }
        positive("reverse.tol", v.tol)?;
        SweepAxes::new(self.sweep.alpha.clone(), self.sweep.eps.clone(), self.sweep.k.clone())?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn benchmark(&self) -> Result<SteadyBenchmark> {
        SteadyBenchmark::poiseuille(self.h, self.px)
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        let r = &self.run;
        ClassifyOptions {
            t_end: r.t_end,
            cfl: r.cfl,
            sample_every: r.sample_every,
            tol_steady: r.tol_steady,
            energy_ratio: r.energy_ratio,
            little_o_factor: r.little_o_factor,
            blowup_ratio: r.blowup_ratio,
            freeze_dt: r.freeze_dt,
            early_samples: r.early_samples,
            map: reciprocal_map(),
        }
    }

    /// Options of a single forward run, without reference or fixed step.
    pub fn run_options(&self) -> RunOptions {
        let mut o = RunOptions::new(self.run.t_end, self.run.cfl, self.run.sample_every)
            .with_snapshots(self.run.snapshot_every);
        o.blowup_ratio = self.run.blowup_ratio;
        o
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: n + 1, message };
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key '{key}'")));
        }
        cfg.set(key, value).map_err(err)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text of `cfg`, one `key=value` line per key.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    for (key, _) in KEYS {
        writeln!(out, "{key}={}", cfg.get(key)).expect("writing to a String");
    }
    out
}

/// Key, default value and description for every key.
pub fn defaults_help() -> String {
    let d = RunConfig::default();
    let mut out = String::new();
    for (key, doc) in KEYS {
        writeln!(out, "  {key}={}  ({doc})", d.get(key)).expect("writing to a String");
    }
    out
}
