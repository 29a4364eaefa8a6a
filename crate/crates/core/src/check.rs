//! Self-check suite: one worked example per operation on small grids, each
//! reported as a named pass/fail line.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::admissibility::{self, ClassifyOptions, InitialDataSpec, SweepAxes, Verdict};
use crate::bench::{self, SteadyBenchmark};
use crate::config;
use crate::fields::{self, Grid2D, ScalarField2D, VectorField2D};
use crate::reversal::{self, ReversedPoiseuilleProblem};
use crate::solver::{self, FluidParams, RunOptions, SimState};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Largest error away from the walls and the periodic seam.
fn interior_max(f: &ScalarField2D, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let g = *f.grid();
    let mut m = 0.0_f64;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            m = m.max((f.get(i, j) - exact(g.x(i), g.y(j))).abs());
        }
    }
    m
}

type Check = (&'static str, fn() -> (bool, String));

fn checks() -> Vec<Check> {
    vec![
        ("gradient of y^2", || {
            let g = Grid2D::new(16, 64, 1.0, 1.0).unwrap();
            let e = interior_max(&fields::gradient(&ScalarField2D::from_fn(g, |_, y| y * y)).uy, |_, y| 2.0 * y);
            (e <= 1e-12, format!("max error {e:.3e}"))
        }),
        ("divergence of channel shear", || {
            let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
            let d = fields::divergence(&VectorField2D::from_fn(g, |_, y| (y * (1.0 - y), 0.0))).max_abs();
            (d <= 1e-12, format!("max |div| {d:.3e}"))
        }),
        ("curl_z of rigid rotation", || {
            let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
            let w = fields::curl_z(&VectorField2D::from_fn(g, |x, y| (-y, x)));
            let e = interior_max(&w, |_, _| 2.0);
            (e <= 1e-12, format!("max error {e:.3e}"))
        }),
        ("curl_of_curl of channel shear", || {
            let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
            let c = fields::curl_of_curl(&VectorField2D::from_fn(g, |_, y| (y * (1.0 - y), 0.0)));
            let e = interior_max(&c.ux, |_, _| 2.0).max(interior_max(&c.uy, |_, _| 0.0));
            (e <= 1e-10, format!("max error {e:.3e}"))
        }),
        ("advection of channel shear", || {
            let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
            let a = fields::advection_div(&VectorField2D::from_fn(g, |_, y| (y * (1.0 - y), 0.0)));
            let m = a.max_norm();
            (m <= 1e-12, format!("max |adv| {m:.3e}"))
        }),
        ("laplacian of y^2", || {
            let g = Grid2D::new(16, 64, 1.0, 1.0).unwrap();
            let e = interior_max(&fields::laplacian(&ScalarField2D::from_fn(g, |_, y| y * y)), |_, _| 2.0);
            (e <= 1e-10, format!("max error {e:.3e}"))
        }),
        ("pressure_of and eps_rho_of", || {
            let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
            let params = FluidParams { cs: 10.0, ..FluidParams::default() };
            let p = solver::pressure_of(&ScalarField2D::constant(g, 1.01), &params).get(3, 3);
            let e = solver::eps_rho_of(&ScalarField2D::constant(g, 1.02), &params).get(3, 3);
            (close(p, 1.0, 1e-12) && close(e, 0.02, 1e-15), format!("p={p} eps={e}"))
        }),
        ("rhs fixed point at Poiseuille", || {
            let (state, params) = poiseuille(16, 17);
            let (dv, dr) = solver::rhs(&state, &params);
            let m = dv.max_abs_interior().max(dr.max_abs());
            (m <= 1e-10, format!("max |rhs| {m:.3e}"))
        }),
        ("stable_dt viscous limit", || {
            let g = Grid2D::new(64, 65, 1.0, 1.0).unwrap();
            let params = FluidParams { cs: 10.0, ..FluidParams::default() };
            let dt = solver::stable_dt(&SimState::rest(g, &params), &params, 0.5).unwrap();
            (close(dt, 0.5 / 32768.0, 1e-18), format!("dt={dt:.6e}"))
        }),
        ("step keeps Poiseuille fixed", || {
            let (state, params) = poiseuille(16, 17);
            let dt = solver::stable_dt(&state, &params, 1.0).unwrap();
            let next = solver::step(&state, &params, dt);
            let mut d = 0.0_f64;
            for (a, b) in next.vel.ux.data().iter().zip(state.vel.ux.data()) {
                d = d.max((a - b).abs());
            }
            (d <= 1e-9 && !next.diverged, format!("L∞ change {d:.3e}"))
        }),
        ("oversized step diverges", || {
            let (mut state, params) = poiseuille(16, 17);
            let g = *state.grid();
            for j in 1..g.ny() - 1 {
                for i in 0..g.nx() {
                    let v = state.vel.ux.get(i, j) + 0.01 * (2.0 * PI * g.x(i)).sin();
                    state.vel.ux.set(i, j, v);
                }
            }
            let dt = 100.0 * solver::stable_dt(&state, &params, 1.0).unwrap();
            let mut integ = solver::Integrator::new(g);
            let mut n = 0;
            while n < 200 && !state.diverged {
                integ.step(&mut state, &params, dt);
                n += 1;
            }
            (state.diverged, format!("diverged after {n} steps"))
        }),
        ("run_forward from Poiseuille", || {
            let (state, params) = poiseuille(16, 17);
            let opts = RunOptions::new(0.05, 1.0, 50).with_reference(state.vel.clone()).with_snapshots(1);
            let traj = solver::run_forward(&state, &params, &opts).unwrap();
            let d = traj.samples.iter().filter_map(|s| s.diagnostics.l2_distance_to_reference).fold(0.0, f64::max);
            let rate = solver::dudt_norm(&traj, 1).unwrap().value;
            (d <= 1e-6 && rate <= 1e-8, format!("max l2 {d:.3e}, dudt {rate:.3e}"))
        }),
        ("poiseuille_profile values", || {
            let a = bench::poiseuille_profile(0.5, 1.0, -2.0, 1.0).unwrap();
            let b = bench::poiseuille_profile(0.25, 1.0, -2.0, 1.0).unwrap();
            (close(a, 0.25, 1e-15) && close(b, 0.1875, 1e-15), format!("{a}, {b}"))
        }),
        ("steady_residual of Poiseuille", || {
            let g = Grid2D::new(64, 64, 1.0, 1.0).unwrap();
            let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
            let params = FluidParams::default();
            let vel = b.velocity_field(g, 1.0, 1.0);
            let rho = ScalarField2D::constant(g, 1.0);
            let p = ScalarField2D::from_fn(g, |x, _| -2.0 * x);
            let r = bench::steady_residual(&vel, &rho, &p, &params, [0.0; 2], 1e-8);
            (r.passed && r.max_norm <= 1e-10, r.record())
        }),
        ("as_initial_state residual", || {
            let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
            let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
            let (s, p) = bench::as_initial_state(&b, g, &FluidParams::default()).unwrap();
            let zero = ScalarField2D::zeros(g);
            let r = bench::steady_residual(&s.vel, &s.rho, &zero, &p, p.f, 1e-8);
            (r.passed, r.record())
        }),
        ("reciprocal map values", || {
            let m = reversal::reciprocal_map();
            let ok = m.forward(2.0).unwrap() == 0.5
                && close(m.forward(m.inverse(7.0).unwrap()).unwrap(), 7.0, 1e-14)
                && close(m.inverse_derivative(10.0).unwrap(), -0.01, 1e-17);
            (ok, "g(2), g(g_inv(7)), dg_inv(10)".into())
        }),
        ("validate_map outcomes", || {
            let rec = reversal::validate_map(&reversal::reciprocal_map(), 50).unwrap().passed();
            let id = reversal::TimeMap::new("identity", |t| t, |t| t, |_| 1.0, (0.0, f64::INFINITY)).unwrap();
            let v = reversal::validate_map(&id, 50).unwrap();
            let first = v.first_violation.map(|f| f.sample);
            (rec && first == Some(0), format!("reciprocal pass={rec}, identity first violation {first:?}"))
        }),
        ("chain_rule_factor values", || {
            let m = reversal::reciprocal_map();
            let (a, b) = (reversal::chain_rule_factor(&m, 1.0).unwrap(), reversal::chain_rule_factor(&m, 2.0).unwrap());
            (close(a, -1.0, 1e-15) && close(b, -0.25, 1e-15), format!("{a}, {b}"))
        }),
        ("decomposition_ode_rhs values", || {
            let v = [
                reversal::decomposition_ode_rhs(1.0, 3.0, -8.0).unwrap(),
                reversal::decomposition_ode_rhs(0.0, 1.0, -8.0).unwrap(),
                reversal::decomposition_ode_rhs(0.5, 2.0, -8.0).unwrap(),
            ];
            (v == [0.0, -8.0, -1.0], format!("{v:?}"))
        }),
        ("solve_decomposition closed form", || {
            let p = ReversedPoiseuilleProblem::new(1.0, 1.0, -2.0, vec![0.5]).unwrap();
            let s = reversal::solve_decomposition(&p, 0.9, 1.0, 1e4, 10_000).unwrap();
            let rel = s.relative_difference(0);
            (rel <= 1e-6, format!("j_inf={:.10e} rel diff {rel:.3e}", s.j_inf_numeric[0]))
        }),
        ("reversed steady limit", || {
            let v = reversal::reversed_steady_limit(0.25, 0.25 + (-8.0f64).exp(), -8.0, 1.0).unwrap();
            (close(v, 1.25, 1e-12), format!("{v}"))
        }),
        ("little-o and big-O checks", || {
            let inc: Vec<f64> = (1..=20).map(f64::from).collect();
            let dec: Vec<f64> = (0..20).map(|k| 2f64.powi(-k)).collect();
            let env = |t: f64| (-8.0 / t).exp();
            let a = reversal::check_little_o(&inc.iter().map(|&t| (t, t.powi(-3))).collect::<Vec<_>>(), |t| t * t, 0.1);
            let b = reversal::check_little_o(&inc.iter().map(|&t| (t, t * t)).collect::<Vec<_>>(), |t| t * t, 0.1);
            let c = reversal::check_big_o(&dec.iter().map(|&t| (t, env(t))).collect::<Vec<_>>(), env, 10.0);
            let d = reversal::check_big_o(&dec.iter().map(|&t| (t, 1.0)).collect::<Vec<_>>(), env, 10.0);
            let got = [a, b, c, d].map(|r| r.map(|v| v.passed).unwrap_or(false));
            (got == [true, false, true, false], format!("{got:?}"))
        }),
        ("generate_initial perturbation peak", || {
            // x = 1/8 and y = 1/2 are grid points
            let g = Grid2D::new(20, 17, 1.0, 1.0).unwrap();
            let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
            let spec = InitialDataSpec::new(0.0, 0.01, 2).unwrap();
            let s = admissibility::generate_initial(&spec, &b, g, &FluidParams::default()).unwrap();
            let m = s.vel.ux.max_abs();
            (close(m, 0.01, 1e-15), format!("max |u| {m:.6e}"))
        }),
        ("classify and sweep of steady start", || {
            let g = Grid2D::new(12, 12, 1.0, 1.0).unwrap();
            let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
            let params = FluidParams::default();
            let opts = ClassifyOptions { t_end: 0.05, ..ClassifyOptions::default() };
            let spec = InitialDataSpec::new(1.0, 0.0, 1).unwrap();
            let r = admissibility::classify(&spec, &b, g, &params, &opts).unwrap();
            let axes = SweepAxes::new(vec![1.0], vec![0.0], vec![1]).unwrap();
            let set = admissibility::sweep(&axes, &b, g, &params, &opts, 1, &BTreeMap::new(), &|_, _| {}).unwrap();
            let same = set.results.len() == 1 && set.results[0].csv_row() == r.csv_row();
            (r.verdict == Verdict::Admissible && same, format!("verdict {}, sweep matches {same}", r.verdict))
        }),
        ("continuity_probe rejects zero delta", || {
            let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
            let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
            let spec = InitialDataSpec::new(1.0, 0.0, 1).unwrap();
            let r = admissibility::continuity_probe(&spec, 0.0, &b, g, &FluidParams::default(), &ClassifyOptions::default());
            (r.is_err(), "delta = 0 rejected".into())
        }),
        ("parse_config examples", || {
            let empty = config::parse_config("").map(|c| c == config::RunConfig::default()).unwrap_or(false);
            let msg = config::parse_config("fluid.mu=-1").err().map(|e| e.to_string()).unwrap_or_default();
            let text = config::emit_config(&config::RunConfig::default());
            let round = config::parse_config(&text).map(|c| config::emit_config(&c) == text).unwrap_or(false);
            let ok = empty && msg.contains("mu") && msg.contains("must be > 0") && round;
            (ok, format!("defaults={empty} round-trip={round} error='{msg}'"))
        }),
    ]
}

fn poiseuille(nx: usize, ny: usize) -> (SimState, FluidParams) {
    let g = Grid2D::new(nx, ny, 1.0, 1.0).unwrap();
    let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
    bench::as_initial_state(&b, g, &FluidParams::default()).unwrap()
}

/// Runs every check; a panicking check counts as a failure.
pub fn run_checks() -> Vec<CheckOutcome> {
    checks()
        .into_iter()
        .map(|(name, f)| match std::panic::catch_unwind(f) {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(_) => CheckOutcome { name, passed: false, detail: "panicked".into() },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_checks() {
            assert!(c.passed, "{}", c.line());
        }
    }
}
