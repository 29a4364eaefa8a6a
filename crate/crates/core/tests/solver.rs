use std::f64::consts::PI;

use wellpose::admissibility::{generate_initial, InitialDataSpec};
use wellpose::bench::{as_initial_state, SteadyBenchmark};
use wellpose::fields::{Grid2D, ScalarField2D, VectorField2D};
use wellpose::solver::*;

fn perturbed(n: usize) -> (SimState, FluidParams) {
    let g = Grid2D::new(n, n, 1.0, 1.0).unwrap();
    let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
    let spec = InitialDataSpec::new(1.0, 0.05, 1).unwrap();
    let params = FluidParams::default();
    (generate_initial(&spec, &b, g, &params).unwrap(), spec.forced_params(&b, &params))
}

#[test]
fn mass_is_conserved_per_step() {
    let (mut state, params) = perturbed(24);
    let dt = stable_dt(&state, &params, 1.0).unwrap();
    let mut integ = Integrator::new(*state.grid());
    let mut mass = state.total_mass();
    for _ in 0..500 {
        integ.step(&mut state, &params, dt);
        let m = state.total_mass();
        assert!(((m - mass) / mass).abs() <= 1e-12, "drift {:e}", (m - mass) / mass);
        mass = m;
    }
}

#[test]
fn unforced_kinetic_energy_never_grows() {
    let g = Grid2D::new(24, 24, 1.0, 1.0).unwrap();
    let params = FluidParams::default();
    let vel = VectorField2D::from_fn(g, |x, y| {
        let env = 4.0 * y * (1.0 - y);
        (0.2 * env + 0.05 * (2.0 * PI * x).sin() * env, 0.03 * (4.0 * PI * x).cos() * env * env)
    });
    let rho = ScalarField2D::from_fn(g, |x, _| 1.0 + 1e-3 * (2.0 * PI * x).cos());
    let mut state = SimState::new(vel, rho, 0.0).unwrap();
    let mut integ = Integrator::new(g);
    let mut ke = state.kinetic_energy();
    for n in 0..2000 {
        let dt = stable_dt(&state, &params, 1.0).unwrap();
        integ.step(&mut state, &params, dt);
        let next = state.kinetic_energy();
        assert!(next <= ke * (1.0 + 1e-12), "step {n}: {ke:e} -> {next:e}");
        ke = next;
    }
}

#[test]
fn runs_are_bitwise_deterministic() {
    let (state, params) = perturbed(16);
    let opts = RunOptions::new(0.05, 1.0, 10).with_snapshots(5);
    let a = run_forward(&state, &params, &opts).unwrap();
    let b = run_forward(&state, &params, &opts).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.final_state.vel, b.final_state.vel);
    assert_eq!(a.final_state.rho, b.final_state.rho);
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ta).unwrap();
    b.write_csv(&mut tb).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn poiseuille_survives_ten_thousand_steps() {
    let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
    let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
    let (mut state, params) = as_initial_state(&b, g, &FluidParams::default()).unwrap();
    let reference = state.vel.clone();
    let dt = stable_dt(&state, &params, 1.0).unwrap();
    let mut integ = Integrator::new(g);
    for _ in 0..10_000 {
        integ.step(&mut state, &params, dt);
    }
    let d = diagnostics(&state, &params, Some(&reference));
    assert!(!state.diverged);
    assert!(d.l2_distance_to_reference.unwrap() <= 1e-6);
    assert!(d.max_abs_eps_rho <= 1e-12);
}

#[test]
fn oversized_step_truncates_trajectory() {
    let (state, params) = perturbed(16);
    let dt = 100.0 * stable_dt(&state, &params, 1.0).unwrap();
    let opts = RunOptions::new(1.0, 1.0, 1).with_fixed_dt(dt);
    let traj = run_forward(&state, &params, &opts).unwrap();
    assert!(traj.diverged);
    assert!(traj.steps <= 200, "{} steps", traj.steps);
    assert!(traj.last().diverged);
    assert!(traj.last().t < 1.0);
}

#[test]
fn shear_mode_rate_decays_at_discrete_rate() {
    // u = sin(πy) is solenoidal and self-advection free; each mode of the
    // discrete diffusion operator decays at μ(2 − 2cos(π dy))/dy²/ρ₀
    let g = Grid2D::new(8, 33, 1.0, 1.0).unwrap();
    let params = FluidParams::default();
    let vel = VectorField2D::from_fn(g, |_, y| ((PI * y).sin(), 0.0));
    let state = SimState::new(vel, ScalarField2D::constant(g, 1.0), 0.0).unwrap();
    let dy = g.dy();
    let sigma = params.mu * (2.0 - 2.0 * (PI * dy).cos()) / (dy * dy);
    let dt = 1e-4;
    let opts = RunOptions::new(0.1, 1.0, 50).with_fixed_dt(dt).with_snapshots(1);
    let traj = run_forward(&state, &params, &opts).unwrap();
    let expected = (-sigma * 50.0 * dt).exp();
    for k in 2..traj.samples.len() - 1 {
        let ratio = dudt_norm(&traj, k).unwrap().value / dudt_norm(&traj, k - 1).unwrap().value;
        assert!((ratio - expected).abs() <= 1e-6 * expected, "k={k}: {ratio} vs {expected}");
    }
}

#[test]
fn dudt_falls_back_to_last_finite_value() {
    let (state, params) = perturbed(16);
    let dt = 100.0 * stable_dt(&state, &params, 1.0).unwrap();
    let traj = run_forward(&state, &params, &RunOptions::new(1.0, 1.0, 1).with_fixed_dt(dt).with_snapshots(1)).unwrap();
    let last = traj.samples.len() - 1;
    let r = dudt_norm(&traj, last).unwrap();
    assert!(r.value.is_finite());
    if !traj.final_state.vel.all_finite() {
        assert!(r.diverged && r.sample < last);
    }
    let steady = {
        let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
        let b = SteadyBenchmark::poiseuille(1.0, -2.0).unwrap();
        let (s, p) = as_initial_state(&b, g, &FluidParams::default()).unwrap();
        run_forward(&s, &p, &RunOptions::new(0.01, 1.0, 5).with_snapshots(1)).unwrap()
    };
    assert!(dudt_norm(&steady, 1).unwrap().value <= 1e-9);
    assert!(dudt_norm(&steady, 0).is_err());
    let no_snaps = run_forward(&state, &params, &RunOptions::new(0.001, 1.0, 5)).unwrap();
    assert!(dudt_norm(&no_snaps, 1).is_err());
}
