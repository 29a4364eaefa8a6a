use proptest::prelude::*;

use wellpose::bench::{poiseuille_profile, steady_residual, SteadyBenchmark};
use wellpose::config::{emit_config, parse_config, RunConfig};
use wellpose::fields::*;
use wellpose::reversal::{check_big_o, check_little_o, reciprocal_map};
use wellpose::solver::{rhs, FluidParams, SimState};

fn grid() -> impl Strategy<Value = Grid2D> {
    (6usize..20, 6usize..20, 0.5f64..2.0, 0.5f64..2.0).prop_map(|(nx, ny, lx, ly)| Grid2D::new(nx, ny, lx, ly).unwrap())
}

fn coeffs<const N: usize>() -> impl Strategy<Value = [f64; N]> {
    proptest::array::uniform(-1.0f64..1.0)
}

/// Largest deviation over rows `rows` and columns `cols`.
fn max_err(
    f: &ScalarField2D,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    exact: impl Fn(f64, f64) -> f64,
) -> f64 {
    let g = *f.grid();
    let mut m = 0.0_f64;
    for j in rows {
        for i in cols.clone() {
            m = m.max((f.get(i, j) - exact(g.x(i), g.y(j))).abs());
        }
    }
    m
}

fn periodic_field(g: Grid2D, c: [f64; 6]) -> ScalarField2D {
    let k = 2.0 * std::f64::consts::PI / g.lx();
    ScalarField2D::from_fn(g, |x, y| {
        c[0] * (k * x).sin() + c[1] * (2.0 * k * x).cos() * y + c[2] * y * y + c[3] * (k * x + c[4] * y).sin() + c[5]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stencils_exact_on_quadratics(g in grid(), c in coeffs::<6>()) {
        // f = c0 + c1 x + c2 y + c3 x² + c4 xy + c5 y²
        let f = ScalarField2D::from_fn(g, |x, y| c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y);
        let (ny, nx) = (g.ny(), g.nx());
        let e = [
            max_err(&d_dx(&f), 0..ny, 1..nx - 1, |x, y| c[1] + 2.0 * c[3] * x + c[4] * y),
            max_err(&d_dy(&f), 0..ny, 1..nx - 1, |x, y| c[2] + c[4] * x + 2.0 * c[5] * y),
            max_err(&d2_dx2(&f), 0..ny, 1..nx - 1, |_, _| 2.0 * c[3]),
            max_err(&d2_dy2(&f), 0..ny, 0..nx, |_, _| 2.0 * c[5]),
            max_err(&laplacian(&f), 0..ny, 1..nx - 1, |_, _| 2.0 * (c[3] + c[5])),
        ];
        for (k, e) in e.iter().enumerate() {
            prop_assert!(*e <= 1e-10, "operator {k}: error {e:e}");
        }
    }

    #[test]
    fn wall_second_derivative_exact_on_cubics(g in grid(), c in coeffs::<4>()) {
        let f = ScalarField2D::from_fn(g, |_, y| c[0] + c[1] * y + c[2] * y * y + c[3] * y * y * y);
        let e = max_err(&d2_dy2(&f), 0..g.ny(), 0..g.nx(), |_, y| 2.0 * c[2] + 6.0 * c[3] * y);
        prop_assert!(e <= 1e-9, "error {e:e}");
    }

    #[test]
    fn divergence_of_gradient_is_laplacian(g in grid(), c in coeffs::<6>()) {
        let f = ScalarField2D::from_fn(g, |x, y| c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y);
        let dg = divergence(&gradient(&f));
        let lap = laplacian(&f);
        let mut m = 0.0_f64;
        for j in 1..g.ny() - 1 {
            for i in 2..g.nx() - 2 {
                m = m.max((dg.get(i, j) - lap.get(i, j)).abs());
            }
        }
        prop_assert!(m <= 1e-10, "difference {m:e}");
    }

    #[test]
    fn curl_of_curl_is_minus_vector_laplacian_when_solenoidal(g in grid(), c in coeffs::<4>()) {
        // velocity from the cubic stream function c0 x³ + c1 x²y + c2 xy² + c3 y³
        let v = VectorField2D::from_fn(g, |x, y| {
            (c[1] * x * x + 2.0 * c[2] * x * y + 3.0 * c[3] * y * y, -(3.0 * c[0] * x * x + 2.0 * c[1] * x * y + c[2] * y * y))
        });
        let cc = curl_of_curl(&v);
        let vl = vector_laplacian(&v);
        let mut m = 0.0_f64;
        for j in 1..g.ny() - 1 {
            for i in 2..g.nx() - 2 {
                m = m.max((cc.ux.get(i, j) + vl.ux.get(i, j)).abs()).max((cc.uy.get(i, j) + vl.uy.get(i, j)).abs());
            }
        }
        prop_assert!(m <= 1e-9, "difference {m:e}");
    }

    #[test]
    fn operators_commute_with_periodic_shift(g in grid(), c in coeffs::<6>(), s in 0usize..32) {
        let s = s % g.nx();
        let f = periodic_field(g, c);
        let fs = f.shift_x(s);
        let same = |a: &ScalarField2D, b: &ScalarField2D| a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() <= 1e-12);
        prop_assert!(same(&d_dx(&fs), &d_dx(&f).shift_x(s)));
        prop_assert!(same(&d_dy(&fs), &d_dy(&f).shift_x(s)));
        prop_assert!(same(&laplacian(&fs), &laplacian(&f).shift_x(s)));
        let v = VectorField2D::new(f.clone(), periodic_field(g, [c[5], c[4], c[3], c[2], c[1], c[0]]));
        prop_assert!(same(&curl_z(&v.shift_x(s)), &curl_z(&v).shift_x(s)));
        prop_assert!(same(&divergence(&v.shift_x(s)), &divergence(&v).shift_x(s)));
    }

    #[test]
    fn rhs_commutes_with_periodic_shift(c in coeffs::<6>(), s in 0usize..12) {
        let g = Grid2D::new(12, 10, 1.0, 1.0).unwrap();
        let params = FluidParams::default();
        let vel = VectorField2D::new(periodic_field(g, c).map(|u| 0.1 * u), periodic_field(g, [c[1], c[0], c[3], c[2], c[5], c[4]]).map(|u| 0.1 * u));
        let rho = periodic_field(g, [c[2], c[3], 0.0, c[0], c[1], 0.0]).map(|r| 1.0 + 0.01 * r);
        let state = SimState::new(vel.clone(), rho.clone(), 0.0).unwrap();
        let shifted = SimState::new(vel.shift_x(s), rho.shift_x(s), 0.0).unwrap();
        let (dv, dr) = rhs(&state, &params);
        let (dvs, drs) = rhs(&shifted, &params);
        let close = |a: &ScalarField2D, b: &ScalarField2D| a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() <= 1e-11);
        prop_assert!(close(&dvs.ux, &dv.ux.shift_x(s)));
        prop_assert!(close(&dvs.uy, &dv.uy.shift_x(s)));
        prop_assert!(close(&drs, &dr.shift_x(s)));
    }

    #[test]
    fn profile_symmetric_and_linear_in_px(mu in 0.1f64..10.0, px in -10.0f64..10.0, h in 0.1f64..5.0, s in 0.0f64..1.0) {
        let y = s * h;
        let u = poiseuille_profile(y, mu, px, h).unwrap();
        let mirrored = poiseuille_profile(h - y, mu, px, h).unwrap();
        let scale = (px * h * h / mu).abs().max(1e-300);
        prop_assert!((u - mirrored).abs() <= 1e-14 * scale);
        let doubled = poiseuille_profile(y, mu, 2.0 * px, h).unwrap();
        prop_assert!((doubled - 2.0 * u).abs() <= 1e-14 * scale);
        prop_assert_eq!(poiseuille_profile(0.0, mu, px, h).unwrap(), 0.0);
        prop_assert!(poiseuille_profile(h, mu, px, h).unwrap().abs() <= 1e-15 * scale);
        let peak = poiseuille_profile(0.5 * h, mu, px, h).unwrap();
        prop_assert!((peak + px * h * h / (8.0 * mu)).abs() <= 1e-14 * scale);
    }

    #[test]
    fn steady_residual_scales_with_px_imbalance(px in -5.0f64..5.0, extra in -5.0f64..5.0) {
        let g = Grid2D::new(16, 17, 1.0, 1.0).unwrap();
        let b = SteadyBenchmark::poiseuille(1.0, px).unwrap();
        let vel = b.velocity_field(g, 1.0, 1.0);
        let p = ScalarField2D::from_fn(g, |x, _| (px + extra) * x);
        let r = steady_residual(&vel, &ScalarField2D::constant(g, 1.0), &p, &FluidParams::default(), [0.0; 2], 1e-8);
        prop_assert!((r.max_norm - extra.abs()).abs() <= 1e-10);
    }

    #[test]
    fn little_o_verdict_ignores_scale(p in -4i32..5, a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let samples: Vec<(f64, f64)> = (0..24).map(|k| { let t = 10f64.powf(k as f64 / 8.0); (t, a * t.powi(p)) }).collect();
        let base = check_little_o(&samples, |t| t * t, 0.1).unwrap().passed;
        let scaled = check_little_o(&samples, |t| b * t * t, 0.1).unwrap().passed;
        prop_assert_eq!(base, scaled);
        prop_assert_eq!(base, p < 2);
    }

    #[test]
    fn big_o_verdict_ignores_scale_and_respects_bound(c in -10.0f64..-1.0, d in -10.0f64..-1.0, s in 1e-3f64..1e3, bound in 1.0f64..100.0) {
        let samples: Vec<(f64, f64)> = (0..16).map(|k| { let t = 2f64.powf(-(k as f64) / 4.0); (t, (d / t).exp()) }).collect();
        let env = |t: f64| (c / t).exp();
        let v = check_big_o(&samples, env, bound).unwrap();
        let scaled = check_big_o(&samples, |t| s * env(t), bound).unwrap();
        prop_assert_eq!(v.passed, scaled.passed);
        if v.passed {
            prop_assert!(check_big_o(&samples, env, 2.0 * bound).unwrap().passed);
        }
        if d <= c {
            prop_assert!(v.passed);
        }
    }

    #[test]
    fn reciprocal_map_round_trip(tp in 1e-3f64..1e3) {
        let m = reciprocal_map();
        let t = m.inverse(tp).unwrap();
        prop_assert!((m.forward(t).unwrap() - tp).abs() <= 1e-14 * tp);
        let h = 1e-6 * t;
        let dg = (m.forward(t + h).unwrap() - m.forward(t - h).unwrap()) / (2.0 * h);
        prop_assert!((m.inverse_derivative(tp).unwrap() * dg - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn config_round_trips(nx in 4usize..200, ny in 4usize..200, mu in 1e-3f64..1e3, cs in 1e-2f64..1e3,
                          cfl in 0.01f64..1.0, eps in proptest::collection::vec(0.0f64..1.0, 1..5), k in proptest::collection::vec(0u32..8, 1..4)) {
        let mut c = RunConfig { nx, ny, ..RunConfig::default() };
        c.fluid.mu = mu;
        c.fluid.cs = cs;
        c.run.cfl = cfl;
        c.sweep.eps = eps;
        c.sweep.k = k;
        let text = emit_config(&c);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(emit_config(&back), text);
    }
}
