use gcxgc_core::registration::{
    build_kernel, e_step, initial_sigma2, objective, register, update_sigma, KernelForm, Mode,
    RegistrationConfig, Transform,
};
use gcxgc_core::Point;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(r: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<Point<f64>> {
    (0..n)
        .map(|_| [r.random_range(0.0..span), r.random_range(0.0..span)])
        .collect()
}

fn dist2(a: Point<f64>, b: Point<f64>) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Random hybrid transform over the given basis points.
fn random_transform(r: &mut ChaCha8Rng, y: &[Point<f64>], mode: Mode) -> Transform<f64> {
    let basis = build_kernel(y, r.random_range(0.5..4.0), KernelForm::AsPrinted).unwrap();
    let mut t = Transform::identity(mode, 0, Some(basis)).unwrap();
    t.scale = r.random_range(0.8..1.2);
    t.shift[0] = r.random_range(-3.0..3.0);
    for w in t.weights.iter_mut() {
        w[1] = r.random_range(-1.0..1.0);
    }
    t
}

/// `T(y)` written out from the model equations.
fn model_image(t: &Transform<f64>, y: &[Point<f64>], p: Point<f64>) -> Point<f64> {
    let beta = t.basis.as_ref().unwrap().beta();
    let disp = |axis: usize| -> f64 {
        y.iter()
            .zip(&t.weights)
            .map(|(ym, w)| (-dist2(p, *ym).sqrt() / (2.0 * beta)).exp() * w[axis])
            .sum()
    };
    [t.scale * p[0] + t.shift[0], p[1] + disp(1)]
}

#[test]
fn initial_sigma_matches_double_loop() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (x, y) = (cloud(&mut r, 17, 10.0), cloud(&mut r, 11, 10.0));
        let mut s = 0.0;
        for a in &x {
            for b in &y {
                s += dist2(*a, *b);
            }
        }
        let expect = s / (2.0 * 17.0 * 11.0);
        assert!((initial_sigma2(&x, &y) - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn e_step_sigma_update_and_objective_match_direct_evaluation() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (n, m) = (r.random_range(3..15), r.random_range(2..12));
        let (x, y) = (cloud(&mut r, n, 10.0), cloud(&mut r, m, 10.0));
        let t = random_transform(&mut r, &y, Mode::Hybrid);
        let (sigma2, w, lambda) = (
            r.random_range(0.5..5.0),
            r.random_range(0.0..0.9),
            r.random_range(0.0..3.0),
        );
        let moved: Vec<Point<f64>> = y.iter().map(|&p| model_image(&t, &y, p)).collect();

        let post = e_step(&x, &y, &t, sigma2, w).unwrap();
        let c = w / (1.0 - w) * m as f64 / n as f64 * std::f64::consts::TAU * sigma2;
        let mut np = 0.0;
        let mut weighted = 0.0;
        let mut nll = 0.0;
        for (j, xn) in x.iter().enumerate() {
            let q: Vec<f64> = moved
                .iter()
                .map(|&ym| (-dist2(*xn, ym) / (2.0 * sigma2)).exp())
                .collect();
            let denom: f64 = q.iter().sum::<f64>() + c;
            for i in 0..m {
                let p = q[i] / denom;
                assert!((post.get(i, j) - p).abs() <= 1e-12);
                np += p;
                weighted += p * dist2(*xn, moved[i]);
            }
            assert!((post.noise_mass()[j] - c / denom).abs() <= 1e-12);
            let density = (1.0 - w) / (m as f64 * std::f64::consts::TAU * sigma2)
                * q.iter().sum::<f64>()
                + w / n as f64;
            nll -= density.ln();
        }
        let s2 = update_sigma(&x, &y, &t, &post, 1e-12).unwrap();
        let expect = weighted / (2.0 * np);
        assert!((s2 - expect).abs() <= 1e-10 * expect);

        let g = t.basis.as_ref().unwrap();
        let mut penalty = 0.0;
        for axis in 0..2 {
            for i in 0..m {
                for k in 0..m {
                    penalty += t.weights[i][axis] * g.g(i, k) * t.weights[k][axis];
                }
            }
        }
        let e = objective(&x, &y, &t, sigma2, w, lambda).unwrap();
        let expect = nll + 0.5 * lambda * penalty;
        assert!(
            (e - expect).abs() <= 1e-9 * expect.abs().max(1.0),
            "{e} vs {expect}"
        );
    }
}

#[test]
fn transform_points_reproduce_model_at_basis_and_elsewhere() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let y = cloud(&mut r, 15, 20.0);
        let t = random_transform(&mut r, &y, Mode::Hybrid);
        let at_basis = t.transform_points(&y);
        let moved = t.moved_reference(&y);
        let queries = cloud(&mut r, 10, 30.0);
        for (i, p) in y.iter().enumerate() {
            let expect = model_image(&t, &y, *p);
            for axis in 0..2 {
                assert!((at_basis[i][axis] - expect[axis]).abs() <= 1e-12);
                assert!((moved[i][axis] - expect[axis]).abs() <= 1e-12);
            }
        }
        for (q, got) in queries.iter().zip(t.transform_points(&queries)) {
            let expect = model_image(&t, &y, *q);
            assert!((got[0] - expect[0]).abs() <= 1e-12 && (got[1] - expect[1]).abs() <= 1e-12);
        }
    }
}

#[test]
fn axis_one_shift_is_recovered() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let y = cloud(&mut r, 80, 100.0);
    let x: Vec<Point<f64>> = y.iter().map(|p| [p[0] + 3.0, p[1]]).collect();
    let res = register(&x, &y, &RegistrationConfig::default()).unwrap();
    assert!((res.transform.t() - 3.0).abs() <= 1e-2 * 100.0);
    assert!((res.transform.s() - 1.0).abs() <= 1e-3);
}

#[test]
fn exact_hybrid_image_drives_sigma_to_floor() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let y = cloud(&mut r, 40, 100.0);
    let x: Vec<Point<f64>> = y
        .iter()
        .map(|p| [1.02 * p[0] - 1.5, p[1] + 0.8 * (p[0] / 25.0).sin()])
        .collect();
    let cfg = RegistrationConfig {
        w: 0.0,
        max_iter: 1000,
        ..RegistrationConfig::default()
    };
    let res = register(&x, &y, &cfg).unwrap();
    let floor = res.config.sigma_floor.unwrap();
    assert_eq!(res.sigma2(), floor);
}

#[test]
fn objective_never_increases_in_any_mode() {
    for seed in 0..12u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let y = cloud(&mut r, 25, 60.0);
        let mut x: Vec<Point<f64>> = y
            .iter()
            .map(|p| {
                [
                    1.1 * p[0] + 2.0 + r.random_range(-0.5..0.5),
                    p[1] + r.random_range(-0.5..0.5),
                ]
            })
            .collect();
        x.extend(cloud(&mut r, 4, 60.0));
        for mode in [Mode::Hybrid, Mode::Rigid, Mode::Nonrigid] {
            for kernel in [KernelForm::AsPrinted, KernelForm::Squared] {
                let cfg = RegistrationConfig {
                    mode,
                    kernel,
                    w: 0.2,
                    ..RegistrationConfig::default()
                };
                let res = register(&x, &y, &cfg).unwrap();
                for pair in res.objective_trajectory.windows(2) {
                    assert!(
                        pair[1] <= pair[0] + 1e-9,
                        "{mode:?} {kernel:?}: {} -> {}",
                        pair[0],
                        pair[1]
                    );
                }
                assert!(res.posterior.max_column_defect() <= 1e-12);
            }
        }
    }
}

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Hybrid), Just(Mode::Rigid), Just(Mode::Nonrigid)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residuals_are_translation_equivariant(
        seed in 0u64..1000,
        mode in mode_strategy(),
        dx in -50.0f64..50.0,
        dy in -50.0f64..50.0,
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let y = cloud(&mut r, 20, 40.0);
        let x: Vec<Point<f64>> = y
            .iter()
            .map(|p| [0.95 * p[0] + 1.0 + r.random_range(-0.3..0.3), p[1] + 0.5 * (p[0] / 8.0).cos()])
            .collect();
        let cfg = RegistrationConfig { mode, w: 0.1, ..RegistrationConfig::default() };
        let shift = |pts: &[Point<f64>]| -> Vec<Point<f64>> { pts.iter().map(|p| [p[0] + dx, p[1] + dy]).collect() };
        let (xs, ys) = (shift(&x), shift(&y));
        let a = register(&x, &y, &cfg).unwrap();
        let b = register(&xs, &ys, &cfg).unwrap();
        let ma = a.transform.transform_points(&y);
        let mb = b.transform.transform_points(&ys);
        for (xn, xsn) in x.iter().zip(&xs) {
            for (p, q) in ma.iter().zip(&mb) {
                let ra = dist2(*xn, *p).sqrt();
                let rb = dist2(*xsn, *q).sqrt();
                prop_assert!((ra - rb).abs() <= 1e-9, "{ra} vs {rb}");
            }
        }
    }

    #[test]
    fn hybrid_axes_are_separated(seed in 0u64..1000, s in 0.5f64..2.0, t in -10.0f64..10.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let y = cloud(&mut r, 12, 20.0);
        let base = random_transform(&mut r, &y, Mode::Hybrid);
        let pts = cloud(&mut r, 30, 25.0);
        let mut rescaled = base.clone();
        rescaled.scale = s;
        rescaled.shift[0] = t;
        let mut unwarped = base.clone();
        for w in unwarped.weights.iter_mut() {
            w[1] = r.random_range(-5.0..5.0);
        }
        let p0 = base.transform_points(&pts);
        let p1 = rescaled.transform_points(&pts);
        let p2 = unwarped.transform_points(&pts);
        for i in 0..pts.len() {
            prop_assert_eq!(p0[i][1], p1[i][1]);
            prop_assert_eq!(p0[i][0], p2[i][0]);
        }
    }
}
