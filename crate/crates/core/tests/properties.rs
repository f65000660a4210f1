use khk::cli::ExperimentConfig;
use khk::hkbasis::{hk_nullspace, iterate_orbit, Observable};
use khk::integrals::eval_i0;
use khk::systems::{clebsch_condition_residual, continuous_invariants, KirchhoffParams, PlanarFamilyParams};
use khk::verify::{check_reversibility, is_regular};
use khk::{build_system, QuadraticVectorField, SystemConfig, SystemDescriptor, SystemKind};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    -1.0..1.0f64
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.6..0.6f64, n)
}

fn field(n: usize) -> impl Strategy<Value = QuadraticVectorField> {
    (
        prop::collection::vec(unit(), n * n * n),
        prop::collection::vec(unit(), n * n),
        prop::collection::vec(unit(), n),
    )
        .prop_map(move |(q, l, c)| {
            let mut f = QuadraticVectorField::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        f.add_quadratic(i, j, k, q[(i * n + j) * n + k]);
                    }
                    f.add_linear(i, j, l[i * n + j]);
                }
                f.add_constant(i, c[i]);
            }
            f
        })
}

fn six_dim_kind() -> impl Strategy<Value = SystemKind> {
    prop::sample::select(vec![
        SystemKind::GeneralClebsch,
        SystemKind::FirstClebsch,
        SystemKind::SecondClebsch,
        SystemKind::Kirchhoff,
        SystemKind::Lagrange,
    ])
}

fn system(kind: SystemKind) -> SystemDescriptor {
    build_system(&SystemConfig::default_for(kind)).unwrap()
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn step_is_reversible(f in field(4), x in state(4), eps in -0.3..0.3f64) {
        let Ok(fwd) = f.kahan_step(&x, eps) else { return Ok(()) };
        prop_assume!(fwd.delta.abs() > 1e-2);
        let Ok(back) = f.kahan_step(&fwd.next, -eps) else { return Ok(()) };
        prop_assume!(back.delta.abs() > 1e-2);
        let err: f64 = back.next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10 * (1.0 + inf_norm(&x)), "err {err}");
    }

    #[test]
    fn accepted_steps_have_small_residual(f in field(5), x in state(5), eps in -0.3..0.3f64) {
        let Ok(step) = f.kahan_step(&x, eps) else { return Ok(()) };
        prop_assert!(step.residual <= 1e-12, "residual {}", step.residual);
        let again = f.step_residual(&x, &step.next, eps).unwrap();
        prop_assert!(again <= 1e-12);
    }

    #[test]
    fn zero_step_is_identity(f in field(3), x in state(3)) {
        let step = f.kahan_step(&x, 0.0).unwrap();
        prop_assert_eq!(step.next, x);
        prop_assert_eq!(step.delta, 1.0);
    }

    #[test]
    fn quadratic_polarization_is_symmetric_and_bilinear(
        f in field(4), x in state(4), u in state(4), y in state(4), s in unit()
    ) {
        let q = f.quadratic_part();
        let sum: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + s * b).collect();
        let lhs = q.polarize(&sum, &y).unwrap();
        let (qx, qu) = (q.polarize(&x, &y).unwrap(), q.polarize(&u, &y).unwrap());
        let swapped = q.polarize(&y, &x).unwrap();
        for i in 0..4 {
            prop_assert!((lhs[i] - qx[i] - s * qu[i]).abs() < 1e-13);
            prop_assert!((qx[i] - swapped[i]).abs() < 1e-15);
        }
        let diag = q.polarize(&x, &x).unwrap();
        let value = q.evaluate(&x).unwrap();
        for i in 0..4 {
            prop_assert!((diag[i] - value[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_identity_on_random_fields(f in field(4), x in state(4), eps in -0.3..0.3f64) {
        let Ok(step) = f.kahan_step(&x, eps) else { return Ok(()) };
        prop_assume!(step.delta.abs() > 1e-2);
        let det = f.map_jacobian(&x, eps).unwrap().determinant();
        let back = f.delta(&step.next, -eps).unwrap();
        prop_assert!((det * step.delta - back).abs() <= 1e-11 * (1.0 + back.abs()));
    }

    #[test]
    fn i0_is_even_in_eps(kind in six_dim_kind(), x in state(6), eps in 0.0..0.4f64) {
        let d = system(kind);
        prop_assume!(x[2].abs() > 1e-3);
        let (plus, minus) = (eval_i0(&d, &x, eps), eval_i0(&d, &x, -eps));
        if let (Ok(a), Ok(b)) = (plus, minus) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn m3_is_preserved_exactly(lagrange in any::<bool>(), x in state(6), eps in -0.3..0.3f64) {
        let d = system(if lagrange { SystemKind::Lagrange } else { SystemKind::Kirchhoff });
        let Ok(step) = d.field.kahan_step(&x, eps) else { return Ok(()) };
        prop_assert!((step.next[2] - x[2]).abs() <= 1e-14);
    }

    #[test]
    fn continuous_invariants_are_conserved_by_their_flow(kind in six_dim_kind(), x in state(6)) {
        let d = system(kind);
        let v = d.field.evaluate(&x).unwrap();
        for (name, h) in continuous_invariants(&d) {
            let grad = khk::numdiff::gradient_of(&*h, &x);
            let rate: f64 = grad.iter().zip(&v).map(|(g, f)| g * f).sum();
            let scale = 1.0 + grad.iter().zip(&v).map(|(g, f)| (g * f).abs()).sum::<f64>();
            prop_assert!(rate.abs() <= 1e-6 * scale, "{name}: {rate}");
        }
    }

    #[test]
    fn kirchhoff_satisfies_clebsch_condition(a1 in 0.5..2.0f64, a3 in -2.0..2.0f64, b1 in unit(), b3 in unit()) {
        prop_assume!(a3.abs() > 0.1);
        let r = clebsch_condition_residual([a1, a1, a3], [b1, b1, b3]).unwrap();
        prop_assert!(r.abs() <= 1e-12 * (1.0 + (b1 - b3).abs() / a1.min(a3.abs())));
        let k = KirchhoffParams { a1, a3, b1, b3 };
        prop_assert!(build_system(&SystemConfig::Kirchhoff(k)).is_ok());
    }

    #[test]
    fn planar_field_components(
        a in unit(), b in unit(), c in unit(), ell in prop::collection::vec(unit(), 2), ell0 in unit(), x in state(2)
    ) {
        let params = PlanarFamilyParams { a, b, c, ell, ell0, extra: Vec::new() };
        let d = build_system(&SystemConfig::PlanarFamily(params.clone())).unwrap();
        let v = d.field.evaluate(&x).unwrap();
        let l = params.ell_at(&x);
        prop_assert!((v[0] - l * (b * x[0] + c * x[1])).abs() < 1e-14);
        prop_assert!((v[1] + l * (a * x[0] + b * x[1])).abs() < 1e-14);
    }

    #[test]
    fn independent_observables_have_no_null_space(kind in six_dim_kind(), x in state(6)) {
        let d = system(kind);
        prop_assume!(is_regular(&d, &x, 0.05));
        let orbit = iterate_orbit(&d.field, &x, 0.05, 12).unwrap();
        prop_assume!(orbit.pole_at().is_none());
        let obs = [
            Observable::point("m1", |x| x[0]),
            Observable::point("p2", |x| x[4]),
            Observable::constant("1", 1.0),
        ];
        prop_assert_eq!(hk_nullspace(&orbit, &obs, 10).unwrap().null_dim, 0);
    }

    #[test]
    fn config_round_trips(kind_index in 0..6usize, eps in -0.5..0.5f64, steps in 0..5000usize, seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::for_kind(SystemKind::ALL[kind_index]);
        cfg.eps = eps;
        cfg.steps = steps;
        cfg.seed = seed;
        let text = cfg.to_canonical_json();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_canonical_json(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reports_are_deterministic(kind in six_dim_kind(), seed in any::<u64>()) {
        let d = system(kind);
        let a = check_reversibility(&d, 20, 0.1, seed);
        let b = check_reversibility(&d, 20, 0.1, seed);
        prop_assert_eq!(a, b);
    }
}
