use proptest::prelude::*;
use wickwz_core::gbm::xi_pi;
use wickwz_core::kernels::{Direction, KernelSlice, Partition, StepFunction};
use wickwz_core::paths::{sample_path, stoch_exp};
use wickwz_core::solver::{reconstruct_x, Drift, InitialCondition, ModelSpec, SolverConfig};

fn partition_strategy() -> impl Strategy<Value = Partition> {
    (prop::collection::vec(0.05f64..1.0, 1..8), 0.5f64..3.0).prop_map(|(gaps, horizon)| {
        let total: f64 = gaps.iter().sum();
        let mut pts = vec![0.0];
        let mut acc = 0.0;
        for g in &gaps[..gaps.len() - 1] {
            acc += g / total * horizon;
            pts.push(acc);
        }
        pts.push(horizon);
        Partition::new(pts).unwrap()
    })
}

fn slice_in(p: &Partition, a: f64, b: f64) -> KernelSlice {
    let t = p.horizon();
    KernelSlice::new(p, a.min(b) * t, a.max(b) * t).unwrap()
}

fn drift_strategy() -> impl Strategy<Value = Drift> {
    prop_oneof![
        Just(Drift::Zero),
        (-1.0f64..1.0).prop_map(|beta| Drift::Linear { beta }),
        (-1.5f64..1.5, 0.1f64..2.0).prop_map(|(a, c)| Drift::TanhLogistic { a, c }),
        (-1.5f64..1.5, 0.1f64..3.0).prop_map(|(a, omega)| Drift::SinDrift { a, omega }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn haar_is_orthogonal_to_every_slice(p in partition_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let h = Direction::haar(&p);
        prop_assert!(h.is_admissible());
        prop_assert!(h.inner_slice(&slice_in(&p, a, b)).abs() <= 1e-12);
    }

    #[test]
    fn shift_composition(
        p in partition_strategy(),
        seed in any::<u64>(),
        (a1, b1, a2, b2) in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        e1 in -3.0f64..3.0,
        e2 in -3.0f64..3.0,
    ) {
        let ps = sample_path(&p, 4, seed).unwrap();
        let k1 = slice_in(&p, a1, b1);
        let k2 = slice_in(&p, a2, b2);
        let twice = ps.shifted(&k1, e1).unwrap().shifted(&k2, e2).unwrap();
        let combined = k1.to_step().scaled(e1).add_scaled(&k2.to_step(), e2);
        let once = ps.shifted(&combined, 1.0).unwrap();
        for (x, y) in twice.values().iter().zip(once.values()) {
            prop_assert!((x - y).abs() <= 1e-13);
        }
        let back = twice.shifted(&combined, -1.0).unwrap();
        for (x, y) in back.values().iter().zip(ps.values()) {
            prop_assert!((x - y).abs() <= 1e-13);
        }
    }

    #[test]
    fn haar_integral_ignores_kernel_shifts(
        p in partition_strategy(), seed in any::<u64>(),
        a in 0.0f64..1.0, b in 0.0f64..1.0, eps in -5.0f64..5.0,
    ) {
        let h = Direction::haar(&p);
        let ps = sample_path(&p, 2, seed).unwrap();
        let before = ps.wiener_integral(h.step()).unwrap();
        let after = ps.shifted(&slice_in(&p, a, b), eps).unwrap().wiener_integral(h.step()).unwrap();
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn stoch_exp_reflection(
        p in partition_strategy(), seed in any::<u64>(),
        a in 0.0f64..1.0, b in 0.0f64..1.0,
        sig in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let ps = sample_path(&p, 2, seed).unwrap();
        let t = p.horizon();
        let sigma = &sig[..p.num_intervals()];
        let k = KernelSlice::weighted(&p, a.min(b) * t, a.max(b) * t, sigma).unwrap();
        let up = stoch_exp(&ps, &k).unwrap().value;
        let down = stoch_exp(&ps, &k.scaled(-1.0)).unwrap().value;
        prop_assert!((up * down / (-k.norm_sq()).exp() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn step_functions_are_bilinear(
        v1 in prop::collection::vec(-3.0f64..3.0, 4),
        v2 in prop::collection::vec(-3.0f64..3.0, 3),
        a in -2.0f64..2.0,
    ) {
        let f = StepFunction::new(vec![0.0, 0.2, 0.5, 0.7, 1.0], v1).unwrap();
        let g = StepFunction::new(vec![0.0, 0.5, 0.6, 1.0], v2).unwrap();
        let lhs = f.add_scaled(&g, a).norm_sq();
        let rhs = f.norm_sq() + 2.0 * a * f.inner(&g) + a * a * g.norm_sq();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn xi_is_a_unit_sawtooth(p in partition_strategy(), u in 0.0f64..1.0) {
        let t = u * p.horizon() * 0.999_999;
        let xi = xi_pi(&p, 0.0, t).unwrap();
        prop_assert!((0.0..1.0).contains(&xi));
        let k = p.locate(t).unwrap();
        let (lo, hi) = p.interval(k);
        prop_assert!((xi - (t - lo) / (hi - lo)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_starts_at_initial_datum(drift in drift_strategy(), seed in any::<u64>(), k0 in 0usize..4) {
        let p = Partition::uniform(4, 1.0).unwrap();
        let s = k0 as f64 * 0.25;
        let spec = ModelSpec::new(
            &p, drift, None,
            InitialCondition::LognormalExp { y0: 1.0, direction: Direction::haar(&p) },
            s,
        ).unwrap();
        let ps = sample_path(&p, 4, seed).unwrap();
        let x = reconstruct_x(&ps, &spec, s, &SolverConfig::default()).unwrap();
        prop_assert_eq!(x, spec.init().value(&ps).unwrap());
    }

    #[test]
    fn closed_form_derivative_is_positive(drift in drift_strategy(), seed in any::<u64>()) {
        let p = Partition::uniform(4, 1.0).unwrap();
        let h = Direction::haar(&p);
        let spec = ModelSpec::new(
            &p, drift, None,
            InitialCondition::LognormalExp { y0: 1.0, direction: h.clone() },
            0.0,
        ).unwrap();
        let ps = sample_path(&p, 8, seed).unwrap();
        let d = wickwz_core::malliavin::dhx_closed(&ps, &spec, &h, 1.0, &SolverConfig::default()).unwrap();
        prop_assert!(d > 0.0);
    }
}
