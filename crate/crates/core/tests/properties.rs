use proptest::prelude::*;

use chaoskit_core::limit::{free_energy, FokkerPlanck, GridDensity, GridSpec, StepScratch};
use chaoskit_core::model::{
    grad_v, lemma41_bounds, potential_v, radius_a, system_drift, system_energy, ModelParams,
};
use chaoskit_core::particles::{
    coupled_step_with_mean, simulate, CoupledEnsemble, CouplingMode, CouplingScratch, Observable, ParticleEnsemble,
    SimConfig,
};
use chaoskit_core::transport::{brenier_map_1d, w2_1d, w2_exact_discrete, DiscreteMeasure, Law1d};

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (0.02f64..0.5, 0.0f64..0.99).prop_map(|(a, frac)| ModelParams::new(a, frac * a / 2.0, 1).unwrap())
}

fn cloud(n: usize, dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * dim)
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n)
}

fn measure(n: usize, dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (cloud(n, dim), weights(n)).prop_map(move |(p, w)| DiscreteMeasure::from_unnormalized(p, w, dim).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn limit_step_conserves_mass_and_sign(
        params in params_strategy(),
        mean in -0.5f64..0.5,
        var in 0.2f64..2.0,
        steps in 1usize..40,
    ) {
        let spec = GridSpec::for_params(&params, 256).unwrap();
        let mut mu = GridDensity::gaussian(spec, mean, var).unwrap();
        let solver = FokkerPlanck::new(spec, params);
        let mut scratch = StepScratch::default();
        let mut f_prev = free_energy(&mu, &params);
        for _ in 0..steps {
            solver.step_auto(&mut mu, f64::INFINITY, &mut scratch).unwrap();
            let f = free_energy(&mu, &params);
            prop_assert!(f <= f_prev + 1e-8, "free energy rose from {f_prev} to {f}");
            f_prev = f;
        }
        prop_assert!((mu.mass() - 1.0).abs() < 1e-12);
        prop_assert!(mu.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn heat_integrand_is_nonnegative(
        m0 in -0.5f64..0.5, v0 in 0.2f64..1.5,
        m1 in -0.5f64..0.5, v1 in 0.2f64..1.5,
    ) {
        let spec = GridSpec::new(6.0, 512).unwrap();
        let nu = GridDensity::gaussian(spec, m0, v0).unwrap();
        let mu = GridDensity::gaussian(spec, m1, v1).unwrap();
        let map = brenier_map_1d(&nu, &mu).unwrap();
        for h in map.heat_integrand() {
            prop_assert!(h >= -1e-12);
        }
    }

    #[test]
    fn w2_is_symmetric_and_translation_covariant(
        mu in measure(4, 2),
        nu in measure(5, 2),
        shift in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let ab = w2_exact_discrete(&mu, &nu).unwrap().cost;
        let ba = w2_exact_discrete(&nu, &mu).unwrap().cost;
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));

        let moved: Vec<f64> = mu.points.chunks_exact(2).flat_map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
        let moved = DiscreteMeasure::new(moved, mu.weights.clone(), 2).unwrap();
        let c = w2_exact_discrete(&mu, &moved).unwrap().cost;
        let s2 = shift[0] * shift[0] + shift[1] * shift[1];
        prop_assert!((c - s2).abs() <= 1e-9 * (1.0 + s2));
    }

    #[test]
    fn w2_triangle_inequality(a in measure(3, 1), b in measure(4, 1), c in measure(3, 1)) {
        let d = |x: &DiscreteMeasure, y: &DiscreteMeasure| w2_exact_discrete(x, y).unwrap().cost.max(0.0).sqrt();
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn exact_transport_agrees_with_quantile_coupling(a in measure(5, 1), b in measure(6, 1)) {
        let exact = w2_exact_discrete(&a, &b).unwrap().cost;
        let quantile = w2_1d(Law1d::Atoms(&a), Law1d::Atoms(&b)).unwrap();
        prop_assert!((exact - quantile).abs() <= 1e-9 * (1.0 + exact));
    }

    #[test]
    fn sample_w2_under_translation(x in cloud(20, 1), c in -3.0f64..3.0) {
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        let w = w2_1d(Law1d::Samples(&x), Law1d::Samples(&y)).unwrap();
        prop_assert!((w - c * c).abs() <= 1e-9 * (1.0 + c * c));
    }

    #[test]
    fn drift_and_energy_are_exchangeable(
        params in params_strategy(),
        x in cloud(6, 1),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let ens = ParticleEnsemble::new(x.clone(), 1, 0.0).unwrap();
        let permuted = ens.permuted(&perm);
        let b = system_drift(&ens.positions, &params);
        let bp = system_drift(&permuted.positions, &params);
        for (k, &p) in perm.iter().enumerate() {
            prop_assert!((bp[k] - b[p]).abs() <= 1e-12 * (1.0 + b[p].abs()));
        }
        let (e, ep) = (system_energy(&ens.positions, &params), system_energy(&permuted.positions, &params));
        prop_assert!((e - ep).abs() <= 1e-12 * (1.0 + e.abs()));
    }

    #[test]
    fn reflection_noise_is_an_isometry(
        x in cloud(3, 2),
        y in cloud(3, 2),
        noise in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let params = ModelParams::free_diffusion(2);
        let ex = ParticleEnsemble::new(x, 2, 0.0).unwrap();
        let ey = ParticleEnsemble::new(y, 2, 0.0).unwrap();
        let mut c = CoupledEnsemble::new(ex.clone(), ey.clone(), CouplingMode::Reflection, 0.0).unwrap();
        let dt = 0.01;
        coupled_step_with_mean(&mut c, &[0.0, 0.0], &params, dt, &noise, &mut CouplingScratch::default()).unwrap();
        for i in 0..3 {
            let step = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let dx = step(c.x.particle(i), ex.particle(i));
            let dy = step(c.y.particle(i), ey.particle(i));
            prop_assert!((dx - dy).abs() <= 1e-12);
        }
    }

    #[test]
    fn potential_bounds_hold(params in params_strategy(), x in -4.0f64..4.0, y in -4.0f64..4.0, m in cloud(4, 1)) {
        let r = radius_a(params.a);
        let m2 = m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64;
        let b = lemma41_bounds(r, m2, &params);

        // one-sided Lipschitz bound on -grad V
        let (gx, gy) = (grad_v(&[x], &params)[0], grad_v(&[y], &params)[0]);
        prop_assert!(-(gx - gy) * (x - y) <= b.one_sided * (x - y) * (x - y) + 1e-9);

        // convexity outside the ball of radius 2R
        let far = 2.0 * r + x.abs();
        let v2 = 12.0 * far * far - 2.0 * params.a;
        prop_assert!(v2 >= b.convex_outside);

        // V + eps W * mu on the ball of radius 3R, mu uniform on m
        let z = (x / 4.0) * 3.0 * r;
        let conv: f64 = -m.iter().map(|p| (z - p) * (z - p)).sum::<f64>() / m.len() as f64;
        prop_assert!((potential_v(&[z], &params) + params.eps * conv).abs() <= b.sup_v_eps + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_deterministic(params in params_strategy(), seed in any::<u64>(), x in cloud(5, 1)) {
        let init = ParticleEnsemble::new(x, 1, 0.0).unwrap();
        let cfg = SimConfig::new(1e-2, seed, 3).unwrap().with_record_interval(0.1);
        let obs = [Observable::Moment(2), Observable::Mean];
        let a = simulate(&init, &params, &cfg, 0.5, &obs).unwrap();
        let b = simulate(&init, &params, &cfg, 0.5, &obs).unwrap();
        prop_assert_eq!(a.finals, b.finals);
        prop_assert_eq!(a.records.len(), b.records.len());
        for (p, q) in a.records.iter().zip(&b.records) {
            prop_assert_eq!(p.value.to_bits(), q.value.to_bits());
        }
    }
}
