use chaoskit_core::limit::{moment_k, stationary_fixed_point, GridDensity, GridSpec};
use chaoskit_core::model::{mean_field_drift, pair_drift, stationary_m2_bound, ModelParams};
use chaoskit_core::particles::{
    langevin_samples, marginal_moment, simulate, simulate_coupled, tv_to_gibbs, CouplingMode, Observable,
    ParticleEnsemble, SimConfig,
};
use chaoskit_core::transport::brenier_map_1d;

#[test]
fn single_particle_samples_gibbs() {
    // with one particle the interaction vanishes and the invariant law is e^{-V}
    let params = ModelParams::new(0.1, 0.05, 1).unwrap();
    let cfg = SimConfig::new(1e-3, 7, 64).unwrap();
    let samples = langevin_samples(&params, 1, &cfg, 5.0, 0.5, 2000).unwrap();
    let tv = tv_to_gibbs(&samples, &params, -2.5, 2.5, 40);
    assert!(tv < 0.02, "TV = {tv}");
}

#[test]
fn free_diffusion_variance_grows_linearly() {
    let params = ModelParams::free_diffusion(1);
    let init = ParticleEnsemble::new(vec![0.5], 1, 0.0).unwrap();
    let cfg = SimConfig::new(1e-2, 11, 10_000).unwrap().with_record_interval(1.0);
    let out = simulate(&init, &params, &cfg, 1.0, &[]).unwrap();
    let xs: Vec<f64> = out.finals.iter().map(|e| e.positions[0]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // var of the sample variance of a Gaussian is 2 sigma^4 / (n - 1)
    let se = (2.0 * 4.0 / (n - 1.0)).sqrt();
    assert!((var - 2.0).abs() < 4.0 * se, "variance {var}");
    assert!((mean - 0.5).abs() < 4.0 * (2.0 / n).sqrt(), "mean {mean}");
}

#[test]
fn synchronous_coupling_without_interaction_has_no_gap() {
    let params = ModelParams::new(0.1, 0.0, 1).unwrap();
    let spec = GridSpec::for_params(&params, 256).unwrap();
    let mu0 = GridDensity::gaussian(spec, 0.0, 1.0).unwrap();
    let cfg = SimConfig::new(1e-3, 3, 8).unwrap().with_record_interval(0.1);
    let run = simulate_coupled(&mu0, &params, &cfg, 16, 1.0, CouplingMode::Synchronous, 0.0).unwrap();
    assert!(run.mean_gap.iter().all(|g| *g == 0.0));
}

#[test]
fn brenier_map_between_gaussians_is_affine() {
    let spec = GridSpec::new(12.0, 4096).unwrap();
    let nu = GridDensity::gaussian(spec, 0.0, 1.0).unwrap();
    let mu = GridDensity::gaussian(spec, 1.0, 4.0).unwrap();
    let map = brenier_map_1d(&nu, &mu).unwrap();
    for ((x, t), d) in map.grid.iter().zip(&map.values).zip(&map.derivative) {
        if x.abs() < 3.0 {
            assert!((t - (1.0 + 2.0 * x)).abs() < 5e-3, "T({x}) = {t}");
            assert!((d - 2.0).abs() < 5e-3, "T'({x}) = {d}");
        }
    }
}

#[test]
fn mean_field_drift_matches_quadrature() {
    let params = ModelParams::new(0.2, 0.07, 1).unwrap();
    let spec = GridSpec::new(6.0, 2048).unwrap();
    let mu = GridDensity::from_log_density(spec, |x| -(x - 0.4).powi(4) - 0.3 * x).unwrap();
    for &x in &[-1.5, -0.2, 0.0, 0.9, 2.0] {
        let h = mu.cell_width();
        let quad: f64 = (0..spec.n_cells).map(|k| pair_drift(&[x], &[mu.center(k)], &params)[0] * mu.values[k] * h).sum();
        let exact = mean_field_drift(&[x], &mu, &params).unwrap()[0];
        assert!((quad - exact).abs() < 1e-10 * (1.0 + exact.abs()), "x = {x}: {quad} vs {exact}");
    }
}

#[test]
fn long_run_second_moment_respects_stationary_bounds() {
    let params = ModelParams::new(0.1, 0.01, 1).unwrap();
    let init = ParticleEnsemble::zeros(32, 1);
    let cfg = SimConfig::new(1e-3, 5, 64).unwrap().with_record_interval(10.0);
    let out = simulate(&init, &params, &cfg, 20.0, &[Observable::Moment(2)]).unwrap();
    let m2 = marginal_moment(&out.finals, 2).unwrap();
    assert!(m2 <= stationary_m2_bound(params.a, params.eps, 1), "m2 = {m2}");

    // and it is close to the second moment of the stationary density
    let fp = stationary_fixed_point(GridSpec::for_params(&params, 2048).unwrap(), &params, 0.5, 1e-12).unwrap();
    let target = moment_k(&fp.density, 2);
    assert!((m2 - target).abs() < 0.05, "particles {m2}, limit {target}");
}
