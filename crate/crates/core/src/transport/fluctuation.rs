//! The mean-field fluctuation functional
//! `F_N(b, μ) = N⁻² Σ_{i≠j} E[(b(x_i, x_j) - b*μ(x_i))²]`, `x ~ μ^{⊗N}`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::limit::{moment_k, quantile_from_cdf, GridDensity};
use crate::model::{mean_field_drift_with_mean, pair_drift_into, ModelParams};
use crate::rng::{stream_rng, StreamTag};

/// Samples per independent random stream; fixes the work split so results
/// do not depend on the thread count.
const BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FnEstimate {
    pub n: usize,
    pub mc_samples: usize,
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    /// `4ε² (N-1)/N Var(μ)`.
    pub closed_form: f64,
    /// Mean of `(b(x,y) - b*μ(x))(b(x,z) - b*μ(x))` over independent `x, y, z`.
    pub cross_term: f64,
    pub cross_std_error: f64,
    /// Monte Carlo of the integrand `|b(x_i, x_j) - b(x_i - z, x_j)|²`,
    /// `z ~ μ`, weighted by `(N-1)/N`.
    pub definitional: f64,
    pub definitional_std_error: f64,
    /// `ε² ∫|z|² dμ`.
    pub bound_eps2_m2: f64,
    /// `4ε² ∫|z|² dμ`.
    pub bound_4eps2_m2: f64,
}

/// Law with a piecewise-constant density: samples are uniform inside cells.
struct CellSampler {
    cdf: Vec<f64>,
    half_width: f64,
    h: f64,
}

impl CellSampler {
    fn new(mu: &GridDensity) -> Self {
        Self { cdf: mu.cdf_edges(), half_width: mu.half_width, h: mu.cell_width() }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        quantile_from_cdf(&self.cdf, self.half_width, self.h, rng.random::<f64>())
    }
}

/// Mean and variance of the piecewise-constant density itself (the
/// midpoint variance plus the within-cell `h²/12`).
pub fn cell_law_mean_variance(mu: &GridDensity) -> (f64, f64) {
    let mean = mu.mean();
    let h = mu.cell_width();
    (mean, moment_k(mu, 2) - mean * mean + h * h / 12.0 * mu.mass())
}

#[derive(Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sq += v * v;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments { sum: self.sum + o.sum, sq: self.sq + o.sq }
    }

    fn mean_and_error(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        let mean = self.sum / n;
        let var = (self.sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

/// `4ε² (N-1)/N Var(μ)`, exact for the quadratic interaction.
pub fn f_n_closed_form(mu: &GridDensity, params: &ModelParams, n: usize) -> f64 {
    if !params.drift_enabled() {
        return 0.0;
    }
    let (_, var) = cell_law_mean_variance(mu);
    let nf = n as f64;
    4.0 * params.eps * params.eps * (nf - 1.0) / nf * var
}

/// Monte Carlo and closed-form values of `F_N` for a one-dimensional law.
pub fn f_n_functional(mu: &GridDensity, params: &ModelParams, n: usize, mc_samples: usize, seed: u64) -> Result<FnEstimate> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("F_N needs N >= 2, got {n}")));
    }
    if mc_samples < 2 {
        return Err(Error::InvalidParameter("need at least two Monte Carlo samples".into()));
    }
    let (mean, var) = cell_law_mean_variance(mu);
    let m2 = var + mean * mean;
    let sampler = CellSampler::new(mu);
    let eps = params.eps;
    let nf = n as f64;

    let blocks = mc_samples.div_ceil(BLOCK);
    let parts: Vec<[Moments; 3]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, StreamTag::Sampling, b as u64);
            let count = BLOCK.min(mc_samples - b * BLOCK);
            let mut x = vec![0.0; n];
            let mut fluct = vec![0.0; n];
            let (mut bij, mut bmf) = ([0.0], [0.0]);
            let mut acc = [Moments::default(); 3];
            for _ in 0..count {
                for xi in x.iter_mut() {
                    *xi = sampler.draw(&mut rng);
                }
                let mut total = 0.0;
                for i in 0..n {
                    mean_field_drift_with_mean(&x[i..i + 1], &[mean], params, &mut bmf);
                    for j in 0..n {
                        pair_drift_into(&x[i..i + 1], &x[j..j + 1], params, &mut bij);
                        fluct[j] = bij[0] - bmf[0];
                    }
                    fluct[i] = 0.0;
                    total += fluct.iter().map(|f| f * f).sum::<f64>();
                }
                acc[0].push(total / (nf * nf));

                let (xi, xj, xk) = (sampler.draw(&mut rng), sampler.draw(&mut rng), sampler.draw(&mut rng));
                mean_field_drift_with_mean(&[xi], &[mean], params, &mut bmf);
                pair_drift_into(&[xi], &[xj], params, &mut bij);
                let f1 = bij[0] - bmf[0];
                pair_drift_into(&[xi], &[xk], params, &mut bij);
                let f2 = bij[0] - bmf[0];
                acc[1].push(f1 * f2);

                let z = sampler.draw(&mut rng);
                pair_drift_into(&[xi], &[xj], params, &mut bij);
                let mut shifted = [0.0];
                pair_drift_into(&[xi - z], &[xj], params, &mut shifted);
                let diff = bij[0] - shifted[0];
                acc[2].push(diff * diff * (nf - 1.0) / nf);
            }
            acc
        })
        .collect();
    let mut acc = [Moments::default(); 3];
    for p in parts {
        for k in 0..3 {
            acc[k] = acc[k].merge(p[k]);
        }
    }
    let (mc_estimate, mc_std_error) = acc[0].mean_and_error(mc_samples);
    let (cross_term, cross_std_error) = acc[1].mean_and_error(mc_samples);
    let (definitional, definitional_std_error) = acc[2].mean_and_error(mc_samples);
    let closed_form = f_n_closed_form(mu, params, n);
    Ok(FnEstimate {
        n,
        mc_samples,
        mc_estimate,
        mc_std_error,
        closed_form,
        cross_term,
        cross_std_error,
        definitional,
        definitional_std_error,
        bound_eps2_m2: eps * eps * m2,
        bound_4eps2_m2: 4.0 * eps * eps * m2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::GridSpec;

    #[test]
    fn vanishes_without_interaction() {
        let p = ModelParams::new(0.5, 0.0, 1).unwrap();
        let mu = GridDensity::gaussian(GridSpec::new(6.0, 600).unwrap(), 0.0, 1.0).unwrap();
        let f = f_n_functional(&mu, &p, 4, 2000, 1).unwrap();
        assert_eq!(f.closed_form, 0.0);
        assert!(f.mc_estimate.abs() < 1e-20);
    }

    #[test]
    fn closed_form_example() {
        let p = ModelParams::new(0.5, 0.1, 1).unwrap();
        let spec = GridSpec::new(8.0, 1600).unwrap();
        let mu = GridDensity::gaussian_with_second_moment(spec, 1.0).unwrap();
        let f = f_n_functional(&mu, &p, 2, 20_000, 9).unwrap();
        let (_, var) = cell_law_mean_variance(&mu);
        assert!((var - 1.0).abs() < 1e-4);
        assert!((f.closed_form - 0.02).abs() < 1e-5);
        assert!((f.mc_estimate - f.closed_form).abs() < 3.0 * f.mc_std_error);
        assert!(f.cross_term.abs() < 3.0 * f.cross_std_error);
    }

    #[test]
    fn result_is_reproducible() {
        let p = ModelParams::new(0.5, 0.1, 1).unwrap();
        let mu = GridDensity::gaussian(GridSpec::new(6.0, 300).unwrap(), 0.2, 0.6).unwrap();
        let a = f_n_functional(&mu, &p, 3, 5000, 4).unwrap();
        let b = f_n_functional(&mu, &p, 3, 5000, 4).unwrap();
        assert_eq!(a, b);
        assert!(f_n_functional(&mu, &p, 1, 5000, 4).is_err());
    }
}
