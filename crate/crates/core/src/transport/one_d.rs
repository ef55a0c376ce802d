//! One-dimensional transport: quantile functions, the closed-form `W₂`,
//! monotone (Brenier) maps and the WJ dissipation functional.

use serde::Serialize;

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::limit::GridDensity;
use crate::model::{mean_field_drift_with_mean, ModelParams};

/// Lower bound applied to computed map derivatives.
pub const DERIVATIVE_FLOOR: f64 = 1e-12;

/// Piece of a quantile function: on `[u0, u1]` it runs linearly from `x0`
/// to `x1` (`x0 == x1` for an atom).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Segment {
    u0: f64,
    u1: f64,
    x0: f64,
    x1: f64,
}

impl Segment {
    fn at(&self, u: f64) -> f64 {
        if self.u1 <= self.u0 {
            return self.x0;
        }
        self.x0 + (self.x1 - self.x0) * ((u - self.u0) / (self.u1 - self.u0))
    }
}

/// Piecewise-linear generalized inverse CDF of a one-dimensional law.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileFn {
    segments: Vec<Segment>,
}

impl QuantileFn {
    /// Quantile of the piecewise-constant density (linear CDF within cells).
    pub fn from_grid(mu: &GridDensity) -> Self {
        let cdf = mu.cdf_edges();
        let total = cdf[mu.n_cells];
        let h = mu.cell_width();
        let segments = (0..mu.n_cells)
            .filter(|&k| mu.values[k] > 0.0)
            .map(|k| {
                let left = -mu.half_width + k as f64 * h;
                Segment { u0: cdf[k] / total, u1: cdf[k + 1] / total, x0: left, x1: left + h }
            })
            .collect();
        Self { segments }.closed()
    }

    /// Step quantile of a weighted 1-D point cloud.
    pub fn from_atoms(m: &DiscreteMeasure) -> Result<Self> {
        if m.dim != 1 {
            return Err(Error::InvalidParameter(format!("expected a 1-D measure, got dimension {}", m.dim)));
        }
        let mut atoms: Vec<(f64, f64)> = m.points.iter().copied().zip(m.weights.iter().copied()).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let mut acc = 0.0;
        let mut segments = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if w <= 0.0 {
                continue;
            }
            let u0 = acc / total;
            acc += w;
            segments.push(Segment { u0, u1: acc / total, x0: x, x1: x });
        }
        Ok(Self { segments }.closed())
    }

    /// Equal-weight samples (any order).
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Self::from_atoms(&DiscreteMeasure::uniform(samples.to_vec(), 1)?)
    }

    fn closed(mut self) -> Self {
        if let Some(first) = self.segments.first_mut() {
            first.u0 = 0.0;
        }
        if let Some(last) = self.segments.last_mut() {
            last.u1 = 1.0;
        }
        self
    }

    pub fn eval(&self, u: f64) -> f64 {
        let k = self.segments.partition_point(|s| s.u1 < u).min(self.segments.len() - 1);
        self.segments[k].at(u.clamp(self.segments[k].u0, self.segments[k].u1))
    }

    fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(self.segments.iter().map(|s| s.u1))
    }
}

/// `∫₀¹ |Q_a(u) - Q_b(u)|² du`, integrated exactly over the merged
/// breakpoints (both quantiles are linear between them).
pub fn quantile_distance_sq(qa: &QuantileFn, qb: &QuantileFn) -> f64 {
    let mut cuts: Vec<f64> = qa.breakpoints().chain(qb.breakpoints()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (mut ia, mut ib) = (0, 0);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        while qa.segments[ia].u1 < mid {
            ia += 1;
        }
        while qb.segments[ib].u1 < mid {
            ib += 1;
        }
        let (sa, sb) = (qa.segments[ia], qb.segments[ib]);
        let d0 = sa.at(lo) - sb.at(lo);
        let d1 = sa.at(hi) - sb.at(hi);
        total += (hi - lo) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    }
    total
}

/// A one-dimensional law for [`w2_1d`].
#[derive(Clone, Copy, Debug)]
pub enum Law1d<'a> {
    Grid(&'a GridDensity),
    Samples(&'a [f64]),
    Atoms(&'a DiscreteMeasure),
}

impl Law1d<'_> {
    pub fn quantile(&self) -> Result<QuantileFn> {
        match self {
            Law1d::Grid(g) => Ok(QuantileFn::from_grid(g)),
            Law1d::Samples(s) => QuantileFn::from_samples(s),
            Law1d::Atoms(m) => QuantileFn::from_atoms(m),
        }
    }
}

/// `W₂²(μ, ν)` by quantile coupling.
pub fn w2_1d(mu: Law1d<'_>, nu: Law1d<'_>) -> Result<f64> {
    Ok(quantile_distance_sq(&mu.quantile()?, &nu.quantile()?))
}

/// The optimal monotone map `T = F_μ⁻¹ ∘ F_ν` pushing `ν` to `μ`, sampled at
/// the centers of `ν`'s cells of positive mass.
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneMap {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    /// Mass of `ν` in the cell around each abscissa.
    pub weights: Vec<f64>,
}

impl MonotoneMap {
    /// Pointwise `T′ + 1/T′ - 2`.
    pub fn heat_integrand(&self) -> Vec<f64> {
        self.derivative.iter().map(|d| d + 1.0 / d - 2.0).collect()
    }
}

/// Cell of positive mass holding cumulative level `target`, and the
/// fraction of that cell below it.
fn locate(cum: &[f64], mass: &[f64], target: f64) -> Option<(usize, f64)> {
    let n = mass.len();
    let mut j = cum.partition_point(|&c| c < target).clamp(1, n) - 1;
    while j < n && mass[j] <= 0.0 {
        j += 1;
    }
    (j < n).then(|| (j, ((target - cum[j]) / mass[j]).clamp(0.0, 1.0)))
}

fn cumulative(mass: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(mass.map(|m| {
            acc += m;
            acc
        }))
        .collect()
}

/// Brenier map from `nu` to `mu`; `T′ = ν / (μ ∘ T)` by change of variables.
///
/// Quantile levels in the upper half are matched through survival functions
/// so that both tails keep full relative precision.
pub fn brenier_map_1d(nu: &GridDensity, mu: &GridDensity) -> Result<MonotoneMap> {
    let (hn, hm) = (nu.cell_width(), mu.cell_width());
    let mass_nu: Vec<f64> = nu.values.iter().map(|v| v * hn).collect();
    let mass_mu: Vec<f64> = mu.values.iter().map(|v| v * hm).collect();
    let mass_mu_rev: Vec<f64> = mass_mu.iter().rev().copied().collect();
    let cdf_nu = cumulative(mass_nu.iter().copied());
    let sf_nu = cumulative(mass_nu.iter().rev().copied());
    let cdf_mu = cumulative(mass_mu.iter().copied());
    let sf_mu = cumulative(mass_mu_rev.iter().copied());
    let (total_nu, total_mu) = (cdf_nu[nu.n_cells], cdf_mu[mu.n_cells]);
    let n = nu.n_cells;
    let mut map = MonotoneMap { grid: Vec::new(), values: Vec::new(), derivative: Vec::new(), weights: Vec::new() };
    for k in 0..n {
        if mass_nu[k] <= 0.0 {
            continue;
        }
        let below = cdf_nu[k] + 0.5 * mass_nu[k];
        let above = sf_nu[n - 1 - k] + 0.5 * mass_nu[k];
        let (j, t) = if below <= above {
            let (j, frac) = locate(&cdf_mu, &mass_mu, below / total_nu * total_mu)
                .ok_or_else(|| Error::Support(format!("source cell {k} maps outside the target support")))?;
            (j, -mu.half_width + (j as f64 + frac) * hm)
        } else {
            let (jr, frac) = locate(&sf_mu, &mass_mu_rev, above / total_nu * total_mu)
                .ok_or_else(|| Error::Support(format!("source cell {k} maps outside the target support")))?;
            let j = mu.n_cells - 1 - jr;
            (j, -mu.half_width + (j as f64 + 1.0 - frac) * hm)
        };
        let dens = mu.values[j] / total_mu;
        map.grid.push(nu.center(k));
        map.values.push(t);
        map.derivative.push((nu.values[k] / total_nu / dens).max(DERIVATIVE_FLOOR));
        map.weights.push(mass_nu[k] / total_nu);
    }
    if map.grid.is_empty() {
        return Err(Error::Support("source density has no mass".into()));
    }
    Ok(map)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WjValue {
    /// `∫ (T′ + 1/T′ - 2) dν`.
    pub heat_term: f64,
    /// Dissipation contributed by the drift,
    /// `-∫ ⟨b*(T#ν)(T(x)) - b*ν(x), T(x) - x⟩ ν(dx)`.
    pub drift_term: f64,
    /// The raw cross term `∬ ⟨b(T(x), T(y)) - b(x, y), T(x) - x⟩ ν(dx) ν(dy)`,
    /// equal to `-drift_term`.
    pub drift_cross: f64,
    /// `heat_term + drift_term`, the dissipation rate of `W₂²(μ, ν)` along the
    /// coupled flows; a WJ(κ) inequality reads `j ≥ κ W₂²(μ, ν)`.
    pub j: f64,
    /// Smallest pointwise heat integrand seen on the map.
    pub min_heat_integrand: f64,
}

/// WJ functional of `μ` relative to `ν` for the drift of `params`, in one
/// dimension.
///
/// Because `b` is affine in its second argument the double integral of the
/// cross term collapses to single integrals against the means of `ν` and
/// `T#ν`.
pub fn wj_functional_1d(mu: &GridDensity, nu: &GridDensity, params: &ModelParams) -> Result<WjValue> {
    let map = brenier_map_1d(nu, mu)?;
    let integrand = map.heat_integrand();
    let heat_term: f64 = integrand.iter().zip(&map.weights).map(|(f, w)| f * w).sum();
    let min_heat_integrand = integrand.iter().cloned().fold(f64::INFINITY, f64::min);

    let mean_nu: f64 = map.grid.iter().zip(&map.weights).map(|(x, w)| x * w).sum();
    let mean_push: f64 = map.values.iter().zip(&map.weights).map(|(t, w)| t * w).sum();
    let (mut bt, mut bx) = ([0.0], [0.0]);
    let mut drift_cross = 0.0;
    for k in 0..map.grid.len() {
        let (x, t) = (map.grid[k], map.values[k]);
        mean_field_drift_with_mean(&[t], &[mean_push], params, &mut bt);
        mean_field_drift_with_mean(&[x], &[mean_nu], params, &mut bx);
        drift_cross += (bt[0] - bx[0]) * (t - x) * map.weights[k];
    }
    let drift_term = -drift_cross;
    Ok(WjValue { heat_term, drift_term, drift_cross, j: heat_term + drift_term, min_heat_integrand })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::GridSpec;
    use crate::model::{grad_v, DriftMode};

    #[test]
    fn w2_examples() {
        let a = [0.3, -1.2, 2.5, 0.0];
        assert_eq!(w2_1d(Law1d::Samples(&a), Law1d::Samples(&a)).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.7).collect();
        assert!((w2_1d(Law1d::Samples(&a), Law1d::Samples(&shifted)).unwrap() - 0.49).abs() < 1e-12);
        let mu = DiscreteMeasure::uniform(vec![0.0, 1.0], 1).unwrap();
        let nu = DiscreteMeasure::uniform(vec![2.0, 3.0], 1).unwrap();
        assert!((w2_1d(Law1d::Atoms(&mu), Law1d::Atoms(&nu)).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn w2_grid_translation_by_whole_cells() {
        let spec = GridSpec::new(4.0, 400).unwrap();
        let mu = GridDensity::uniform(spec, -1.0, 1.0).unwrap();
        let nu = GridDensity::uniform(spec, -0.5, 1.5).unwrap();
        assert!((w2_1d(Law1d::Grid(&mu), Law1d::Grid(&nu)).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn grid_against_point_mass() {
        // W₂² between uniform[0,1] and δ₀ is 1/3
        let spec = GridSpec::new(2.0, 40).unwrap();
        let mu = GridDensity::uniform(spec, 0.0, 1.0).unwrap();
        let d = DiscreteMeasure::dirac(vec![0.0]);
        assert!((w2_1d(Law1d::Grid(&mu), Law1d::Atoms(&d)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brenier_identity_and_shift() {
        let spec = GridSpec::new(5.0, 500).unwrap();
        let nu = GridDensity::gaussian(spec, 0.0, 0.5).unwrap();
        let id = brenier_map_1d(&nu, &nu).unwrap();
        for (x, t) in id.grid.iter().zip(&id.values) {
            assert!((x - t).abs() < 1e-9);
        }
        assert!(id.derivative.iter().all(|d| (d - 1.0).abs() < 1e-9));

        let mu = GridDensity::gaussian(spec, 0.3, 0.5).unwrap();
        let map = brenier_map_1d(&nu, &mu).unwrap();
        // check away from the truncated tails
        for k in 0..map.grid.len() {
            if map.grid[k].abs() < 2.0 {
                assert!((map.values[k] - map.grid[k] - 0.3).abs() < 1e-6, "{}", map.grid[k]);
                assert!((map.derivative[k] - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wj_of_identical_measures_vanishes() {
        let p = ModelParams::new(0.3, 0.05, 1).unwrap();
        let spec = GridSpec::new(5.0, 400).unwrap();
        let nu = GridDensity::gaussian(spec, 0.1, 0.7).unwrap();
        let w = wj_functional_1d(&nu, &nu, &p).unwrap();
        assert!(w.heat_term.abs() < 1e-12 && w.drift_term.abs() < 1e-12 && w.j.abs() < 1e-12);
    }

    #[test]
    fn heat_term_of_dilation() {
        let p = ModelParams::free_diffusion(1);
        let spec = GridSpec::new(2.0, 400).unwrap();
        let nu = GridDensity::uniform(spec, 0.0, 1.0).unwrap();
        let mu = GridDensity::uniform(spec, 0.0, 2.0).unwrap();
        let w = wj_functional_1d(&mu, &nu, &p).unwrap();
        assert!((w.heat_term - 0.5).abs() < 1e-12, "{}", w.heat_term);
        assert_eq!(w.drift_term, 0.0);
    }

    #[test]
    fn drift_term_matches_closed_form() {
        let p = ModelParams::new(0.4, 0.1, 1).unwrap().with_drift(DriftMode::Full);
        let spec = GridSpec::new(5.0, 600).unwrap();
        let nu = GridDensity::gaussian(spec, 0.0, 0.4).unwrap();
        let mu = GridDensity::gaussian(spec, 0.5, 0.9).unwrap();
        let w = wj_functional_1d(&mu, &nu, &p).unwrap();
        let map = brenier_map_1d(&nu, &mu).unwrap();
        // ∫(V'(T) - V'(x))(T - x) dν - 2ε Var_ν(T - x)
        let mut conf = 0.0;
        let mut m = 0.0;
        let mut m2 = 0.0;
        for k in 0..map.grid.len() {
            let (x, t, wk) = (map.grid[k], map.values[k], map.weights[k]);
            conf += (grad_v(&[t], &p)[0] - grad_v(&[x], &p)[0]) * (t - x) * wk;
            m += (t - x) * wk;
            m2 += (t - x) * (t - x) * wk;
        }
        let oracle = conf - 2.0 * p.eps * (m2 - m * m);
        assert!((w.drift_term - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
        assert!((w.drift_cross + w.drift_term).abs() == 0.0);
    }
}
