//! Double-well confinement `V(x) = |x|^4 - a|x|^2`, quadratic interaction
//! `W(u) = -|u|^2`, the drift fields built from them and the analytic
//! constants that control the Wasserstein contraction estimates.
//!
//! The pair drift is `b(x, y) = -∇V(x) - ε∇W(x - y)`. Because `∇W` is linear,
//! every convolution `b * μ` only depends on the first moment of `μ`; all
//! drift evaluations below use that reduction.

use serde::Serialize;

use crate::error::{Error, Result};

/// Whether the drift fields are active. `Disabled` turns the dynamics into
/// pure diffusion, which has closed-form moments and is used for calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DriftMode {
    Full,
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    /// Depth parameter of the double well.
    pub a: f64,
    /// Interaction strength.
    pub eps: f64,
    /// Space dimension.
    pub dim: usize,
    pub drift: DriftMode,
}

impl ModelParams {
    pub fn new(a: f64, eps: f64, dim: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("a must be positive, got {a}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        Ok(Self { a, eps, dim, drift: DriftMode::Full })
    }

    /// Brownian motion without drift (the potential terms are switched off).
    pub fn free_diffusion(dim: usize) -> Self {
        Self { a: 1.0, eps: 0.0, dim: dim.max(1), drift: DriftMode::Disabled }
    }

    pub fn with_drift(mut self, drift: DriftMode) -> Self {
        self.drift = drift;
        self
    }

    #[inline]
    pub fn drift_enabled(&self) -> bool {
        self.drift == DriftMode::Full
    }

    /// True when the constants of [`wj_constants`] certify a contraction,
    /// i.e. `eps < eps_a(a)` and `a` lies below the feasibility frontier.
    pub fn is_admissible(&self) -> bool {
        wj_constants(self.a, self.eps, self.dim).map(|c| c.feasible).unwrap_or(false)
    }
}

/// Anything with a total mass and a mean, which is all a convolution against
/// the quadratic interaction needs.
pub trait FirstMoment {
    fn total_mass(&self) -> f64;
    fn first_moment(&self) -> Vec<f64>;
}

/// A point mass, handy as a test measure.
#[derive(Clone, Debug)]
pub struct Dirac(pub Vec<f64>);

impl FirstMoment for Dirac {
    fn total_mass(&self) -> f64 {
        1.0
    }
    fn first_moment(&self) -> Vec<f64> {
        self.0.clone()
    }
}

#[inline]
fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[inline]
pub fn potential_v(x: &[f64], params: &ModelParams) -> f64 {
    let r2 = norm_sq(x);
    r2 * r2 - params.a * r2
}

#[inline]
pub fn potential_w(u: &[f64]) -> f64 {
    -norm_sq(u)
}

#[inline]
pub fn grad_v_into(x: &[f64], params: &ModelParams, out: &mut [f64]) {
    let s = 4.0 * norm_sq(x) - 2.0 * params.a;
    for (o, xi) in out.iter_mut().zip(x) {
        *o = s * xi;
    }
}

/// `∇V(x) = (4|x|^2 - 2a) x`.
pub fn grad_v(x: &[f64], params: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    grad_v_into(x, params, &mut out);
    out
}

/// `∇W(u) = -2u`.
pub fn grad_w(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| -2.0 * v).collect()
}

#[inline]
pub fn pair_drift_into(x: &[f64], y: &[f64], params: &ModelParams, out: &mut [f64]) {
    if !params.drift_enabled() {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let s = 4.0 * norm_sq(x) - 2.0 * params.a;
    let e2 = 2.0 * params.eps;
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        // -∇V(x) - ε∇W(x - y) = -(4|x|²-2a)x + 2ε(x - y)
        *o = -s * xi + e2 * (xi - yi);
    }
}

/// `b(x, y) = -∇V(x) - ε∇W(x - y)`.
pub fn pair_drift(x: &[f64], y: &[f64], params: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    pair_drift_into(x, y, params, &mut out);
    out
}

/// `b * μ(x)` given the mean `m1` of `μ`.
#[inline]
pub fn mean_field_drift_with_mean(x: &[f64], mean: &[f64], params: &ModelParams, out: &mut [f64]) {
    // ∫ b(x, z) μ(dz) = -∇V(x) + 2ε(x - m₁(μ)), exactly, for quadratic W.
    pair_drift_into(x, mean, params, out);
}

/// `b * μ(x) = ∫ b(x, z) μ(dz)`; fails when `μ` does not have unit mass.
pub fn mean_field_drift<M: FirstMoment + ?Sized>(x: &[f64], mu: &M, params: &ModelParams) -> Result<Vec<f64>> {
    let mass = mu.total_mass();
    if (mass - 1.0).abs() > 1e-9 || !mass.is_finite() {
        return Err(Error::NotNormalized { mass });
    }
    let mean = mu.first_moment();
    let mut out = vec![0.0; x.len()];
    mean_field_drift_with_mean(x, &mean, params, &mut out);
    Ok(out)
}

/// Empirical mean of an `N x d` row-major position block.
pub fn empirical_mean(positions: &[f64], dim: usize) -> Vec<f64> {
    let n = positions.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in positions.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Writes the `N`-particle drift field `b^N` into `out`; component `i` is
/// `(1/N) Σ_j b(x_i, x_j)` including the self term `j = i`.
pub fn system_drift_into(positions: &[f64], params: &ModelParams, out: &mut [f64]) {
    let d = params.dim;
    debug_assert_eq!(positions.len() % d, 0);
    debug_assert_eq!(positions.len(), out.len());
    if !params.drift_enabled() {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    // (1/N) Σ_j b(x_i, x_j) = b(x_i, x̄) because b is affine in its second slot.
    let mean = empirical_mean(positions, d);
    for (x, o) in positions.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        pair_drift_into(x, &mean, params, o);
    }
}

pub fn system_drift(positions: &[f64], params: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; positions.len()];
    system_drift_into(positions, params, &mut out);
    out
}

/// `Σ_i V(x_i) + (ε / 2N) Σ_{i,j} W(x_i - x_j)`, whose negative gradient is
/// [`system_drift`]. Zero when the drift is disabled.
pub fn system_energy(positions: &[f64], params: &ModelParams) -> f64 {
    if !params.drift_enabled() {
        return 0.0;
    }
    let d = params.dim;
    let mean = empirical_mean(positions, d);
    let mut confinement = 0.0;
    let mut spread = 0.0;
    for x in positions.chunks_exact(d) {
        confinement += potential_v(x, params);
        spread += x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    // Σ_{i,j} |x_i - x_j|² = 2N Σ_i |x_i - x̄|²
    confinement - params.eps * spread
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PotentialBounds {
    /// Constant of the one-sided Lipschitz bound on `-∇V`.
    pub one_sided: f64,
    /// Convexity constant of `V` outside the ball of radius `2R`.
    pub convex_outside: f64,
    /// Bound on `|V + εW * μ|` over the ball of radius `3R`.
    pub sup_v_eps: f64,
    /// False when `R <= sqrt(a/6)`, where the convexity bound is vacuous.
    pub convexity_meaningful: bool,
}

/// Analytic bounds on the potentials at radius `r`, for measures whose second
/// moment is at most `m2`.
pub fn lemma41_bounds(r: f64, m2: f64, params: &ModelParams) -> PotentialBounds {
    let a = params.a;
    let eps = params.eps;
    let r3 = 3.0 * r;
    let convex_outside = 4.0 * (r * r - a / 6.0);
    PotentialBounds {
        one_sided: 2.0 * a,
        convex_outside,
        sup_v_eps: r3.powi(4) + (a + 2.0 * eps) * r3 * r3 + 2.0 * eps * m2,
        convexity_meaningful: convex_outside > 0.0,
    }
}

/// Second-moment bound of any stationary solution of the limit equation.
pub fn stationary_m2_bound(a: f64, eps: f64, dim: usize) -> f64 {
    ((a + eps).powi(2) + dim as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WjConstants {
    pub r_a: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa_a: f64,
    pub eps_a: f64,
    /// Contraction rate `kappa_a - 4 eps`.
    pub kappa: f64,
    pub feasible: bool,
}

/// Smallest `R` with `R² - a/6 > 1/(36R²) + a`, by bisection on `[sqrt(a/6), 10]`.
///
/// Returns the upper end of the final bracket, so the defining inequality
/// holds strictly at the returned radius.
pub fn radius_a(a: f64) -> f64 {
    let f = |r: f64| r * r - a / 6.0 - 1.0 / (36.0 * r * r) - a;
    let mut lo = (a / 6.0).sqrt();
    let mut hi = 10.0;
    debug_assert!(f(lo) < 0.0 && f(hi) > 0.0);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `𝒞₁(R, a, ε)` with the supremum of the stationary potential replaced by
/// its explicit bound.
pub fn c1(r: f64, params: &ModelParams) -> f64 {
    let m2 = stationary_m2_bound(params.a, params.eps, params.dim);
    let sup = lemma41_bounds(r, m2, params).sup_v_eps;
    1.0 / (36.0 * r * r * (2.0 * sup).exp()) - 2.0 * params.a
}

/// `𝒞₂(R, a) = 4(R² - a/6) - 4/(36R²)`.
pub fn c2(r: f64, a: f64) -> f64 {
    4.0 * (r * r - a / 6.0) - 4.0 / (36.0 * r * r)
}

/// Contraction constants for the stationary measure at `(a, eps)`.
pub fn wj_constants(a: f64, eps: f64, dim: usize) -> Result<WjConstants> {
    let params = ModelParams::new(a, eps, dim)?;
    if eps >= a / 2.0 {
        return Err(Error::Regime(format!("eps = {eps} must be below a/2 = {}", a / 2.0)));
    }
    let r_a = radius_a(a);
    let c1 = c1(r_a, &params);
    let c2 = c2(r_a, a);
    let kappa_a = (4.0 * a).min(c1);
    let eps_a = (kappa_a / 4.0).min(a / 2.0);
    let kappa = kappa_a - 4.0 * eps;
    let feasible = kappa_a > 0.0 && kappa > 0.0 && eps < eps_a;
    Ok(WjConstants { r_a, c1, c2, kappa_a, eps_a, kappa, feasible })
}

/// Largest well depth `a` at which [`wj_constants`] is feasible for the given
/// interaction strength, located by bisection on `[2 eps, a_max]`.
///
/// Returns `None` if nothing in the bracket is feasible. Feasibility is
/// monotone in `a` on this bracket for the explicit constants used here.
pub fn feasibility_frontier(eps: f64, dim: usize, a_max: f64) -> Option<f64> {
    let feasible = |a: f64| wj_constants(a, eps, dim).map(|c| c.feasible).unwrap_or(false);
    let mut lo = (2.0 * eps).max(1e-12) * (1.0 + 1e-9);
    if !feasible(lo) {
        // Near a = 2 eps the regime bound binds; walk up a little.
        let mut probe = lo;
        let mut found = None;
        for _ in 0..64 {
            probe *= 1.25;
            if probe >= a_max {
                break;
            }
            if feasible(probe) {
                found = Some(probe);
                break;
            }
        }
        lo = found?;
    }
    let mut hi = a_max;
    if feasible(hi) {
        return Some(hi);
    }
    while (hi - lo) > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, eps: f64, dim: usize) -> ModelParams {
        ModelParams::new(a, eps, dim).unwrap()
    }

    #[test]
    fn grad_v_examples() {
        assert_eq!(grad_v(&[1.0], &p(1.0, 0.0, 1)), vec![2.0]);
        assert_eq!(grad_v(&[0.0, 0.0, 0.0], &p(0.7, 0.0, 3)), vec![0.0; 3]);
        assert_eq!(grad_v(&[1.0, 0.0], &p(0.5, 0.0, 2)), vec![3.0, 0.0]);
    }

    #[test]
    fn grad_w_examples() {
        assert_eq!(grad_w(&[0.0]), vec![0.0]);
        assert_eq!(grad_w(&[3.0]), vec![-6.0]);
        assert_eq!(grad_w(&[1.0, -1.0]), vec![-2.0, 2.0]);
    }

    #[test]
    fn pair_drift_examples() {
        let params = p(1.0, 0.1, 1);
        assert_eq!(pair_drift(&[0.0], &[0.0], &params), vec![0.0]);
        assert!((pair_drift(&[1.0], &[0.0], &params)[0] + 1.8).abs() < 1e-15);
        let free = p(1.3, 0.0, 2);
        let x = [0.4, -1.1];
        let b = pair_drift(&x, &[5.0, 2.0], &free);
        let g = grad_v(&x, &free);
        assert_eq!(b, vec![-g[0], -g[1]]);
    }

    #[test]
    fn mean_field_examples() {
        let params = p(1.0, 0.1, 1);
        let b = mean_field_drift(&[1.0], &Dirac(vec![2.0]), &params).unwrap();
        assert!((b[0] + 2.2).abs() < 1e-15);
        let b0 = mean_field_drift(&[0.0], &Dirac(vec![0.0]), &p(0.3, 0.05, 1)).unwrap();
        assert_eq!(b0, vec![0.0]);

        struct Heavy;
        impl FirstMoment for Heavy {
            fn total_mass(&self) -> f64 {
                1.5
            }
            fn first_moment(&self) -> Vec<f64> {
                vec![0.0]
            }
        }
        assert!(matches!(
            mean_field_drift(&[0.0], &Heavy, &params),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn system_drift_two_particles() {
        let params = p(1.0, 0.1, 1);
        let b = system_drift(&[1.0, 0.0], &params);
        assert!((b[0] + 1.9).abs() < 1e-15);
        assert_eq!(system_drift(&[0.0; 6], &p(0.4, 0.2, 2)), vec![0.0; 6]);
    }

    #[test]
    fn system_drift_matches_pairwise_average() {
        let params = p(0.6, 0.2, 2);
        let x = [0.3, -0.2, 1.1, 0.5, -0.7, 0.9, 0.05, -1.3];
        let fast = system_drift(&x, &params);
        let n = 4;
        for i in 0..n {
            let mut acc = [0.0; 2];
            for j in 0..n {
                let b = pair_drift(&x[2 * i..2 * i + 2], &x[2 * j..2 * j + 2], &params);
                acc[0] += b[0] / n as f64;
                acc[1] += b[1] / n as f64;
            }
            assert!((acc[0] - fast[2 * i]).abs() < 1e-13);
            assert!((acc[1] - fast[2 * i + 1]).abs() < 1e-13);
        }
    }

    #[test]
    fn system_energy_examples() {
        assert_eq!(system_energy(&[0.0; 5], &p(1.0, 0.3, 1)), 0.0);
        let e = system_energy(&[1.0, 0.0], &p(1.0, 0.1, 1));
        assert!((e + 0.05).abs() < 1e-15);
    }

    #[test]
    fn system_energy_matches_double_sum() {
        let params = p(0.4, 0.15, 3);
        let x = [0.3, -0.2, 1.1, 0.5, -0.7, 0.9, 0.05, -1.3, 0.2];
        let n = 3;
        let mut direct = 0.0;
        for i in 0..n {
            direct += potential_v(&x[3 * i..3 * i + 3], &params);
            for j in 0..n {
                let u: Vec<f64> = (0..3).map(|k| x[3 * i + k] - x[3 * j + k]).collect();
                direct += params.eps / (2.0 * n as f64) * potential_w(&u);
            }
        }
        assert!((direct - system_energy(&x, &params)).abs() < 1e-13);
    }

    #[test]
    fn gradient_structure_by_central_differences() {
        let params = p(0.8, 0.25, 2);
        let x = vec![0.3, -0.2, 1.1, 0.5, -0.7, 0.9];
        let drift = system_drift(&x, &params);
        let h = 1e-5;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = -(system_energy(&xp, &params) - system_energy(&xm, &params)) / (2.0 * h);
            let rel = (fd - drift[k]).abs() / drift[k].abs().max(1.0);
            assert!(rel < 1e-6, "component {k}: fd {fd} vs drift {}", drift[k]);
        }
    }

    #[test]
    fn bounds_examples() {
        let b = lemma41_bounds(1.0, 0.0, &p(0.6, 0.0, 1));
        assert!((b.one_sided - 1.2).abs() < 1e-15);
        assert!((b.convex_outside - 3.6).abs() < 1e-14);
        let b = lemma41_bounds(0.5, 1.01, &p(0.1, 0.01, 1));
        assert!((b.sup_v_eps - 5.3527).abs() < 1e-12);
        let flat = lemma41_bounds(0.1, 0.0, &p(0.6, 0.0, 1));
        assert!(!flat.convexity_meaningful && flat.convex_outside <= 0.0);
    }

    #[test]
    fn radius_matches_quartic_root() {
        // R⁴ - (a/6 + a) R² - 1/36 = 0 solved as a quadratic in R².
        let a: f64 = 0.1;
        let c = a / 6.0 + a;
        let r2 = 0.5 * (c + (c * c + 4.0 / 36.0).sqrt());
        let r = radius_a(a);
        assert!((r - r2.sqrt()).abs() < 1e-9);
        assert!((r - 0.4847).abs() < 5e-5);
        let k = wj_constants(a, 0.0, 1).unwrap();
        assert!(k.c2 > 4.0 * a);
        assert!(k.r_a > (a / 6.0).sqrt());
    }

    #[test]
    fn eps_at_threshold_is_infeasible() {
        let k = wj_constants(5e-4, 0.0, 1).unwrap();
        assert!(k.feasible);
        let at = wj_constants(5e-4, k.eps_a, 1).unwrap();
        assert!(!at.feasible);
    }

    #[test]
    fn regime_error_above_half_a() {
        assert!(matches!(wj_constants(0.1, 0.05, 1), Err(Error::Regime(_))));
        assert!(matches!(wj_constants(0.1, 0.2, 1), Err(Error::Regime(_))));
    }

    #[test]
    fn frontier_brackets_feasibility() {
        let a_star = feasibility_frontier(0.0, 1, 1.0).unwrap();
        assert!(a_star > 1e-4 && a_star < 1e-2, "a* = {a_star}");
        assert!(wj_constants(0.99 * a_star, 0.0, 1).unwrap().feasible);
        assert!(!wj_constants(1.01 * a_star, 0.0, 1).unwrap().feasible);
    }

    #[test]
    fn feasible_constants_are_consistent() {
        let k = wj_constants(5e-4, 1e-4, 1).unwrap();
        assert!(k.feasible);
        assert!(k.c1.min(k.c2) >= k.kappa_a && k.kappa_a > 0.0 && k.kappa > 0.0);
        assert!(p(5e-4, 1e-4, 1).is_admissible());
        assert!(!p(0.1, 0.01, 1).is_admissible());
    }
}
