//! The one-dimensional McKean-Vlasov equation
//! `∂_t μ = ∂_x(∂_x μ - (b * μ) μ)` on a truncated uniform grid.
//!
//! The drift is a gradient, `b * μ = -∂_x U[μ]` with
//! `U[μ](x) = V(x) + ε W * μ(x)`, so the flux is discretized in the
//! exponentially fitted (Scharfetter-Gummel) form
//! `J = -e^{-U} ∂_x(e^{U} μ)`. The scheme is conservative, reduces to
//! centered diffusion when the drift vanishes and to upwinding when it
//! dominates, and its discrete equilibria are exactly the cell-sampled Gibbs
//! profiles `Z⁻¹ e^{-U[μ]}` produced by [`stationary_fixed_point`].

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{potential_v, FirstMoment, ModelParams};

/// Cells carrying less than this contribute nothing to the entropy.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Fraction of the explicit stability limit used by automatic time steps.
const AUTO_DT_FRACTION: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_cells: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, n_cells: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("half_width must be positive, got {half_width}")));
        }
        if n_cells < 4 {
            return Err(Error::InvalidParameter(format!("need at least 4 cells, got {n_cells}")));
        }
        Ok(Self { half_width, n_cells })
    }

    /// Truncation `L = 3 + 2 max(1, a)`; the Gibbs tail beyond it is far
    /// below 1e-12.
    pub fn default_half_width(a: f64) -> f64 {
        3.0 + 2.0 * a.max(1.0)
    }

    pub fn for_params(params: &ModelParams, n_cells: usize) -> Result<Self> {
        Self::new(Self::default_half_width(params.a), n_cells)
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.half_width / self.n_cells as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        -self.half_width + (k as f64 + 0.5) * self.cell_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|k| self.center(k)).collect()
    }
}

/// Cell-averaged probability density on `[-L, L]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridDensity {
    pub half_width: f64,
    pub n_cells: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl GridDensity {
    /// Wraps cell values, checking nonnegativity and unit mass.
    pub fn new(spec: GridSpec, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != spec.n_cells {
            return Err(Error::InvalidParameter(format!(
                "expected {} cell values, got {}",
                spec.n_cells,
                values.len()
            )));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Positivity { cell, value });
        }
        let mu = Self { half_width: spec.half_width, n_cells: spec.n_cells, values, time };
        let mass = mu.mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { mass });
        }
        Ok(mu)
    }

    /// Samples a nonnegative profile at cell centers and normalizes it.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = spec.centers().into_iter().map(f).collect();
        Self::from_unnormalized(spec, values)
    }

    /// Builds `exp(log_f)` normalized, shifting by the maximum first so
    /// steep profiles do not overflow.
    pub fn from_log_density(spec: GridSpec, log_f: impl Fn(f64) -> f64) -> Result<Self> {
        let logs: Vec<f64> = spec.centers().into_iter().map(log_f).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Support("log-density has no finite maximum".into()));
        }
        Self::from_unnormalized(spec, logs.into_iter().map(|l| (l - top).exp()).collect())
    }

    pub fn from_unnormalized(spec: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        let h = spec.cell_width();
        let total: f64 = values.iter().sum::<f64>() * h;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Support(format!("profile has total mass {total}")));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Self::new(spec, values, 0.0)
    }

    pub fn gaussian(spec: GridSpec, mean: f64, variance: f64) -> Result<Self> {
        Self::from_log_density(spec, |x| -(x - mean) * (x - mean) / (2.0 * variance))
    }

    /// Uniform law on `[lo, hi]`, with partially covered cells weighted by
    /// their overlap so the mass and moments are exact.
    pub fn uniform(spec: GridSpec, lo: f64, hi: f64) -> Result<Self> {
        let h = spec.cell_width();
        let values = (0..spec.n_cells)
            .map(|k| {
                let left = -spec.half_width + k as f64 * h;
                let overlap = hi.min(left + h) - lo.max(left);
                // edges that agree up to rounding do not create sliver cells
                if overlap > 1e-9 * h {
                    overlap / h
                } else {
                    0.0
                }
            })
            .collect();
        Self::from_unnormalized(spec, values)
    }

    /// Centered Gaussian whose grid second moment equals `target`.
    pub fn gaussian_with_second_moment(spec: GridSpec, target: f64) -> Result<Self> {
        let (mut lo, mut hi) = (1e-6, 4.0 * target.max(1e-3));
        let m2 = |var: f64| Self::gaussian(spec, 0.0, var).map(|g| moment_k(&g, 2));
        if m2(hi)? < target {
            return Err(Error::InvalidParameter(format!(
                "second moment {target} is not reachable on [-{}, {}]",
                spec.half_width, spec.half_width
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if m2(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::gaussian(spec, 0.0, 0.5 * (lo + hi))
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { half_width: self.half_width, n_cells: self.n_cells }
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.half_width / self.n_cells as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        -self.half_width + (k as f64 + 0.5) * self.cell_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.spec().centers()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_width()
    }

    pub fn mean(&self) -> f64 {
        signed_moment(self, 1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        moment_k(self, 2) - m * m
    }

    pub fn l1_distance(&self, other: &GridDensity) -> f64 {
        debug_assert_eq!(self.n_cells, other.n_cells);
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.cell_width()
    }

    /// Cumulative mass at the `n + 1` cell edges.
    pub fn cdf_edges(&self) -> Vec<f64> {
        let h = self.cell_width();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.n_cells + 1);
        out.push(0.0);
        for v in &self.values {
            acc += v * h;
            out.push(acc);
        }
        out
    }

    /// Generalized inverse of the piecewise-linear CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let cdf = self.cdf_edges();
        quantile_from_cdf(&cdf, self.half_width, self.cell_width(), u)
    }

    /// Density value of the cell containing `x` (zero outside the grid).
    pub fn value_at(&self, x: f64) -> f64 {
        let k = ((x + self.half_width) / self.cell_width()).floor();
        if k < 0.0 || k >= self.n_cells as f64 {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    /// Writes `x_center,value` rows after a `#` line carrying the grid and
    /// model metadata.
    pub fn write_csv<W: Write>(&self, mut out: W, params: &ModelParams) -> Result<()> {
        writeln!(
            out,
            "# half_width={},n_cells={},time={},a={},eps={}",
            self.half_width, self.n_cells, self.time, params.a, params.eps
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_center", "value"])?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([self.center(k).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`GridDensity::write_csv`]; returns the density
    /// and the `(a, eps)` pair recorded in the header.
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<(Self, f64, f64)> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let meta = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing '#' metadata line".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in meta.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad metadata entry '{kv}'")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number in '{kv}'")))?;
            fields.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Parse(format!("missing '{k}'")));
        let spec = GridSpec::new(get("half_width")?, get("n_cells")? as usize)?;
        let mut reader = csv::Reader::from_reader(input);
        let mut values = Vec::with_capacity(spec.n_cells);
        for rec in reader.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad row {rec:?}")))?;
            values.push(v);
        }
        let mu = GridDensity::new(spec, values, get("time")?)?;
        Ok((mu, get("a")?, get("eps")?))
    }
}

impl FirstMoment for GridDensity {
    fn total_mass(&self) -> f64 {
        self.mass()
    }
    fn first_moment(&self) -> Vec<f64> {
        vec![self.mean()]
    }
}

pub(crate) fn quantile_from_cdf(cdf: &[f64], half_width: f64, h: f64, u: f64) -> f64 {
    let n = cdf.len() - 1;
    let total = cdf[n];
    let u = u.clamp(0.0, 1.0) * total;
    // first edge index with cdf >= u, restricted to cells of positive mass
    let mut k = cdf.partition_point(|&c| c < u).clamp(1, n);
    while k < n && cdf[k] - cdf[k - 1] <= 0.0 {
        k += 1;
    }
    let lo = cdf[k - 1];
    let width = cdf[k] - lo;
    let left = -half_width + (k - 1) as f64 * h;
    if width <= 0.0 {
        return left + h;
    }
    left + h * ((u - lo) / width).clamp(0.0, 1.0)
}

/// Midpoint quadrature of `∫ |x|^k μ(dx)`.
pub fn moment_k(mu: &GridDensity, k: u32) -> f64 {
    let h = mu.cell_width();
    mu.values
        .iter()
        .enumerate()
        .map(|(i, v)| mu.center(i).abs().powi(k as i32) * v)
        .sum::<f64>()
        * h
}

/// Midpoint quadrature of `∫ x^k μ(dx)` (sign kept), for parity checks.
pub fn signed_moment(mu: &GridDensity, k: u32) -> f64 {
    let h = mu.cell_width();
    mu.values.iter().enumerate().map(|(i, v)| mu.center(i).powi(k as i32) * v).sum::<f64>() * h
}

/// `F(μ) = ∫ μ ln μ + ∫ V dμ + (ε/2) ∬ W(x - y) μ(dx) μ(dy)`.
///
/// The interaction uses `∬ |x - y|² μμ = 2(m₂ - m₁²)`.
pub fn free_energy(mu: &GridDensity, params: &ModelParams) -> f64 {
    let h = mu.cell_width();
    let mut entropy = 0.0;
    let mut confinement = 0.0;
    for (k, &v) in mu.values.iter().enumerate() {
        if v > ENTROPY_FLOOR {
            entropy += v * v.ln();
        }
        confinement += potential_v(&[mu.center(k)], params) * v;
    }
    let m1 = mu.mean();
    let m2 = moment_k(mu, 2);
    (entropy + confinement) * h - params.eps * (m2 - m1 * m1)
}

/// Right-hand side of the second-moment estimate along the limit flow.
pub fn moment_envelope(m2_initial: f64, t: f64, delta: f64, params: &ModelParams) -> f64 {
    let c = params.a + params.eps + delta;
    (-4.0 * delta * t).exp() * m2_initial + (c * c + params.dim as f64) / (4.0 * delta)
}

/// Work buffers for [`FokkerPlanck::step`], including face coefficients
/// cached between steps.
#[derive(Clone, Debug)]
pub struct StepScratch {
    flux: Vec<f64>,
    forward: Vec<f64>,
    backward: Vec<f64>,
    dz: f64,
    zmax: f64,
}

impl Default for StepScratch {
    fn default() -> Self {
        Self { flux: Vec::new(), forward: Vec::new(), backward: Vec::new(), dz: f64::NAN, zmax: 0.0 }
    }
}

/// Explicit finite-volume solver for one parameter set and grid.
#[derive(Clone, Debug)]
pub struct FokkerPlanck {
    params: ModelParams,
    spec: GridSpec,
    h: f64,
    /// `-(U_{k+1} - U_k)` at each interior face for a centered measure.
    base_z: Vec<f64>,
    base_exp: Vec<f64>,
    centers: Vec<f64>,
}

impl FokkerPlanck {
    pub fn new(spec: GridSpec, params: ModelParams) -> Self {
        let h = spec.cell_width();
        let centers = spec.centers();
        let potential = |x: f64| {
            if params.drift_enabled() {
                potential_v(&[x], &params) - params.eps * x * x
            } else {
                0.0
            }
        };
        let base_z: Vec<f64> = centers.windows(2).map(|w| -(potential(w[1]) - potential(w[0]))).collect();
        let base_exp = base_z.iter().map(|z| z.exp()).collect();
        Self { params, spec, h, base_z, base_exp, centers }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    fn shift(&self, mu: &GridDensity) -> f64 {
        if self.params.drift_enabled() {
            // the 2εm₁x part of U contributes -2εm₁h to every face exponent
            -2.0 * self.params.eps * mu.mean() * self.h
        } else {
            0.0
        }
    }

    /// Stability limit `0.4 min(h²/2, h / max|b * μ|)` at the current state.
    pub fn stable_dt(&self, mu: &GridDensity) -> f64 {
        let dz = self.shift(mu);
        let zmax = self.base_z.iter().map(|z| (z + dz).abs()).fold(0.0, f64::max);
        self.bound_from_zmax(zmax)
    }

    fn bound_from_zmax(&self, zmax: f64) -> f64 {
        let h2 = self.h * self.h;
        // |b * μ| at a face is |z| / h, so h / |b * μ| = h² / |z|
        let advective = if zmax > 0.0 { h2 / zmax } else { f64::INFINITY };
        0.4 * (h2 / 2.0).min(advective)
    }

    /// Face coefficients for the shift `dz`, reused while the shift moves by
    /// less than `1e-16 h` (far below the rounding of the exponents).
    fn coefficients<'a>(&self, dz: f64, scratch: &'a mut StepScratch) -> &'a StepScratch {
        let n = self.base_z.len();
        if scratch.forward.len() != n || !((dz - scratch.dz).abs() <= 1e-16 * self.h) {
            scratch.forward.resize(n, 0.0);
            scratch.backward.resize(n, 0.0);
            let scale = dz.exp();
            let inv_h = 1.0 / self.h;
            let mut zmax: f64 = 0.0;
            for f in 0..n {
                let z = self.base_z[f] + dz;
                let ez = self.base_exp[f] * scale;
                zmax = zmax.max(z.abs());
                // Bernoulli function z / (e^z - 1)
                let bern = if z.abs() < 1e-5 { 1.0 - 0.5 * z + z * z / 12.0 } else { z / (ez - 1.0) };
                scratch.forward[f] = bern * inv_h * ez;
                scratch.backward[f] = bern * inv_h;
            }
            scratch.dz = dz;
            scratch.zmax = zmax;
        }
        scratch
    }

    /// Face fluxes `J_{k+1/2}` (length `n + 1`, zero at the walls); returns
    /// the largest face Péclet number.
    fn fluxes(&self, mu: &GridDensity, scratch: &mut StepScratch) -> f64 {
        let n = mu.values.len();
        self.coefficients(self.shift(mu), scratch);
        let StepScratch { flux, forward, backward, zmax, .. } = scratch;
        flux.resize(n + 1, 0.0);
        flux[0] = 0.0;
        flux[n] = 0.0;
        for f in 0..n - 1 {
            flux[f + 1] = forward[f] * mu.values[f] - backward[f] * mu.values[f + 1];
        }
        *zmax
    }

    fn apply(&self, mu: &mut GridDensity, flux: &[f64], dt: f64) -> Result<()> {
        let r = dt / self.h;
        for (k, v) in mu.values.iter_mut().enumerate() {
            *v -= r * (flux[k + 1] - flux[k]);
        }
        mu.time += dt;
        if let Some((cell, &value)) = mu.values.iter().enumerate().find(|(_, v)| !(**v >= -1e-12)) {
            return Err(Error::Positivity { cell, value });
        }
        Ok(())
    }

    /// One explicit step of size `dt`, rejected if it exceeds the stability limit.
    pub fn step(&self, mu: &mut GridDensity, dt: f64, scratch: &mut StepScratch) -> Result<()> {
        let zmax = self.fluxes(mu, scratch);
        let max_dt = self.bound_from_zmax(zmax);
        if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::Stability { dt, max_dt });
        }
        self.apply(mu, &scratch.flux, dt)
    }

    /// One step of size `min(dt_cap, 0.9 x stability limit)`; returns the step taken.
    pub fn step_auto(&self, mu: &mut GridDensity, dt_cap: f64, scratch: &mut StepScratch) -> Result<f64> {
        let zmax = self.fluxes(mu, scratch);
        let dt = dt_cap.min(AUTO_DT_FRACTION * self.bound_from_zmax(zmax));
        self.apply(mu, &scratch.flux, dt)?;
        Ok(dt)
    }

    /// `Z⁻¹ exp(-V - εW * μ)` sampled at the cell centers.
    pub fn gibbs_map(&self, mu: &GridDensity) -> Result<GridDensity> {
        if !self.params.drift_enabled() {
            return Err(Error::InvalidParameter("Gibbs map needs an active potential".into()));
        }
        let m1 = mu.mean();
        let eps = self.params.eps;
        let a = self.params.a;
        let mut out = GridDensity::from_log_density(self.spec, |x| {
            // -V(x) - εW*μ(x) = -x⁴ + a x² + ε(x² - 2 m₁ x) + const
            let x2 = x * x;
            -x2 * x2 + a * x2 + eps * (x2 - 2.0 * m1 * x)
        })?;
        out.time = mu.time;
        Ok(out)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
}

/// One step of the limit equation.
pub fn fp_step(mu: &GridDensity, params: &ModelParams, dt: f64) -> Result<GridDensity> {
    let solver = FokkerPlanck::new(mu.spec(), *params);
    let mut next = mu.clone();
    solver.step(&mut next, dt, &mut StepScratch::default())?;
    Ok(next)
}

/// A limit-equation trajectory that can be advanced to arbitrary times; used
/// in lock-step with particle simulations.
#[derive(Clone, Debug)]
pub struct LimitFlow {
    solver: FokkerPlanck,
    state: GridDensity,
    dt: Option<f64>,
    scratch: StepScratch,
    steps: usize,
}

impl LimitFlow {
    /// `dt = None` picks 0.9 of the stability limit at every step.
    pub fn new(mu0: GridDensity, params: ModelParams, dt: Option<f64>) -> Self {
        let solver = FokkerPlanck::new(mu0.spec(), params);
        Self { solver, state: mu0, dt, scratch: StepScratch::default(), steps: 0 }
    }

    pub fn current(&self) -> &GridDensity {
        &self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Steps until `state.time == t`, shortening the last step to land exactly.
    pub fn advance_to(&mut self, t: f64) -> Result<&GridDensity> {
        while self.state.time < t - 1e-12 * t.abs().max(1.0) {
            let remaining = t - self.state.time;
            match self.dt {
                Some(dt) => {
                    let step = dt.min(remaining);
                    self.solver.step(&mut self.state, step, &mut self.scratch)?;
                }
                None => {
                    self.solver.step_auto(&mut self.state, remaining, &mut self.scratch)?;
                }
            }
            self.steps += 1;
        }
        self.state.time = t;
        Ok(&self.state)
    }
}

/// Evolves `mu0` to `t_end`, recording a snapshot every `record_interval`
/// (and at both ends). `dt = None` uses automatic stable steps.
pub fn evolve(
    mu0: &GridDensity,
    params: &ModelParams,
    t_end: f64,
    dt: Option<f64>,
    record_interval: f64,
) -> Result<Vec<GridDensity>> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be nonnegative, got {t_end}")));
    }
    if !(record_interval > 0.0) {
        return Err(Error::InvalidParameter("record interval must be positive".into()));
    }
    let mut flow = LimitFlow::new(mu0.clone(), *params, dt);
    let start = mu0.time;
    let mut out = vec![mu0.clone()];
    let n_records = ((t_end / record_interval) - 1e-9).ceil().max(0.0) as usize;
    for r in 1..=n_records {
        let t = start + (r as f64 * record_interval).min(t_end);
        out.push(flow.advance_to(t)?.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPoint {
    pub density: GridDensity,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Damped iteration `μ ← (1 - θ)μ + θ Z⁻¹ e^{-V - εW * μ}` from the even
/// start `Z₀⁻¹ e^{-V}` until the L¹ residual drops below `tol`.
///
/// The returned density is the Gibbs image of the last iterate. Convergence
/// is reported, not uniqueness: near the multiple-solution regime the
/// iteration may settle on any stationary solution.
pub fn stationary_fixed_point(spec: GridSpec, params: &ModelParams, damping: f64, tol: f64) -> Result<FixedPoint> {
    const MAX_ITERATIONS: usize = 10_000;
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {damping}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let solver = FokkerPlanck::new(spec, *params);
    let a = params.a;
    let mut mu = GridDensity::from_log_density(spec, |x| {
        let x2 = x * x;
        -x2 * x2 + a * x2
    })?;
    let mut history = Vec::new();
    for it in 0..MAX_ITERATIONS {
        let image = solver.gibbs_map(&mu)?;
        let residual = mu.l1_distance(&image);
        history.push(residual);
        if residual < tol {
            let check = solver.gibbs_map(&image)?;
            let residual = image.l1_distance(&check);
            return Ok(FixedPoint { density: image, residual, iterations: it, history });
        }
        for (m, g) in mu.values.iter_mut().zip(&image.values) {
            *m = (1.0 - damping) * *m + damping * g;
        }
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(Error::NoConvergence { iterations: MAX_ITERATIONS, residual, history })
}
