//! Euler-Maruyama simulation of the interacting particle system
//! `dX^i = (1/N) Σ_j b(X^i, X^j) dt + √2 dB^i`, its synchronous and
//! reflection couplings with independent nonlinear particles, and ensemble
//! observables.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::limit::{GridDensity, LimitFlow};
use crate::model::{mean_field_drift_with_mean, potential_v, system_drift_into, system_energy, ModelParams};
use crate::rng::{stream_rng, NoiseStreams, StreamTag};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleEnsemble {
    /// Row-major `N x d` positions.
    pub positions: Vec<f64>,
    pub time: f64,
    pub n_particles: usize,
    pub dim: usize,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, dim: usize, time: f64) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not form particles of dimension {dim}",
                positions.len()
            )));
        }
        if let Some(k) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("particle {} has a non-finite coordinate", k / dim)));
        }
        let n_particles = positions.len() / dim;
        Ok(Self { positions, time, n_particles, dim })
    }

    pub fn zeros(n_particles: usize, dim: usize) -> Self {
        Self { positions: vec![0.0; n_particles * dim], time: 0.0, n_particles, dim }
    }

    /// `n` i.i.d. draws from a one-dimensional grid density, using the
    /// replica's own initial-condition stream.
    pub fn sample_iid(mu: &GridDensity, n: usize, seed: u64, replica: u64) -> Self {
        let mut rng = stream_rng(seed, StreamTag::Initial, replica);
        let cdf = mu.cdf_edges();
        let positions = (0..n)
            .map(|_| crate::limit::quantile_from_cdf(&cdf, mu.half_width, mu.cell_width(), rng.random::<f64>()))
            .collect();
        Self { positions, time: mu.time, n_particles: n, dim: 1 }
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Reorders particles: new particle `i` is old particle `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.dim;
        let positions = perm.iter().flat_map(|&p| self.positions[p * d..(p + 1) * d].iter().copied()).collect();
        Self { positions, ..self.clone() }
    }
}

fn check_finite(positions: &[f64], dim: usize, time: f64, dt: f64) -> Result<()> {
    match positions.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::BlowUp { particle: k / dim, time, dt }),
        None => Ok(()),
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")))
    }
}

/// In-place Euler-Maruyama step; `drift` is scratch space of the same size.
pub fn em_step_in_place(
    ens: &mut ParticleEnsemble,
    params: &ModelParams,
    dt: f64,
    noise: &[f64],
    drift: &mut Vec<f64>,
) -> Result<()> {
    check_dt(dt)?;
    debug_assert_eq!(noise.len(), ens.positions.len());
    drift.resize(ens.positions.len(), 0.0);
    system_drift_into(&ens.positions, params, drift);
    let s = (2.0 * dt).sqrt();
    for ((x, b), g) in ens.positions.iter_mut().zip(drift.iter()).zip(noise) {
        *x += dt * b + s * g;
    }
    ens.time += dt;
    check_finite(&ens.positions, ens.dim, ens.time, dt)
}

/// `X' = X + dt b^N(X) + √(2 dt) ξ`.
pub fn em_step(ens: &ParticleEnsemble, params: &ModelParams, dt: f64, noise: &[f64]) -> Result<ParticleEnsemble> {
    if noise.len() != ens.positions.len() {
        return Err(Error::InvalidParameter(format!(
            "noise has {} entries for {} coordinates",
            noise.len(),
            ens.positions.len()
        )));
    }
    let mut next = ens.clone();
    em_step_in_place(&mut next, params, dt, noise, &mut Vec::new())?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    EulerMaruyama,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub seed: u64,
    pub n_replicas: usize,
    pub scheme: Scheme,
    /// Spacing of recorded observables in time units.
    pub record_interval: f64,
}

impl SimConfig {
    pub fn new(dt: f64, seed: u64, n_replicas: usize) -> Result<Self> {
        check_dt(dt)?;
        if n_replicas == 0 {
            return Err(Error::InvalidParameter("need at least one replica".into()));
        }
        Ok(Self { dt, seed, n_replicas, scheme: Scheme::EulerMaruyama, record_interval: dt })
    }

    pub fn with_record_interval(mut self, interval: f64) -> Self {
        self.record_interval = interval;
        self
    }
}

/// Step sizes that reach `t_end` from `t0` with steps of at most `dt`, and
/// the indices after which a record is due.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    pub steps: Vec<f64>,
    pub record_after: Vec<bool>,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, dt: f64, record_interval: f64) -> Result<Self> {
        check_dt(dt)?;
        if !(t_end >= t0) {
            return Err(Error::InvalidParameter(format!("t_end = {t_end} precedes the start time {t0}")));
        }
        let span = t_end - t0;
        let n = (span / dt - 1e-9).ceil().max(0.0) as usize;
        let every = ((record_interval / dt).round() as usize).max(1);
        let steps = (0..n).map(|k| if k + 1 < n { dt } else { span - dt * (n - 1) as f64 }).collect();
        let record_after = (0..n).map(|k| (k + 1) % every == 0 || k + 1 == n).collect();
        Ok(Self { steps, record_after })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Observable {
    /// `(1/N) Σ_i |x_i|^k`.
    Moment(u32),
    /// First coordinate of the empirical mean.
    Mean,
    /// [`system_energy`].
    Energy,
    /// Normalized histogram of all first coordinates on `[lo, hi]`.
    Histogram { lo: f64, hi: f64, bins: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub time: f64,
    pub observable: String,
    pub value: f64,
    pub replica: usize,
}

fn norm_pow(x: &[f64], k: u32) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if k.is_multiple_of(2) {
        r2.powi(k as i32 / 2)
    } else {
        r2.sqrt().powi(k as i32)
    }
}

fn evaluate(ens: &ParticleEnsemble, params: &ModelParams, obs: &Observable, replica: usize, out: &mut Vec<ObservableRecord>) {
    let n = ens.n_particles as f64;
    let push = |out: &mut Vec<ObservableRecord>, name: String, value: f64| {
        out.push(ObservableRecord { time: ens.time, observable: name, value, replica })
    };
    match *obs {
        Observable::Moment(k) => {
            let m = ens.positions.chunks_exact(ens.dim).map(|x| norm_pow(x, k)).sum::<f64>() / n;
            push(out, format!("moment_{k}"), m);
        }
        Observable::Mean => {
            let m = ens.positions.chunks_exact(ens.dim).map(|x| x[0]).sum::<f64>() / n;
            push(out, "mean".into(), m);
        }
        Observable::Energy => push(out, "energy".into(), system_energy(&ens.positions, params)),
        Observable::Histogram { lo, hi, bins } => {
            let counts = histogram(ens.positions.chunks_exact(ens.dim).map(|x| x[0]), lo, hi, bins);
            let width = (hi - lo) / bins as f64;
            for (b, c) in counts.iter().enumerate() {
                push(out, format!("hist_{b}"), c / (n * width));
            }
        }
    }
}

/// Bin counts of `values` on `bins` equal cells of `[lo, hi)`; values
/// outside are dropped.
pub fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let scale = bins as f64 / (hi - lo);
    for v in values {
        let b = ((v - lo) * scale).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1.0;
        }
    }
    counts
}

#[derive(Clone, Debug, Serialize)]
pub struct SimOutput {
    /// Records ordered by replica, then time, then observable.
    pub records: Vec<ObservableRecord>,
    pub finals: Vec<ParticleEnsemble>,
}

/// Runs `cfg.n_replicas` independent copies of the system from `init`,
/// recording `observables` every `cfg.record_interval` and at both ends.
///
/// Replica `r` draws its noise from the streams keyed by `(cfg.seed, r)`, so
/// the output does not depend on the number of worker threads.
pub fn simulate(
    init: &ParticleEnsemble,
    params: &ModelParams,
    cfg: &SimConfig,
    t_end: f64,
    observables: &[Observable],
) -> Result<SimOutput> {
    let inits = vec![init.clone(); cfg.n_replicas];
    simulate_replicas(&inits, params, cfg, t_end, observables)
}

/// As [`simulate`], with one initial ensemble per replica.
pub fn simulate_replicas(
    inits: &[ParticleEnsemble],
    params: &ModelParams,
    cfg: &SimConfig,
    t_end: f64,
    observables: &[Observable],
) -> Result<SimOutput> {
    let t0 = inits.first().map(|e| e.time).unwrap_or(0.0);
    let grid = TimeGrid::new(t0, t_end, cfg.dt, cfg.record_interval)?;
    let runs: Vec<Result<(Vec<ObservableRecord>, ParticleEnsemble)>> = inits
        .par_iter()
        .enumerate()
        .map(|(r, init)| {
            let mut ens = init.clone();
            let mut streams = NoiseStreams::new(cfg.seed, r as u64, ens.n_particles, ens.dim);
            let mut noise = vec![0.0; ens.positions.len()];
            let mut drift = Vec::new();
            let mut records = Vec::new();
            for obs in observables {
                evaluate(&ens, params, obs, r, &mut records);
            }
            for (&dt, &rec) in grid.steps.iter().zip(&grid.record_after) {
                streams.fill(&mut noise);
                em_step_in_place(&mut ens, params, dt, &noise, &mut drift)?;
                if rec {
                    for obs in observables {
                        evaluate(&ens, params, obs, r, &mut records);
                    }
                }
            }
            Ok((records, ens))
        })
        .collect();
    let mut out = SimOutput { records: Vec::new(), finals: Vec::with_capacity(inits.len()) };
    for run in runs {
        let (records, ens) = run?;
        out.records.extend(records);
        out.finals.push(ens);
    }
    Ok(out)
}

/// Replica averages of each `(time, observable)` pair, in first-seen order.
pub fn average_over_replicas(records: &[ObservableRecord]) -> Vec<(f64, String, f64)> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for r in records {
        let key = (r.time.to_bits(), r.observable.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            keys.push((r.time, r.observable.clone()));
            sums.push((0.0, 0));
            sums.len() - 1
        });
        sums[slot].0 += r.value;
        sums[slot].1 += 1;
    }
    keys.into_iter().zip(sums).map(|((t, name), (s, c))| (t, name, s / c as f64)).collect()
}

/// CSV rows `time,observable,value,replica`.
pub fn write_records_csv<W: Write>(out: W, records: &[ObservableRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "observable", "value", "replica"])?;
    for r in records {
        w.write_record([r.time.to_string(), r.observable.clone(), r.value.to_string(), r.replica.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Monte Carlo estimate of `∫ |x_1|^k G^N(dx)`, averaged over all particles
/// and replicas.
pub fn marginal_moment(replicas: &[ParticleEnsemble], k: u32) -> Result<f64> {
    if replicas.is_empty() {
        return Err(Error::InvalidParameter("no replicas".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("moment order must be at least 1".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ens in replicas {
        for x in ens.positions.chunks_exact(ens.dim) {
            total += norm_pow(x, k);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CouplingMode {
    /// `Y` receives the same increment as `X`.
    Synchronous,
    /// `Y` receives the mirrored increment `(I - 2 e eᵀ) ΔB` until the pair meets.
    Reflection,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledEnsemble {
    /// The interacting system.
    pub x: ParticleEnsemble,
    /// Independent nonlinear particles driven by the limit law.
    pub y: ParticleEnsemble,
    pub met: Vec<bool>,
    pub mode: CouplingMode,
    pub merge_radius: f64,
}

impl CoupledEnsemble {
    pub fn new(x: ParticleEnsemble, y: ParticleEnsemble, mode: CouplingMode, merge_radius: f64) -> Result<Self> {
        if x.n_particles != y.n_particles || x.dim != y.dim {
            return Err(Error::InvalidParameter("coupled ensembles must have the same shape".into()));
        }
        if !(merge_radius >= 0.0) {
            return Err(Error::InvalidParameter("merge radius must be nonnegative".into()));
        }
        let met = vec![false; x.n_particles];
        Ok(Self { x, y, met, mode, merge_radius })
    }
}

/// Scratch buffers for [`coupled_step_with_mean`].
#[derive(Clone, Debug, Default)]
pub struct CouplingScratch {
    drift: Vec<f64>,
    diff: Vec<f64>,
    by: Vec<f64>,
}

/// Advances a coupled pair by `dt`. `mu` is the limit law at the current
/// time; only its mean enters the nonlinear drift.
pub fn coupled_step(
    c: &mut CoupledEnsemble,
    mu: &GridDensity,
    params: &ModelParams,
    dt: f64,
    noise: &[f64],
) -> Result<()> {
    if (mu.mass() - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { mass: mu.mass() });
    }
    coupled_step_with_mean(c, &[mu.mean()], params, dt, noise, &mut CouplingScratch::default())
}

/// [`coupled_step`] given the mean of the limit law directly.
///
/// The drift is applied first and the noise second; in reflection mode the
/// mirror direction comes from the difference before the step.
pub fn coupled_step_with_mean(
    c: &mut CoupledEnsemble,
    mean: &[f64],
    params: &ModelParams,
    dt: f64,
    noise: &[f64],
    scratch: &mut CouplingScratch,
) -> Result<()> {
    check_dt(dt)?;
    let d = c.x.dim;
    let n = c.x.n_particles;
    scratch.diff.resize(d, 0.0);
    scratch.by.resize(d, 0.0);

    let reflect = c.mode == CouplingMode::Reflection;
    if reflect {
        for i in 0..n {
            if !c.met[i] && c.x.particle(i) == c.y.particle(i) {
                c.met[i] = true;
            }
        }
    }

    // directions from the pre-step positions, stored in `diff` per particle
    let mut dirs = if reflect { vec![0.0; n * d] } else { Vec::new() };
    if reflect {
        for i in 0..n {
            if c.met[i] {
                continue;
            }
            let xi = &c.x.positions[i * d..(i + 1) * d];
            let yi = &c.y.positions[i * d..(i + 1) * d];
            let norm = xi.iter().zip(yi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            for k in 0..d {
                dirs[i * d + k] = (xi[k] - yi[k]) / norm;
            }
        }
    }

    em_step_in_place(&mut c.x, params, dt, noise, &mut scratch.drift)?;

    let s = (2.0 * dt).sqrt();
    for i in 0..n {
        if c.met[i] {
            continue;
        }
        let yi = &mut c.y.positions[i * d..(i + 1) * d];
        mean_field_drift_with_mean(yi, mean, params, &mut scratch.by);
        let g = &noise[i * d..(i + 1) * d];
        if reflect {
            let e = &dirs[i * d..(i + 1) * d];
            let eg: f64 = e.iter().zip(g).map(|(a, b)| a * b).sum();
            for k in 0..d {
                yi[k] += dt * scratch.by[k] + s * (g[k] - 2.0 * eg * e[k]);
            }
        } else {
            for k in 0..d {
                yi[k] += dt * scratch.by[k] + s * g[k];
            }
        }
    }
    c.y.time += dt;

    for i in 0..n {
        let xi = &c.x.positions[i * d..(i + 1) * d];
        if reflect && !c.met[i] {
            let gap: f64 = xi.iter().zip(&c.y.positions[i * d..(i + 1) * d]).map(|(a, b)| (a - b) * (a - b)).sum();
            if gap.sqrt() <= c.merge_radius {
                c.met[i] = true;
            }
        }
        if c.met[i] {
            c.y.positions[i * d..(i + 1) * d].copy_from_slice(&c.x.positions[i * d..(i + 1) * d]);
        }
    }
    check_finite(&c.y.positions, d, c.y.time, dt)
}

/// `(1/N) Σ_i |X_i - Y_i|²` for one replica.
pub fn coupling_gap(c: &CoupledEnsemble) -> f64 {
    let sq: f64 = c.x.positions.iter().zip(&c.y.positions).map(|(a, b)| (a - b) * (a - b)).sum();
    sq / c.x.n_particles as f64
}

/// Replica-averaged coupling gap along a time grid.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingRun {
    pub times: Vec<f64>,
    pub mean_gap: Vec<f64>,
    /// Standard error of `mean_gap` across replicas.
    pub std_error: Vec<f64>,
    /// Fraction of particles that have merged (reflection mode).
    pub met_fraction: Vec<f64>,
}

impl CouplingRun {
    pub fn sup_gap(&self) -> f64 {
        self.mean_gap.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest mean gap over records with `t >= from`.
    pub fn sup_gap_after(&self, from: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.mean_gap)
            .filter(|(t, _)| **t >= from)
            .map(|(_, g)| *g)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "mean_gap", "std_error", "met_fraction"])?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                self.mean_gap[k].to_string(),
                self.std_error[k].to_string(),
                self.met_fraction[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Couples `cfg.n_replicas` copies of the `N`-particle system with nonlinear
/// particles driven by the limit flow started at `mu0`.
///
/// Both systems start from the same i.i.d. draws of `mu0`. The limit
/// equation is solved once on the particle time grid and its means are
/// shared by all replicas.
pub fn simulate_coupled(
    mu0: &GridDensity,
    params: &ModelParams,
    cfg: &SimConfig,
    n_particles: usize,
    t_end: f64,
    mode: CouplingMode,
    merge_radius: f64,
) -> Result<CouplingRun> {
    let grid = TimeGrid::new(mu0.time, t_end, cfg.dt, cfg.record_interval)?;
    let mut flow = LimitFlow::new(mu0.clone(), *params, None);
    let mut means = Vec::with_capacity(grid.steps.len());
    let mut t = mu0.time;
    for &dt in &grid.steps {
        means.push(flow.current().mean());
        t += dt;
        flow.advance_to(t)?;
    }

    let per_replica: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..cfg.n_replicas)
        .into_par_iter()
        .map(|r| {
            let x = ParticleEnsemble::sample_iid(mu0, n_particles, cfg.seed, r as u64);
            let mut c = CoupledEnsemble::new(x.clone(), x, mode, merge_radius)?;
            let mut streams = NoiseStreams::new(cfg.seed, r as u64, n_particles, 1);
            let mut noise = vec![0.0; n_particles];
            let mut scratch = CouplingScratch::default();
            let mut gaps = vec![coupling_gap(&c)];
            let mut met = vec![0.0];
            for (k, (&dt, &rec)) in grid.steps.iter().zip(&grid.record_after).enumerate() {
                streams.fill(&mut noise);
                coupled_step_with_mean(&mut c, &[means[k]], params, dt, &noise, &mut scratch)?;
                if rec {
                    gaps.push(coupling_gap(&c));
                    met.push(c.met.iter().filter(|m| **m).count() as f64 / n_particles as f64);
                }
            }
            Ok((gaps, met))
        })
        .collect();

    let mut times = vec![mu0.time];
    let mut acc = mu0.time;
    for (&dt, &rec) in grid.steps.iter().zip(&grid.record_after) {
        acc += dt;
        if rec {
            times.push(acc);
        }
    }
    let runs: Vec<(Vec<f64>, Vec<f64>)> = per_replica.into_iter().collect::<Result<_>>()?;
    let m = runs.len() as f64;
    let len = times.len();
    let mut mean_gap = vec![0.0; len];
    let mut sq = vec![0.0; len];
    let mut met_fraction = vec![0.0; len];
    for (gaps, met) in &runs {
        for k in 0..len {
            mean_gap[k] += gaps[k] / m;
            sq[k] += gaps[k] * gaps[k] / m;
            met_fraction[k] += met[k] / m;
        }
    }
    let std_error = (0..len)
        .map(|k| ((sq[k] - mean_gap[k] * mean_gap[k]).max(0.0) / (m - 1.0).max(1.0)).sqrt())
        .collect();
    Ok(CouplingRun { times, mean_gap, std_error, met_fraction })
}

/// Long-run samples of the first particle's first coordinate.
///
/// Each replica runs `burn_in` time units, then contributes one sample every
/// `thin` time units until `n_per_replica` samples are collected.
pub fn langevin_samples(
    params: &ModelParams,
    n_particles: usize,
    cfg: &SimConfig,
    burn_in: f64,
    thin: f64,
    n_per_replica: usize,
) -> Result<Vec<f64>> {
    let burn_steps = (burn_in / cfg.dt).round() as usize;
    let thin_steps = ((thin / cfg.dt).round() as usize).max(1);
    let per_replica: Vec<Result<Vec<f64>>> = (0..cfg.n_replicas)
        .into_par_iter()
        .map(|r| {
            let mut ens = ParticleEnsemble::zeros(n_particles, params.dim);
            let mut streams = NoiseStreams::new(cfg.seed, r as u64, n_particles, params.dim);
            let mut noise = vec![0.0; ens.positions.len()];
            let mut drift = Vec::new();
            let mut out = Vec::with_capacity(n_per_replica);
            for _ in 0..burn_steps {
                streams.fill(&mut noise);
                em_step_in_place(&mut ens, params, cfg.dt, &noise, &mut drift)?;
            }
            while out.len() < n_per_replica {
                for _ in 0..thin_steps {
                    streams.fill(&mut noise);
                    em_step_in_place(&mut ens, params, cfg.dt, &noise, &mut drift)?;
                }
                out.push(ens.positions[0]);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_replica {
        all.extend(r?);
    }
    Ok(all)
}

/// Total-variation distance between the empirical law of `samples` and the
/// one-particle Gibbs density `Z⁻¹ e^{-V}` on `bins` cells of `[lo, hi]`.
pub fn tv_to_gibbs(samples: &[f64], params: &ModelParams, lo: f64, hi: f64, bins: usize) -> f64 {
    let counts = histogram(samples.iter().copied(), lo, hi, bins);
    let n = samples.len() as f64;
    // reference cell masses by fine midpoint quadrature
    let sub = 64;
    let h = (hi - lo) / (bins * sub) as f64;
    let mut mass = vec![0.0; bins];
    for (b, m) in mass.iter_mut().enumerate() {
        for s in 0..sub {
            let x = lo + ((b * sub + s) as f64 + 0.5) * h;
            *m += (-potential_v(&[x], params)).exp() * h;
        }
    }
    let z: f64 = mass.iter().sum();
    let inside: f64 = counts.iter().sum();
    let in_bins: f64 = counts.iter().zip(&mass).map(|(c, m)| (c / n - m / z).abs()).sum();
    0.5 * (in_bins + (n - inside) / n)
}
