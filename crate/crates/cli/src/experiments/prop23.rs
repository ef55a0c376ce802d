use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use chaoskit_core::limit::{GridDensity, LimitFlow};
use chaoskit_core::model::ModelParams;
use chaoskit_core::particles::{coupled_step_with_mean, CoupledEnsemble, CouplingScratch, ParticleEnsemble, TimeGrid};
use chaoskit_core::rng::{stream_rng, NoiseStreams, StreamTag};
use chaoskit_core::transport::{f_n_closed_form, f_n_functional, w2_exact_discrete, DiscreteMeasure, QuantileFn};

use super::{fmt, grid_spec, initial_density, model, Context, RunResult};
use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series, Style};
use crate::report::{write_table, Artifacts, Check, Summary};

const SIGMAS: f64 = 3.0;
const TIGHT_TOL: f64 = 1e-12;
/// Offset of the copula streams inside the sampling family.
const COPULA_STREAM: u64 = 1 << 40;

/// Positions of the particle cloud and of its nonlinear copy.
type CloudPair = (Vec<f64>, Vec<f64>);

/// One row of the F_N consistency sweep.
#[derive(Clone, Debug, Serialize)]
pub struct FnRow {
    pub eps: f64,
    pub n: usize,
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    pub closed_form: f64,
    /// `|mc_estimate - closed_form| / mc_std_error`.
    pub z_score: f64,
    pub cross_term: f64,
    pub cross_z_score: f64,
    pub definitional: f64,
    pub bound_eps2_m2: f64,
    pub bound_4eps2_m2: f64,
}

fn z(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff.abs() / se
    }
}

/// Monte Carlo against closed form of `F_N` for every `(eps, N)` pair.
pub fn fn_consistency(
    mu: &GridDensity,
    a: f64,
    eps_values: &[f64],
    sizes: &[usize],
    mc_samples: usize,
    seed: u64,
) -> RunResult<Vec<FnRow>> {
    let mut rows = Vec::new();
    for &eps in eps_values {
        let params = ModelParams::new(a, eps, 1).ctx("model")?;
        for &n in sizes {
            let f = f_n_functional(mu, &params, n, mc_samples, seed).ctx("transport")?;
            rows.push(FnRow {
                eps,
                n,
                mc_estimate: f.mc_estimate,
                mc_std_error: f.mc_std_error,
                closed_form: f.closed_form,
                z_score: z(f.mc_estimate - f.closed_form, f.mc_std_error),
                cross_term: f.cross_term,
                cross_z_score: z(f.cross_term, f.cross_std_error),
                definitional: f.definitional,
                bound_eps2_m2: f.bound_eps2_m2,
                bound_4eps2_m2: f.bound_4eps2_m2,
            });
        }
    }
    Ok(rows)
}

/// Time series of the small-N dissipation chain.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub n: usize,
    pub times: Vec<f64>,
    /// Exact discrete `W₂²` between the particle cloud and the product cloud.
    pub w2_sq: Vec<f64>,
    /// Cost of pairing each replica with its own nonlinear copy.
    pub pairing_cost: Vec<f64>,
    pub f_n: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl ChainRun {
    pub fn slack(&self) -> Vec<f64> {
        self.rhs.iter().zip(&self.w2_sq).map(|(r, l)| r - l).collect()
    }
}

/// Initial positions of one replica: i.i.d. draws, or an exchangeable
/// Gaussian copula with the given correlation mapped through `μ₀`'s quantile.
fn initial_positions(mu0: &GridDensity, q: &QuantileFn, n: usize, seed: u64, replica: u64, rho: f64) -> ParticleEnsemble {
    if rho == 0.0 {
        return ParticleEnsemble::sample_iid(mu0, n, seed, replica);
    }
    let mut rng = stream_rng(seed, StreamTag::Sampling, COPULA_STREAM + replica);
    let common: f64 = StandardNormal.sample(&mut rng);
    let positions = (0..n)
        .map(|_| {
            let own: f64 = StandardNormal.sample(&mut rng);
            let g = rho.sqrt() * common + (1.0 - rho).sqrt() * own;
            q.eval(0.5 * erfc(-g / std::f64::consts::SQRT_2))
        })
        .collect();
    ParticleEnsemble { positions, time: mu0.time, n_particles: n, dim: 1 }
}

/// Runs `replicas` copies of the `n`-particle system next to synchronously
/// driven nonlinear particles and evaluates both sides of the chain
/// `W₂²(t) ≤ W₂²(0) + η ∫ W₂² + η⁻¹ ∫ F_N` on the record grid.
///
/// With an i.i.d. start the nonlinear particles share the initial positions,
/// otherwise they are drawn independently from `μ₀`. In both cases their
/// joint law is `μ_t^{⊗n}`.
pub fn dissipation_chain(cfg: &ExperimentConfig, mu0: &GridDensity, params: &ModelParams, n: usize) -> RunResult<ChainRun> {
    let s = &cfg.sim;
    let grid = TimeGrid::new(mu0.time, s.t_end, s.dt, s.record_interval).ctx("particles")?;
    let mut flow = LimitFlow::new(mu0.clone(), *params, None);
    let mut means = Vec::with_capacity(grid.steps.len());
    let mut times = vec![mu0.time];
    let mut f_n = vec![f_n_closed_form(mu0, params, n)];
    let mut t = mu0.time;
    for (&dt, &rec) in grid.steps.iter().zip(&grid.record_after) {
        means.push(flow.current().mean());
        t += dt;
        let mu = flow.advance_to(t).ctx("limit")?;
        if rec {
            times.push(t);
            f_n.push(f_n_closed_form(mu, params, n));
        }
    }

    let rho = cfg.init.correlation;
    let q = QuantileFn::from_grid(mu0);
    let merge = cfg.merge_radius(s.dt);
    let per_replica: Vec<RunResult<Vec<CloudPair>>> = (0..s.replicas)
        .into_par_iter()
        .map(|r| {
            let x = initial_positions(mu0, &q, n, s.seed, r as u64, rho);
            let y = if rho == 0.0 {
                x.clone()
            } else {
                ParticleEnsemble::sample_iid(mu0, n, s.seed, (s.replicas + r) as u64)
            };
            let mut c = CoupledEnsemble::new(x, y, s.coupling, merge).ctx("particles")?;
            let mut streams = NoiseStreams::new(s.seed, r as u64, n, 1);
            let mut noise = vec![0.0; n];
            let mut scratch = CouplingScratch::default();
            let mut clouds = vec![(c.x.positions.clone(), c.y.positions.clone())];
            for (k, (&dt, &rec)) in grid.steps.iter().zip(&grid.record_after).enumerate() {
                streams.fill(&mut noise);
                coupled_step_with_mean(&mut c, &[means[k]], params, dt, &noise, &mut scratch).ctx("particles")?;
                if rec {
                    clouds.push((c.x.positions.clone(), c.y.positions.clone()));
                }
            }
            Ok(clouds)
        })
        .collect();
    let per_replica: Vec<Vec<CloudPair>> = per_replica.into_iter().collect::<RunResult<_>>()?;

    let costs: Vec<RunResult<(f64, f64)>> = (0..times.len())
        .into_par_iter()
        .map(|k| {
            let xs: Vec<f64> = per_replica.iter().flat_map(|r| r[k].0.iter().copied()).collect();
            let ys: Vec<f64> = per_replica.iter().flat_map(|r| r[k].1.iter().copied()).collect();
            let pairing = xs.iter().zip(&ys).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.replicas as f64;
            let gx = DiscreteMeasure::uniform(xs, n).ctx("transport")?;
            let gy = DiscreteMeasure::uniform(ys, n).ctx("transport")?;
            Ok((w2_exact_discrete(&gx, &gy).ctx("transport")?.cost, pairing))
        })
        .collect();
    let costs: Vec<(f64, f64)> = costs.into_iter().collect::<RunResult<_>>()?;
    let w2_sq: Vec<f64> = costs.iter().map(|c| c.0).collect();
    let pairing_cost = costs.iter().map(|c| c.1).collect();

    let eta = cfg.audit.eta;
    let mut rhs = vec![w2_sq[0]];
    let (mut int_w2, mut int_f) = (0.0, 0.0);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        int_w2 += 0.5 * h * (w2_sq[k] + w2_sq[k - 1]);
        int_f += 0.5 * h * (f_n[k] + f_n[k - 1]);
        rhs.push(w2_sq[0] + eta * int_w2 + int_f / eta);
    }
    Ok(ChainRun { n, times, w2_sq, pairing_cost, f_n, rhs })
}

/// Small-N dissipation chain with exact transport plus the F_N sweep.
pub fn prop23_audit(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let params = model(cfg)?;
    let spec = grid_spec(cfg)?;
    let mu0 = initial_density(cfg, &params, spec)?;
    let mut summary = Summary::new(cfg.experiment.name());

    for &n in &cfg.sim.n_particles {
        let run = dissipation_chain(cfg, &mu0, &params, n)?;
        let slack = run.slack();
        let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.check(Check::at_least(
            format!("chain.N{n}"),
            min_slack,
            0.0,
            format!("min over {} record times of rhs - W2^2", run.times.len()),
        ));
        summary.check(Check::at_most(
            format!("tight_at_zero.N{n}"),
            slack[0].abs(),
            TIGHT_TOL,
            "both sides coincide at t = 0",
        ));
        summary.metric(format!("w2_sq_end.N{n}"), *run.w2_sq.last().unwrap_or(&0.0));
        summary.metric(format!("min_slack_after_start.N{n}"), slack[1..].iter().cloned().fold(f64::INFINITY, f64::min));
        let rows: Vec<Vec<String>> = (0..run.times.len())
            .map(|k| {
                vec![
                    fmt(run.times[k]),
                    fmt(run.w2_sq[k]),
                    fmt(run.w2_sq[k] / n as f64),
                    fmt(run.pairing_cost[k]),
                    fmt(run.f_n[k]),
                    fmt(run.rhs[k]),
                    fmt(slack[k]),
                ]
            })
            .collect();
        art.write(&format!("chain_N{n}.csv"), |w| {
            write_table(w, &["time", "w2_sq", "w2_sq_per_particle", "pairing_cost", "f_n", "rhs", "slack"], &rows)
        })
        .ctx("output")?;
        let plot = Plot::new(format!("Dissipation chain, N = {n}"), "t", "squared distance")
            .with(Series::new("W2^2(t)", run.times.iter().copied().zip(run.w2_sq.iter().copied()).collect(), Style::Line))
            .with(Series::new("right-hand side", run.times.iter().copied().zip(run.rhs.iter().copied()).collect(), Style::Dashed))
            .with(Series::new(
                "pairing cost",
                run.times.iter().copied().zip(run.pairing_cost.iter().copied()).collect(),
                Style::Points,
            ));
        art.write_string(&format!("chain_N{n}.svg"), &plot.to_svg()).ctx("output")?;
    }

    let a = &cfg.audit;
    let rows = fn_consistency(&mu0, params.a, &a.fn_eps, &a.fn_sizes, a.mc_samples, cfg.sim.seed)?;
    for r in &rows {
        summary.check(Check::at_most(
            format!("fn.eps{}_N{}", r.eps, r.n),
            r.z_score,
            SIGMAS,
            format!("|MC - closed form| in standard errors (closed form {})", r.closed_form),
        ));
        summary.check(Check::at_most(
            format!("fn_cross.eps{}_N{}", r.eps, r.n),
            r.cross_z_score,
            SIGMAS,
            "|cross term| in standard errors",
        ));
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.eps),
                r.n.to_string(),
                fmt(r.mc_estimate),
                fmt(r.mc_std_error),
                fmt(r.closed_form),
                fmt(r.z_score),
                fmt(r.cross_term),
                fmt(r.cross_z_score),
                fmt(r.definitional),
                fmt(r.bound_eps2_m2),
                fmt(r.bound_4eps2_m2),
            ]
        })
        .collect();
    art.write("f_n.csv", |w| {
        write_table(
            w,
            &[
                "eps",
                "N",
                "mc_estimate",
                "mc_std_error",
                "closed_form",
                "z_score",
                "cross_term",
                "cross_z_score",
                "definitional",
                "bound_eps2_m2",
                "bound_4eps2_m2",
            ],
            &table,
        )
    })
    .ctx("output")?;
    Ok(summary)
}
