use chaoskit_core::limit::{
    evolve, free_energy, moment_envelope, moment_k, signed_moment, stationary_fixed_point, FokkerPlanck, StepScratch,
};
use chaoskit_core::model::stationary_m2_bound;

use super::{fmt, grid_spec, initial_density, model, perturbation_family, Context, RunResult};
use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series, Style};
use crate::report::{write_table, Artifacts, Check, Summary};

const RESIDUAL_TOL: f64 = 1e-8;
const PARITY_TOL: f64 = 1e-10;
const M2_GRID_MARGIN: f64 = 1e-3;
const DRIFT_TOL: f64 = 1e-6;
const FE_SLACK: f64 = 1e-8;

/// Stationary measure, moment envelope and free-energy audits of the limit
/// equation.
pub fn moment_decay(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let params = model(cfg)?;
    let spec = grid_spec(cfg)?;
    let audit = &cfg.audit;
    let mut summary = Summary::new(cfg.experiment.name());

    // stationary measure
    let fp = stationary_fixed_point(spec, &params, audit.damping, audit.tol).ctx("limit")?;
    let mu_inf = fp.density.clone();
    let m1 = signed_moment(&mu_inf, 1);
    let m2 = moment_k(&mu_inf, 2);
    let m2_bound = stationary_m2_bound(params.a, params.eps, 1);
    summary.check(Check::at_most("stationary.residual", fp.residual, RESIDUAL_TOL, "L1 residual of the fixed-point map"));
    summary.check(Check::at_most("stationary.parity", m1.abs(), PARITY_TOL, "|first moment| of the stationary density"));
    summary.check(Check::at_most(
        "stationary.m2_bound",
        m2,
        m2_bound + M2_GRID_MARGIN,
        format!("second moment against sqrt((a+eps)^2+1) = {m2_bound}"),
    ));
    summary.metric("stationary.iterations", fp.iterations as f64);
    summary.metric("stationary.m2", m2);
    art.write("stationary.csv", |w| mu_inf.write_csv(w, &params)).ctx("output")?;
    let history: Vec<Vec<String>> =
        fp.history.iter().enumerate().map(|(k, r)| vec![k.to_string(), fmt(*r)]).collect();
    art.write("fixed_point_history.csv", |w| write_table(w, &["iteration", "residual"], &history)).ctx("output")?;

    let horizon = audit.stationary_horizon;
    let snaps = evolve(&mu_inf, &params, horizon, None, (horizon / 10.0).max(1e-3)).ctx("limit")?;
    let drift_rows: Vec<(f64, f64)> = snaps.iter().map(|s| (s.time, s.l1_distance(&mu_inf))).collect();
    let max_drift = drift_rows.iter().map(|r| r.1).fold(0.0, f64::max);
    summary.check(Check::at_most(
        "stationary.drift",
        max_drift,
        DRIFT_TOL,
        format!("max L1 distance to the stationary density over [0, {horizon}]"),
    ));
    let rows: Vec<Vec<String>> = drift_rows.iter().map(|(t, d)| vec![fmt(*t), fmt(*d)]).collect();
    art.write("stationary_drift.csv", |w| write_table(w, &["time", "l1_distance"], &rows)).ctx("output")?;

    // second-moment envelope
    let mu0 = initial_density(cfg, &params, spec)?;
    let m2_0 = moment_k(&mu0, 2);
    let path = evolve(&mu0, &params, cfg.sim.t_end, None, cfg.sim.record_interval).ctx("limit")?;
    let mut header = vec!["time".to_string(), "m2".to_string()];
    header.extend(audit.deltas.iter().map(|d| format!("envelope_{d}")));
    let mut rows = Vec::with_capacity(path.len());
    let mut worst = vec![0.0f64; audit.deltas.len()];
    for snap in &path {
        let m2_t = moment_k(snap, 2);
        let mut row = vec![fmt(snap.time), fmt(m2_t)];
        for (k, &delta) in audit.deltas.iter().enumerate() {
            let env = moment_envelope(m2_0, snap.time, delta, &params);
            worst[k] = worst[k].max(m2_t / env);
            row.push(fmt(env));
        }
        rows.push(row);
    }
    for (k, &delta) in audit.deltas.iter().enumerate() {
        summary.check(Check::at_most(
            format!("envelope.delta_{delta}"),
            worst[k],
            1.0 + audit.margin,
            "max over snapshots of m2(t) / envelope(t)",
        ));
    }
    summary.metric("envelope.m2_initial", m2_0);
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    art.write("envelope.csv", |w| write_table(w, &header_ref, &rows)).ctx("output")?;

    let mut plot = Plot::new("Second moment along the limit flow", "t", "m2").with(Series::new(
        "m2(t)",
        path.iter().map(|s| (s.time, moment_k(s, 2))).collect(),
        Style::Line,
    ));
    for &delta in &audit.deltas {
        plot = plot.with(Series::new(
            format!("envelope delta={delta}"),
            path.iter().map(|s| (s.time, moment_envelope(m2_0, s.time, delta, &params))).collect(),
            Style::Dashed,
        ));
    }
    art.write_string("envelope.svg", &plot.to_svg()).ctx("output")?;

    // free energy along single solver steps
    let solver = FokkerPlanck::new(spec, params);
    let mut mu = mu0.clone();
    let mut scratch = StepScratch::default();
    let mut f_prev = free_energy(&mu, &params);
    let mut max_increase = f64::NEG_INFINITY;
    let stride = (audit.fe_steps / 500).max(1);
    let mut fe_rows = vec![vec!["0".to_string(), fmt(mu.time), fmt(f_prev)]];
    for step in 1..=audit.fe_steps {
        solver.step_auto(&mut mu, f64::INFINITY, &mut scratch).ctx("limit")?;
        let f = free_energy(&mu, &params);
        max_increase = max_increase.max(f - f_prev);
        f_prev = f;
        if step % stride == 0 || step == audit.fe_steps {
            fe_rows.push(vec![step.to_string(), fmt(mu.time), fmt(f)]);
        }
    }
    summary.check(Check::at_most(
        "free_energy.monotone",
        max_increase,
        FE_SLACK,
        format!("largest one-step increase of F over {} steps", audit.fe_steps),
    ));
    art.write("free_energy.csv", |w| write_table(w, &["step", "time", "free_energy"], &fe_rows)).ctx("output")?;
    let fe_plot = Plot::new("Free energy along solver steps", "t", "F").with(Series::new(
        "F",
        fe_rows.iter().map(|r| (r[1].parse().unwrap_or(0.0), r[2].parse().unwrap_or(0.0))).collect(),
        Style::Line,
    ));
    art.write_string("free_energy.svg", &fe_plot.to_svg()).ctx("output")?;

    // the stationary density minimizes F
    let f_inf = free_energy(&mu_inf, &params);
    let family = perturbation_family(&params, spec, audit.perturbations)?;
    let mut rows = Vec::with_capacity(family.len());
    let mut min_gap = f64::INFINITY;
    for (name, p) in &family {
        let f = free_energy(p, &params);
        min_gap = min_gap.min(f - f_inf);
        rows.push(vec![name.clone(), fmt(f), fmt(f - f_inf)]);
    }
    summary.check(Check::at_least(
        "free_energy.minimizer",
        min_gap,
        0.0,
        format!("min over {} perturbations of F(mu) - F(mu_inf)", family.len()),
    ));
    summary.metric("free_energy.stationary", f_inf);
    art.write("free_energy_perturbations.csv", |w| write_table(w, &["perturbation", "free_energy", "excess"], &rows))
        .ctx("output")?;
    Ok(summary)
}
