use chaoskit_core::limit::{evolve, stationary_fixed_point, GridDensity};
use chaoskit_core::model::ModelParams;
use chaoskit_core::particles::{simulate_coupled, CouplingRun, SimConfig};

use super::{fmt, grid_spec, initial_density, model, Context, RunResult};
use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series, Style};
use crate::report::{write_table, Artifacts, Check, Summary};

/// Relaxation errors outside this window are dominated by the transient or
/// by round-off and are left out of the rate fit.
const FIT_WINDOW: (f64, f64) = (1e-11, 1e-2);

/// Coupling gap against `N` over a short horizon.
pub fn chaos_scaling(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let mut summary = Summary::new(cfg.experiment.name());
    scaling(cfg, art, &mut summary, false)?;
    Ok(summary)
}

/// Coupling gap against `N` over a long horizon at feasible parameters,
/// with boundedness in time and the measured relaxation rate.
pub fn uniform_in_time(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let mut summary = Summary::new(cfg.experiment.name());
    scaling(cfg, art, &mut summary, true)?;
    Ok(summary)
}

fn scaling(cfg: &ExperimentConfig, art: &mut Artifacts, summary: &mut Summary, long_run: bool) -> RunResult<()> {
    let params = model(cfg)?;
    let spec = grid_spec(cfg)?;
    let mu0 = initial_density(cfg, &params, spec)?;
    let s = &cfg.sim;
    let sim = SimConfig::new(s.dt, s.seed, s.replicas).ctx("particles")?.with_record_interval(s.record_interval);
    let mut sizes = s.n_particles.clone();
    sizes.sort_unstable();
    sizes.dedup();

    let mut runs: Vec<(usize, CouplingRun)> = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let run = simulate_coupled(&mu0, &params, &sim, n, s.t_end, s.coupling, cfg.merge_radius(s.dt))
            .ctx(&format!("particles (N = {n})"))?;
        art.write(&format!("gap_N{n}.csv"), |w| run.write_csv(w)).ctx("output")?;
        runs.push((n, run));
    }

    let half = s.t_end / 2.0;
    let mut rows = Vec::new();
    for (n, run) in &runs {
        let early = early_sup(run, half);
        let late = run.sup_gap_after(half);
        rows.push(vec![n.to_string(), fmt(run.sup_gap()), fmt(early), fmt(late)]);
        summary.metric(format!("sup_gap.N{n}"), run.sup_gap());
        if long_run {
            summary.check(Check::at_most(
                format!("bounded.N{n}"),
                late / early,
                2.0,
                format!("sup gap over [{half}, {}] / sup gap over [0, {half}]", s.t_end),
            ));
        }
    }
    art.write("scaling.csv", |w| write_table(w, &["N", "sup_gap", "sup_gap_early", "sup_gap_late"], &rows))
        .ctx("output")?;

    for pair in runs.windows(2) {
        let ((n0, r0), (n1, r1)) = (&pair[0], &pair[1]);
        let r = *n1 as f64 / *n0 as f64;
        summary.check(Check::within(
            format!("ratio.N{n0}_N{n1}"),
            r0.sup_gap() / r1.sup_gap(),
            r / 2.0,
            2.0 * r,
            format!("sup gap ratio, expected about {r} for a C/N law"),
        ));
    }

    if s.halve_dt {
        let n = sizes[0];
        let fine = SimConfig::new(s.dt / 2.0, s.seed, s.replicas)
            .ctx("particles")?
            .with_record_interval(s.record_interval);
        let run = simulate_coupled(&mu0, &params, &fine, n, s.t_end, s.coupling, cfg.merge_radius(s.dt / 2.0))
            .ctx(&format!("particles (N = {n}, dt / 2)"))?;
        art.write(&format!("gap_N{n}_half_dt.csv"), |w| run.write_csv(w)).ctx("output")?;
        summary.check(Check::within(
            format!("dt_halving.N{n}"),
            run.sup_gap() / runs[0].1.sup_gap(),
            0.5,
            2.0,
            "sup gap at dt / 2 over sup gap at dt",
        ));
    }

    let mut plot = Plot::new("Replica-averaged coupling gap", "t", "(1/N) sum |X - Y|^2").log_y();
    for (n, run) in &runs {
        plot = plot.with(Series::new(
            format!("N = {n}"),
            run.times.iter().copied().zip(run.mean_gap.iter().copied()).collect(),
            Style::Line,
        ));
    }
    art.write_string("gap.svg", &plot.to_svg()).ctx("output")?;

    let n_plot = Plot::new("Sup of the coupling gap against N", "N", "sup gap").log_x().log_y().with(Series::new(
        "sup gap",
        runs.iter().map(|(n, r)| (*n as f64, r.sup_gap())).collect(),
        Style::Points,
    ));
    art.write_string("scaling.svg", &n_plot.to_svg()).ctx("output")?;

    if long_run {
        let alpha = relaxation_rate(cfg, &params, art)?;
        summary.metric("relaxation_rate", alpha);
        let delta = cfg
            .audit
            .corollary_delta
            .unwrap_or(1.0 / (2.0 * (alpha + 4.0 * (params.a + params.eps + cfg.audit.eta))));
        summary.metric("switch_delta", delta);
        for (n, _) in &runs {
            summary.metric(format!("switch_time.N{n}"), delta * (*n as f64).ln());
        }
    }
    Ok(())
}

fn early_sup(run: &CouplingRun, until: f64) -> f64 {
    run.times.iter().zip(&run.mean_gap).filter(|(t, _)| **t <= until).map(|(_, g)| *g).fold(0.0, f64::max)
}

/// Exponential rate of `‖μ_t - μ∞‖₁` from a unit Gaussian start, fitted by
/// least squares on the log error.
fn relaxation_rate(cfg: &ExperimentConfig, params: &ModelParams, art: &mut Artifacts) -> RunResult<f64> {
    let spec = grid_spec(cfg)?;
    let mu_inf = stationary_fixed_point(spec, params, cfg.audit.damping, cfg.audit.tol).ctx("limit")?.density;
    let start = GridDensity::gaussian(spec, 0.0, 1.0).ctx("limit")?;
    let path = evolve(&start, params, cfg.sim.t_end, None, cfg.sim.record_interval).ctx("limit")?;
    let errs: Vec<(f64, f64)> = path.iter().map(|s| (s.time, s.l1_distance(&mu_inf))).collect();
    let rows: Vec<Vec<String>> = errs.iter().map(|(t, e)| vec![fmt(*t), fmt(*e)]).collect();
    art.write("relaxation.csv", |w| write_table(w, &["time", "l1_distance"], &rows)).ctx("output")?;

    let pts: Vec<(f64, f64)> =
        errs.iter().filter(|(_, e)| *e > FIT_WINDOW.0 && *e < FIT_WINDOW.1).map(|(t, e)| (*t, e.ln())).collect();
    if pts.len() < 2 {
        return Ok(f64::NAN);
    }
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    Ok(-sxy / sxx)
}
