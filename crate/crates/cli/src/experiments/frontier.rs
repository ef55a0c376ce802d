use chaoskit_core::model::{feasibility_frontier, wj_constants, WjConstants};

use super::{fmt, Context, RunResult};
use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series, Style};
use crate::report::{write_table, Artifacts, Check, Summary};

const BISECTION_TOL: f64 = 1e-9;

/// Swept `(a, constants)` pairs and the bisected frontier.
pub type FrontierTable = (Vec<(f64, WjConstants)>, Option<f64>);

pub const FRONTIER_HEADER: [&str; 9] = ["a", "eps", "r_a", "c1", "c2", "kappa_a", "eps_a", "kappa", "feasible"];

/// Constants on `points` log-spaced well depths in `[a_min, a_max]`, and the
/// largest feasible depth in that range.
pub fn frontier_table(
    a_min: f64,
    a_max: f64,
    eps: f64,
    points: usize,
    dim: usize,
) -> RunResult<FrontierTable> {
    let (l0, l1) = (a_min.ln(), a_max.ln());
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        let a = if points == 1 { a_min } else { (l0 + (l1 - l0) * k as f64 / (points - 1) as f64).exp() };
        if eps >= a / 2.0 {
            continue;
        }
        rows.push((a, wj_constants(a, eps, dim).ctx("model")?));
    }
    Ok((rows, feasibility_frontier(eps, dim, a_max)))
}

pub fn frontier_rows(rows: &[(f64, WjConstants)], eps: f64) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(a, c)| {
            vec![
                fmt(*a),
                fmt(eps),
                fmt(c.r_a),
                fmt(c.c1),
                fmt(c.c2),
                fmt(c.kappa_a),
                fmt(c.eps_a),
                fmt(c.kappa),
                c.feasible.to_string(),
            ]
        })
        .collect()
}

/// Sweep of the contraction constants over the well depth.
pub fn constants_frontier(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let (a, eps, dim) = (cfg.model.a, cfg.model.eps, cfg.model.dim);
    let audit = &cfg.audit;
    let mut summary = Summary::new(cfg.experiment.name());
    let (rows, a_star) = frontier_table(audit.a_min, audit.a_max, eps, audit.points, dim)?;
    art.write("frontier.csv", |w| write_table(w, &FRONTIER_HEADER, &frontier_rows(&rows, eps))).ctx("output")?;

    let mismatches = rows
        .iter()
        .filter(|(x, c)| match a_star {
            Some(s) => c.feasible != (*x <= s),
            None => c.feasible,
        })
        .count();
    summary.check(Check::at_most(
        "frontier.consistent",
        mismatches as f64,
        0.0,
        "swept points on the wrong side of the bisected frontier",
    ));
    let worst = rows
        .iter()
        .filter(|(_, c)| c.feasible)
        .map(|(_, c)| (c.c1.min(c.c2) - c.kappa_a) / c.kappa_a)
        .fold(f64::INFINITY, f64::min);
    if worst.is_finite() {
        summary.check(Check::at_least(
            "frontier.kappa_a_le_c1_c2",
            worst,
            -BISECTION_TOL,
            "relative margin of min(C1, C2) over kappa_a at feasible points",
        ));
    }
    summary.metric("a_star", a_star.unwrap_or(f64::NAN));
    let here = wj_constants(a, eps, dim).ctx("model")?;
    summary.metric("feasible_at_config", if here.feasible { 1.0 } else { 0.0 });
    summary.metric("kappa_at_config", here.kappa);

    let feasible: Vec<(f64, f64)> = rows.iter().filter(|(_, c)| c.feasible).map(|(a, c)| (*a, c.kappa)).collect();
    let c1: Vec<(f64, f64)> = rows.iter().map(|(a, c)| (*a, c.c1.abs())).collect();
    let four_a: Vec<(f64, f64)> = rows.iter().map(|(a, _)| (*a, 4.0 * a)).collect();
    let plot = Plot::new(format!("Contraction constants, eps = {eps}"), "a", "value")
        .log_x()
        .log_y()
        .with(Series::new("|C1|", c1, Style::Line))
        .with(Series::new("4a", four_a, Style::Dashed))
        .with(Series::new("kappa (feasible)", feasible, Style::Points));
    art.write_string("frontier.svg", &plot.to_svg()).ctx("output")?;
    Ok(summary)
}
