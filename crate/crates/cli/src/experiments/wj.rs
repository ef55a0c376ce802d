use rand::Rng;

use chaoskit_core::limit::{stationary_fixed_point, GridDensity};
use chaoskit_core::model::wj_constants;
use chaoskit_core::particles::histogram;
use chaoskit_core::rng::{stream_rng, StreamTag};
use chaoskit_core::transport::{brenier_map_1d, w2_1d, wj_functional_1d, Law1d, MonotoneMap, QuantileFn};

use super::{fmt, grid_spec, model, perturbation_family, Context, RunResult};
use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series, Style};
use crate::report::{write_table, Artifacts, Check, Summary};

const QUADRATURE_MARGIN: f64 = 0.98;
const HEAT_TOL: f64 = -1e-12;
const PUSH_SAMPLES: usize = 200_000;
const PUSH_BINS: usize = 40;
const PUSH_TV: f64 = 0.02;

/// WJ inequality against the stationary density for a family of
/// perturbations, with the heat-term sign and a pushforward check on every
/// Brenier map.
pub fn wj_audit(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let params = model(cfg)?;
    let spec = grid_spec(cfg)?;
    let mut summary = Summary::new(cfg.experiment.name());

    let consts = wj_constants(params.a, params.eps, 1).ctx("model")?;
    summary.check(Check::at_least(
        "wj.feasible",
        if consts.feasible { 1.0 } else { 0.0 },
        1.0,
        format!("kappa = {} at (a, eps) = ({}, {})", consts.kappa, params.a, params.eps),
    ));
    summary.metric("kappa", consts.kappa);
    summary.metric("kappa_a", consts.kappa_a);
    summary.metric("eps_a", consts.eps_a);
    summary.metric("r_a", consts.r_a);

    let mu_inf = stationary_fixed_point(spec, &params, cfg.audit.damping, cfg.audit.tol).ctx("limit")?.density;
    let family = perturbation_family(&params, spec, cfg.audit.perturbations)?;
    let mut rows = Vec::with_capacity(family.len());
    let mut points = Vec::new();
    for (k, (name, mu)) in family.iter().enumerate() {
        let wj = wj_functional_1d(mu, &mu_inf, &params).ctx("transport")?;
        let w2 = w2_1d(Law1d::Grid(mu), Law1d::Grid(&mu_inf)).ctx("transport")?;
        let ratio = wj.j / (consts.kappa * w2);
        summary.check(Check::at_least(
            format!("wj.{name}"),
            ratio,
            QUADRATURE_MARGIN,
            format!("J / (kappa W2^2) with J = {}, W2^2 = {w2}", wj.j),
        ));
        summary.check(Check::at_least(
            format!("heat.{name}"),
            wj.min_heat_integrand,
            HEAT_TOL,
            "smallest T' + 1/T' - 2 on the map",
        ));
        let map = brenier_map_1d(&mu_inf, mu).ctx("transport")?;
        let tv = pushforward_tv(&map, &mu_inf, mu, cfg.sim.seed, k as u64);
        summary.check(Check::at_most(format!("pushforward.{name}"), tv, PUSH_TV, "TV of T#samples against mu"));
        points.push((w2, wj.j));
        rows.push(vec![
            name.clone(),
            fmt(w2),
            fmt(wj.heat_term),
            fmt(wj.drift_term),
            fmt(wj.j),
            fmt(consts.kappa * w2),
            fmt(ratio),
            fmt(wj.min_heat_integrand),
            fmt(tv),
        ]);
    }
    art.write("wj.csv", |w| {
        write_table(
            w,
            &["perturbation", "w2_sq", "heat_term", "drift_term", "j", "kappa_w2_sq", "ratio", "min_heat_integrand", "pushforward_tv"],
            &rows,
        )
    })
    .ctx("output")?;

    let max_w2 = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let plot = Plot::new("Dissipation against squared distance", "W2^2(mu, mu_inf)", "J(mu | b, mu_inf)")
        .log_x()
        .log_y()
        .with(Series::new("perturbations", points, Style::Points))
        .with(Series::new("kappa W2^2", vec![(max_w2 * 1e-3, consts.kappa * max_w2 * 1e-3), (max_w2, consts.kappa * max_w2)], Style::Dashed));
    art.write_string("wj.svg", &plot.to_svg()).ctx("output")?;
    Ok(summary)
}

/// Draws from `nu`, pushes the draws through the map and returns the total
/// variation distance of their histogram to `mu` on equal bins over the grid.
fn pushforward_tv(map: &MonotoneMap, nu: &GridDensity, mu: &GridDensity, seed: u64, index: u64) -> f64 {
    let mut rng = stream_rng(seed, StreamTag::Sampling, index);
    let q = QuantileFn::from_grid(nu);
    let pushed = (0..PUSH_SAMPLES).map(|_| apply(map, q.eval(rng.random::<f64>())));
    let (lo, hi) = (-mu.half_width, mu.half_width);
    let counts = histogram(pushed, lo, hi, PUSH_BINS);
    let width = (hi - lo) / PUSH_BINS as f64;
    let edges = mu.cdf_edges();
    let mut tv = 0.0;
    for (b, c) in counts.iter().enumerate() {
        let target = cdf_at(mu, &edges, lo + (b + 1) as f64 * width) - cdf_at(mu, &edges, lo + b as f64 * width);
        tv += (c / PUSH_SAMPLES as f64 - target).abs();
    }
    0.5 * tv
}

fn apply(map: &MonotoneMap, x: f64) -> f64 {
    let g = &map.grid;
    let k = g.partition_point(|&c| c < x);
    if k == 0 {
        return map.values[0];
    }
    if k == g.len() {
        return map.values[g.len() - 1];
    }
    let s = (x - g[k - 1]) / (g[k] - g[k - 1]);
    map.values[k - 1] + s * (map.values[k] - map.values[k - 1])
}

fn cdf_at(mu: &GridDensity, edges: &[f64], x: f64) -> f64 {
    let h = mu.cell_width();
    let pos = ((x + mu.half_width) / h).clamp(0.0, mu.n_cells as f64);
    let k = (pos.floor() as usize).min(mu.n_cells - 1);
    edges[k] + (pos - k as f64) * mu.values[k] * h
}
