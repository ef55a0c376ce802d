//! Experiment drivers. Each one writes CSV tables, an SVG figure and
//! `summary.json` into the configured output directory.

mod chaos;
mod frontier;
mod limit_audit;
mod matrix_audits;
mod prop23;
mod wj;

use std::fmt;

use chaoskit_core::limit::{stationary_fixed_point, GridDensity, GridSpec};
use chaoskit_core::model::ModelParams;

use crate::config::{ExperimentConfig, ExperimentKind, InitKind};
use crate::report::{Artifacts, Summary};

pub use frontier::{frontier_rows, frontier_table, FRONTIER_HEADER};
pub use prop23::{dissipation_chain, fn_consistency, ChainRun, FnRow};

/// A numerical failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct RunError {
    pub context: String,
    pub source: chaoskit_core::Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.source)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

pub(crate) trait Context<T> {
    fn ctx(self, context: &str) -> RunResult<T>;
}

impl<T> Context<T> for chaoskit_core::Result<T> {
    fn ctx(self, context: &str) -> RunResult<T> {
        self.map_err(|source| RunError { context: context.to_string(), source })
    }
}

/// Runs the configured experiment and writes its artifacts.
pub fn run(cfg: &ExperimentConfig) -> RunResult<Summary> {
    let mut art = Artifacts::new(&cfg.output_dir).ctx("output")?;
    let summary = match cfg.experiment {
        ExperimentKind::MomentDecay => limit_audit::moment_decay(cfg, &mut art)?,
        ExperimentKind::ChaosScaling => chaos::chaos_scaling(cfg, &mut art)?,
        ExperimentKind::UniformInTime => chaos::uniform_in_time(cfg, &mut art)?,
        ExperimentKind::WjAudit => wj::wj_audit(cfg, &mut art)?,
        ExperimentKind::Prop23Audit => prop23::prop23_audit(cfg, &mut art)?,
        ExperimentKind::ConstantsFrontier => frontier::constants_frontier(cfg, &mut art)?,
        ExperimentKind::TraceAudit => matrix_audits::trace_audit(cfg, &mut art)?,
        ExperimentKind::SuperadditivityAudit => matrix_audits::superadditivity_audit(cfg, &mut art)?,
    };
    art.finish(summary).ctx("output")
}

pub(crate) fn fmt(v: f64) -> String {
    v.to_string()
}

pub(crate) fn model(cfg: &ExperimentConfig) -> RunResult<ModelParams> {
    ModelParams::new(cfg.model.a, cfg.model.eps, cfg.model.dim).ctx("model")
}

pub(crate) fn grid_spec(cfg: &ExperimentConfig) -> RunResult<GridSpec> {
    let l = cfg.grid.half_width.unwrap_or_else(|| GridSpec::default_half_width(cfg.model.a));
    GridSpec::new(l, cfg.grid.n_cells).ctx("grid")
}

/// Initial density of the limit equation described by `[init]`.
pub(crate) fn initial_density(cfg: &ExperimentConfig, params: &ModelParams, spec: GridSpec) -> RunResult<GridDensity> {
    let i = &cfg.init;
    match i.kind {
        InitKind::Stationary => {
            stationary_fixed_point(spec, params, cfg.audit.damping, cfg.audit.tol).map(|f| f.density).ctx("limit")
        }
        InitKind::Gaussian => GridDensity::gaussian(spec, i.mean, i.variance).ctx("limit"),
        InitKind::SecondMoment => GridDensity::gaussian_with_second_moment(spec, i.m2).ctx("limit"),
        InitKind::Uniform => GridDensity::uniform(spec, i.lo, i.hi).ctx("limit"),
    }
}

type LogProfile = Box<dyn Fn(f64) -> f64>;

/// Named perturbations of the stationary profile `exp(-x⁴ + (a+ε)x²)`:
/// shifts, dilations, linear and quadratic tilts and oscillatory factors.
pub(crate) fn perturbation_family(params: &ModelParams, spec: GridSpec, count: usize) -> RunResult<Vec<(String, GridDensity)>> {
    let c = params.a + params.eps;
    let g = move |x: f64| -x.powi(4) + c * x * x;
    let mut family: Vec<(String, LogProfile)> = Vec::new();
    for s in [0.1, -0.3, 0.5, -0.8] {
        family.push((format!("shift_{s}"), Box::new(move |x| g(x - s))));
    }
    for s in [0.8, 1.25, 0.6, 1.6] {
        family.push((format!("dilate_{s}"), Box::new(move |x| g(x / s))));
    }
    for b in [0.3, -0.7, 1.5] {
        family.push((format!("tilt_{b}"), Box::new(move |x| g(x) + b * x)));
    }
    for q in [0.5, -0.5, 1.0] {
        family.push((format!("quadratic_{q}"), Box::new(move |x| g(x) + q * x * x)));
    }
    for k in [1.0, 3.0] {
        family.push((format!("sine_{k}"), Box::new(move |x| g(x) + (1.0 + 0.4 * (k * x).sin()).ln())));
        family.push((format!("cosine_{k}"), Box::new(move |x| g(x) + (1.0 + 0.4 * (k * x).cos()).ln())));
    }
    family.push(("mixture".into(), Box::new(move |x| g(x) + (1.0 + 3.0 * (-(x - 0.7) * (x - 0.7) / 0.05).exp()).ln())));
    family.push(("shift_tilt".into(), Box::new(move |x| g(x - 0.2) + 0.4 * x)));
    if count > family.len() {
        return Err(RunError {
            context: "config".into(),
            source: chaoskit_core::Error::InvalidParameter(format!(
                "at most {} perturbations are available, {count} requested",
                family.len()
            )),
        });
    }
    family
        .into_iter()
        .take(count)
        .map(|(name, f)| GridDensity::from_log_density(spec, f).map(|d| (name, d)).ctx("limit"))
        .collect()
}
