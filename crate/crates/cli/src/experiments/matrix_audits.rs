use rand::Rng;
use rayon::prelude::*;

use chaoskit_core::linalg::{
    block_trace_sum, random_block_diagonal, superadditivity_audit as trace_sweep, trace_inverse, BlockMatrix,
};
use chaoskit_core::rng::{stream_rng, StreamTag};
use chaoskit_core::transport::{
    marginal_superadditivity_audit, symmetrize, tensorization_audit, write_audit_csv, AuditRow, DiscreteMeasure,
};

use super::{Context, RunResult};
use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series, Style};
use crate::report::{Artifacts, Check, Summary};

const SCHUR_TOL: f64 = 1e-9;
const BLOCK_DIAGONAL_TOL: f64 = 1e-12;
const STRICT_TOL: f64 = 1e-10;
const BLOCK_DIAGONAL_TRIALS: usize = 100;
const ATOM_SCALE: f64 = 2.0;
/// Stream offsets that keep the sub-audits independent of the main sweep.
const BLOCK_DIAGONAL_STREAM: u64 = 1 << 40;
const TENSOR_STREAM: u64 = 1 << 41;

/// Trace-of-inverse superadditivity over random SPD matrices.
pub fn trace_audit(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let a = &cfg.audit;
    let seed = cfg.sim.seed;
    let mut summary = Summary::new(cfg.experiment.name());
    let report = trace_sweep(seed, a.trials, a.d_max, a.n_max).ctx("linalg")?;
    summary.check(Check::at_most(
        "trace.violations",
        report.violations.len() as f64,
        0.0,
        format!("{} random trials", report.rows.len()),
    ));
    let schur = report.rows.iter().map(|r| r.schur_identity_error).fold(0.0, f64::max);
    summary.check(Check::at_most("trace.schur_identity", schur, SCHUR_TOL, "largest relative bordering-identity error"));
    let strict = report
        .rows
        .iter()
        .filter(|r| r.n >= 2)
        .map(|r| r.margin / r.lhs)
        .fold(f64::INFINITY, f64::min);
    if strict.is_finite() {
        summary.check(Check::at_least(
            "trace.strict_off_diagonal",
            strict,
            STRICT_TOL,
            "smallest relative margin on inputs with N >= 2 and coupled blocks",
        ));
    }

    let diag: Vec<RunResult<f64>> = (0..BLOCK_DIAGONAL_TRIALS)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, StreamTag::Audit, BLOCK_DIAGONAL_STREAM + t as u64);
            let d = rng.random_range(1..=a.d_max);
            let n = rng.random_range(1..=a.n_max);
            let s = BlockMatrix::new(random_block_diagonal(&mut rng, d, n), d, n).ctx("linalg")?;
            let (lhs, rhs) = (trace_inverse(&s).ctx("linalg")?, block_trace_sum(&s).ctx("linalg")?);
            Ok((lhs - rhs).abs() / lhs)
        })
        .collect();
    let mut worst = 0.0f64;
    for d in diag {
        worst = worst.max(d?);
    }
    summary.check(Check::at_most(
        "trace.block_diagonal_equality",
        worst,
        BLOCK_DIAGONAL_TOL,
        format!("largest relative gap over {BLOCK_DIAGONAL_TRIALS} block-diagonal inputs"),
    ));

    art.write("trace_audit.csv", |w| report.write_csv(w)).ctx("output")?;
    let json = serde_json::to_string_pretty(&report.violations).expect("counterexamples serialize");
    art.write_string("counterexamples.json", &(json + "\n")).ctx("output")?;
    let points: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.condition_number, r.margin / r.lhs)).collect();
    let plot = Plot::new("Trace superadditivity margin", "condition number", "(lhs - rhs) / lhs")
        .log_x()
        .log_y()
        .with(Series::new("trials", points, Style::Points));
    art.write_string("trace_audit.svg", &plot.to_svg()).ctx("output")?;
    Ok(summary)
}

/// Marginal superadditivity on random symmetrized pairs and tensorization on
/// random one-dimensional pairs, both with exact transport.
pub fn superadditivity_audit(cfg: &ExperimentConfig, art: &mut Artifacts) -> RunResult<Summary> {
    let a = &cfg.audit;
    let seed = cfg.sim.seed;
    let mut summary = Summary::new(cfg.experiment.name());

    let marginal: Vec<RunResult<AuditRow>> = (0..a.pairs)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, StreamTag::Audit, t as u64);
            let n = rng.random_range(1..=a.n_max);
            let d = rng.random_range(1..=a.d_max);
            let ell = rng.random_range(1..=n);
            let (kg, kf) = (rng.random_range(1..=a.atoms_max), rng.random_range(1..=a.atoms_max));
            let g = symmetrize(&DiscreteMeasure::random(&mut rng, kg, n * d, ATOM_SCALE), n).ctx("transport")?;
            let f = symmetrize(&DiscreteMeasure::random(&mut rng, kf, n * d, ATOM_SCALE), n).ctx("transport")?;
            let mut row = marginal_superadditivity_audit(&g, &f, n, ell).ctx("transport")?;
            row.audit = format!("pair{t}_d{d}_{}", row.audit);
            Ok(row)
        })
        .collect();
    let marginal: Vec<AuditRow> = marginal.into_iter().collect::<RunResult<_>>()?;
    let failures = marginal.iter().filter(|r| !r.pass).count();
    summary.check(Check::at_most(
        "marginal.violations",
        failures as f64,
        0.0,
        format!("{} symmetrized pairs, lhs <= rhs + 1e-9", marginal.len()),
    ));
    art.write("marginal_superadditivity.csv", |w| write_audit_csv(w, &marginal)).ctx("output")?;

    let tensor: Vec<RunResult<AuditRow>> = (0..a.tensor_pairs)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, StreamTag::Audit, TENSOR_STREAM + t as u64);
            let n = rng.random_range(1..=a.tensor_n_max);
            let (km, kn) = (rng.random_range(2..=3), rng.random_range(2..=3));
            let mu = DiscreteMeasure::random(&mut rng, km, 1, ATOM_SCALE);
            let nu = DiscreteMeasure::random(&mut rng, kn, 1, ATOM_SCALE);
            let mut row = tensorization_audit(&mu, &nu, n).ctx("transport")?;
            row.audit = format!("pair{t}_{}", row.audit);
            Ok(row)
        })
        .collect();
    let tensor: Vec<AuditRow> = tensor.into_iter().collect::<RunResult<_>>()?;
    let worst = tensor.iter().map(|r| (r.lhs - r.rhs).abs()).fold(0.0, f64::max);
    summary.check(Check::at_most(
        "tensorization.max_gap",
        worst,
        1e-9,
        format!("largest |lhs - rhs| over {} pairs", tensor.len()),
    ));
    art.write("tensorization.csv", |w| write_audit_csv(w, &tensor)).ctx("output")?;

    let plot = Plot::new("Marginal superadditivity", "N^-1 W2^2(full)", "l^-1 W2^2(marginals)")
        .with(Series::new("pairs", marginal.iter().map(|r| (r.rhs, r.lhs)).collect(), Style::Points))
        .with(Series::new(
            "equality",
            {
                let m = marginal.iter().map(|r| r.rhs).fold(0.0, f64::max);
                vec![(0.0, 0.0), (m, m)]
            },
            Style::Dashed,
        ));
    art.write_string("superadditivity.svg", &plot.to_svg()).ctx("output")?;
    Ok(summary)
}
