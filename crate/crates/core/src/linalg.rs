//! Trace-of-inverse superadditivity for block-partitioned symmetric positive
//! definite matrices: `Tr[S⁻¹] ≥ Σ_i Tr[(S_ii)⁻¹]`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{derive_key, StreamTag};

/// Relative tolerance (against `Tr[S⁻¹]`) below which a shortfall is not a violation.
pub const REL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    pub entries: DMatrix<f64>,
    pub block_dim: usize,
    pub n_blocks: usize,
}

impl BlockMatrix {
    /// Checks shape, symmetry (to `1e-12` relative to the largest entry) and
    /// positive definiteness.
    pub fn new(entries: DMatrix<f64>, block_dim: usize, n_blocks: usize) -> Result<Self> {
        let size = block_dim * n_blocks;
        if block_dim == 0 || n_blocks == 0 || entries.nrows() != size || entries.ncols() != size {
            return Err(Error::InvalidParameter(format!(
                "a {}x{} matrix cannot hold {n_blocks} blocks of size {block_dim}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.amax().max(1.0);
        for i in 0..size {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Cholesky::new(entries.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { entries, block_dim, n_blocks })
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.block_dim;
        self.entries.view((i * d, j * d), (d, d)).into_owned()
    }

    /// Leading principal submatrix made of the first `k` block rows and columns.
    pub fn leading(&self, k: usize) -> DMatrix<f64> {
        let s = k * self.block_dim;
        self.entries.view((0, 0), (s, s)).into_owned()
    }
}

/// `Tr[A⁻¹] = ‖L⁻¹‖_F²` from the Cholesky factor `A = L Lᵀ`.
pub fn trace_inverse_of(a: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)?;
    let n = a.nrows();
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(linv.norm_squared())
}

pub fn trace_inverse(s: &BlockMatrix) -> Result<f64> {
    trace_inverse_of(&s.entries)
}

/// `Σ_i Tr[(S_ii)⁻¹]`.
pub fn block_trace_sum(s: &BlockMatrix) -> Result<f64> {
    (0..s.n_blocks).map(|i| trace_inverse_of(&s.block(i, i))).sum()
}

/// One step of the bordering recursion: `S^{k+1} = [[S^k, δ], [δᵀ, Z]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchurStep {
    pub k: usize,
    /// `Tr[(S^{k+1})⁻¹]` computed directly.
    pub direct: f64,
    /// `Tr[(S^k)⁻¹] + Tr[S⁻¹δ Z̃ δᵀS⁻¹] + Tr[Z̃]` with `Z̃ = (Z - δᵀS⁻¹δ)⁻¹`.
    pub recursion: f64,
    /// `Tr[(S^{k+1})⁻¹] - Tr[(S^k)⁻¹]` by the recursion.
    pub increment: f64,
    /// `Tr[Z⁻¹]`, the matching increment of the block-diagonal sum.
    pub block_increment: f64,
}

/// Replays the bordering recursion over the block partition, one block at a time.
pub fn schur_replay(s: &BlockMatrix) -> Result<Vec<SchurStep>> {
    let d = s.block_dim;
    let mut steps = Vec::with_capacity(s.n_blocks.saturating_sub(1));
    for k in 1..s.n_blocks {
        let top = s.leading(k);
        let size = k * d;
        let delta = s.entries.view((0, size), (size, d)).into_owned();
        let z = s.block(k, k);
        let chol = Cholesky::new(top.clone()).ok_or(Error::NotPositiveDefinite)?;
        let sinv_delta = chol.solve(&delta);
        let schur = &z - delta.transpose() * &sinv_delta;
        let z_tilde = Cholesky::new(schur).ok_or(Error::NotPositiveDefinite)?.inverse();
        let cross = (&sinv_delta * &z_tilde * sinv_delta.transpose()).trace();
        let increment = cross + z_tilde.trace();
        let base = trace_inverse_of(&top)?;
        steps.push(SchurStep {
            k,
            direct: trace_inverse_of(&s.leading(k + 1))?,
            recursion: base + increment,
            increment,
            block_increment: trace_inverse_of(&z)?,
        });
    }
    Ok(steps)
}

/// `MᵀM + ridge I` with standard normal `M`.
pub fn random_spd<R: Rng>(rng: &mut R, size: usize, ridge: f64) -> DMatrix<f64> {
    let m = DMatrix::<f64>::from_fn(size, size, |_, _| rng.sample(StandardNormal));
    m.transpose() * &m + DMatrix::identity(size, size) * ridge
}

/// Block-diagonal matrix with independent random SPD blocks.
pub fn random_block_diagonal<R: Rng>(rng: &mut R, block_dim: usize, n_blocks: usize) -> DMatrix<f64> {
    let size = block_dim * n_blocks;
    let mut out = DMatrix::zeros(size, size);
    for b in 0..n_blocks {
        let blk = random_spd(rng, block_dim, 1e-6);
        out.view_mut((b * block_dim, b * block_dim), (block_dim, block_dim)).copy_from(&blk);
    }
    out
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub d: usize,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub condition_number: f64,
    /// Largest `|direct - recursion| / direct` over the bordering steps.
    pub schur_identity_error: f64,
    /// Smallest `increment - block_increment` over the bordering steps.
    pub min_increment_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub d: usize,
    pub n: usize,
    /// Column-major entries.
    pub matrix: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuperadditivityReport {
    pub rows: Vec<TrialRow>,
    pub violations: Vec<Counterexample>,
}

impl SuperadditivityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    /// CSV rows `trial,d,N,lhs,rhs,margin,condition_number`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "d", "N", "lhs", "rhs", "margin", "condition_number"])?;
        for r in &self.rows {
            w.write_record([
                r.trial.to_string(),
                r.d.to_string(),
                r.n.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.margin.to_string(),
                r.condition_number.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn audit_matrix(trial: usize, s: &BlockMatrix) -> Result<(TrialRow, Option<Counterexample>)> {
    let lhs = trace_inverse(s)?;
    let rhs = block_trace_sum(s)?;
    let steps = schur_replay(s)?;
    let schur_identity_error = steps.iter().map(|st| (st.direct - st.recursion).abs() / st.direct).fold(0.0, f64::max);
    let min_increment_margin =
        steps.iter().map(|st| st.increment - st.block_increment).fold(f64::INFINITY, f64::min);
    let tol = REL_TOL * lhs;
    let mut reason = Vec::new();
    if lhs < rhs - tol {
        reason.push("trace inequality");
    }
    if schur_identity_error > REL_TOL {
        reason.push("bordering identity");
    }
    if min_increment_margin < -tol {
        reason.push("recursion increment");
    }
    let row = TrialRow {
        trial,
        d: s.block_dim,
        n: s.n_blocks,
        lhs,
        rhs,
        margin: lhs - rhs,
        condition_number: condition_number(&s.entries),
        schur_identity_error,
        min_increment_margin,
    };
    let cx = (!reason.is_empty()).then(|| Counterexample {
        trial,
        d: s.block_dim,
        n: s.n_blocks,
        matrix: s.entries.as_slice().to_vec(),
        lhs,
        rhs,
        reason: reason.join(", "),
    });
    Ok((row, cx))
}

/// Random sweep: trial `t` draws `d ≤ d_max`, `N ≤ n_max` and an SPD matrix
/// from its own stream, checks the trace inequality and replays the
/// bordering recursion.
pub fn superadditivity_audit(seed: u64, trials: usize, d_max: usize, n_max: usize) -> Result<SuperadditivityReport> {
    if trials == 0 || d_max == 0 || n_max == 0 {
        return Err(Error::InvalidParameter("trials, d_max and n_max must be positive".into()));
    }
    let results: Vec<Result<(TrialRow, Option<Counterexample>)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_key(seed, StreamTag::Audit, t as u64));
            let d = rng.random_range(1..=d_max);
            let n = rng.random_range(1..=n_max);
            let s = BlockMatrix::new(random_spd(&mut rng, d * n, 1e-6), d, n)?;
            audit_matrix(t, &s)
        })
        .collect();
    let mut report = SuperadditivityReport { rows: Vec::with_capacity(trials), violations: Vec::new() };
    for r in results {
        let (row, cx) = r?;
        report.rows.push(row);
        report.violations.extend(cx);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_inverse_examples() {
        let id = BlockMatrix::new(DMatrix::identity(6, 6), 3, 2).unwrap();
        assert!((trace_inverse(&id).unwrap() - 6.0).abs() < 1e-14);
        assert!((block_trace_sum(&id).unwrap() - 6.0).abs() < 1e-14);
        let two = BlockMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), 1, 2).unwrap();
        assert!((trace_inverse(&two).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!((block_trace_sum(&two).unwrap() - 1.0).abs() < 1e-14);
        let diag = BlockMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0, 0.5])), 1, 3)
            .unwrap();
        assert!((trace_inverse(&diag).unwrap() - 2.75).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(BlockMatrix::new(asym, 1, 2).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(BlockMatrix::new(indefinite, 1, 2), Err(Error::NotPositiveDefinite)));
        assert!(BlockMatrix::new(DMatrix::identity(4, 4), 3, 2).is_err());
    }

    #[test]
    fn block_diagonal_gives_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(1..=3);
            let n = rng.random_range(1..=4);
            let s = BlockMatrix::new(random_block_diagonal(&mut rng, d, n), d, n).unwrap();
            let (lhs, rhs) = (trace_inverse(&s).unwrap(), block_trace_sum(&s).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn near_singular_two_by_two_margin_blows_up() {
        // [[a, c], [c, b]]: lhs = (a + b)/(ab - c²), rhs = 1/a + 1/b
        let (a, b) = (2.0, 3.0);
        let mut last = 0.0;
        for c in [1.0, 2.0, 2.4, 2.449, 2.44948] {
            let s = BlockMatrix::new(DMatrix::from_row_slice(2, 2, &[a, c, c, b]), 1, 2).unwrap();
            let lhs = trace_inverse(&s).unwrap();
            let rhs = block_trace_sum(&s).unwrap();
            assert!((lhs - (a + b) / (a * b - c * c)).abs() < 1e-9 * lhs);
            assert!((rhs - (1.0 / a + 1.0 / b)).abs() < 1e-14);
            assert!(lhs - rhs > last);
            last = lhs - rhs;
        }
        assert!(last > 1e4);
    }

    #[test]
    fn schur_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = BlockMatrix::new(random_spd(&mut rng, 8, 1e-6), 2, 4).unwrap();
        for st in schur_replay(&s).unwrap() {
            assert!((st.direct - st.recursion).abs() <= 1e-9 * st.direct);
            assert!(st.increment >= st.block_increment - 1e-9 * st.direct);
        }
    }

    #[test]
    fn small_audit_passes_and_is_reproducible() {
        let a = superadditivity_audit(1, 40, 3, 4).unwrap();
        let b = superadditivity_audit(1, 40, 3, 4).unwrap();
        assert!(a.pass());
        assert_eq!(a.rows, b.rows);
    }
}
