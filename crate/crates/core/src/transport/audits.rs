//! Product measures, block symmetrization and the exact-OT audits of
//! tensorization and marginal superadditivity.

use std::io::Write;

use serde::Serialize;

use super::exact::w2_exact_discrete;
use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};

/// Largest block count accepted by [`symmetrize`] (`N!` permutations).
pub const MAX_SYMMETRIZE_BLOCKS: usize = 6;

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// The `n`-fold product `μ^{⊗n}`; block `k` of an atom is the `k`-th factor.
pub fn tensor_power(mu: &DiscreteMeasure, n: usize) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::InvalidParameter("tensor power needs n >= 1".into()));
    }
    let m = mu.len();
    let count = m
        .checked_pow(n as u32)
        .ok_or(Error::TooLarge { rows: m, cols: n, cap: usize::MAX })?;
    let d = mu.dim;
    let mut points = Vec::with_capacity(count * n * d);
    let mut weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; n];
    for _ in 0..count {
        let mut w = 1.0;
        for &k in &idx {
            points.extend_from_slice(mu.point(k));
            w *= mu.weights[k];
        }
        weights.push(w);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < m {
                break;
            }
            *slot = 0;
        }
    }
    DiscreteMeasure::from_unnormalized(points, weights, n * d)
}

fn block_dim(g: &DiscreteMeasure, n_blocks: usize) -> Result<usize> {
    if n_blocks == 0 || !g.dim.is_multiple_of(n_blocks) {
        return Err(Error::InvalidParameter(format!("dimension {} does not split into {n_blocks} blocks", g.dim)));
    }
    Ok(g.dim / n_blocks)
}

fn permute_blocks(point: &[f64], perm: &[usize], d: usize, out: &mut Vec<f64>) {
    for &p in perm {
        out.extend_from_slice(&point[p * d..(p + 1) * d]);
    }
}

/// Average of `g` over all permutations of its `n_blocks` coordinate blocks.
pub fn symmetrize(g: &DiscreteMeasure, n_blocks: usize) -> Result<DiscreteMeasure> {
    let d = block_dim(g, n_blocks)?;
    if n_blocks > MAX_SYMMETRIZE_BLOCKS {
        return Err(Error::InvalidParameter(format!(
            "symmetrization over {n_blocks}! permutations exceeds the cap of {MAX_SYMMETRIZE_BLOCKS} blocks"
        )));
    }
    let perms = permutations(n_blocks);
    let scale = 1.0 / perms.len() as f64;
    let mut points = Vec::with_capacity(g.points.len() * perms.len());
    let mut weights = Vec::with_capacity(g.len() * perms.len());
    for i in 0..g.len() {
        for perm in &perms {
            permute_blocks(g.point(i), perm, d, &mut points);
            weights.push(g.weights[i] * scale);
        }
    }
    DiscreteMeasure::from_unnormalized(points, weights, g.dim)
}

/// Atoms (point, weight) merged over exact duplicates and sorted.
fn canonical(points: &[f64], weights: &[f64], dim: usize) -> Vec<(Vec<f64>, f64)> {
    let mut atoms: Vec<(Vec<f64>, f64)> =
        points.chunks_exact(dim).map(|p| p.to_vec()).zip(weights.iter().copied()).collect();
    atoms.sort_by(|a, b| a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(atoms.len());
    for (p, w) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => merged.push((p, w)),
        }
    }
    merged
}

/// Whether `g` is invariant under every permutation of its blocks, with
/// weights compared to `tol`.
pub fn is_block_symmetric(g: &DiscreteMeasure, n_blocks: usize, tol: f64) -> Result<bool> {
    let d = block_dim(g, n_blocks)?;
    let reference = canonical(&g.points, &g.weights, g.dim);
    for perm in permutations(n_blocks).iter().skip(1) {
        let mut points = Vec::with_capacity(g.points.len());
        for i in 0..g.len() {
            permute_blocks(g.point(i), perm, d, &mut points);
        }
        let other = canonical(&points, &g.weights, g.dim);
        if other.len() != reference.len()
            || other.iter().zip(&reference).any(|(a, b)| a.0 != b.0 || (a.1 - b.1).abs() > tol)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Marginal of `g` on its first `ell` blocks.
pub fn block_marginal(g: &DiscreteMeasure, n_blocks: usize, ell: usize) -> Result<DiscreteMeasure> {
    let d = block_dim(g, n_blocks)?;
    if ell == 0 || ell > n_blocks {
        return Err(Error::InvalidParameter(format!("ell = {ell} must lie in [1, {n_blocks}]")));
    }
    let keep = ell * d;
    let points = (0..g.len()).flat_map(|i| g.point(i)[..keep].iter().copied()).collect();
    DiscreteMeasure::from_unnormalized(points, g.weights.clone(), keep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub audit: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `lhs = W₂²(μ^{⊗n}, ν^{⊗n})` and `rhs = n W₂²(μ, ν)`.
pub fn tensorization_audit(mu: &DiscreteMeasure, nu: &DiscreteMeasure, n: usize) -> Result<AuditRow> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::InvalidParameter("tensorization audit expects 1-D measures".into()));
    }
    if n == 0 || n > 4 {
        return Err(Error::InvalidParameter(format!("n = {n} must lie in [1, 4]")));
    }
    let base = w2_exact_discrete(mu, nu)?.cost;
    let rhs = n as f64 * base;
    let lhs = if n == 1 { base } else { w2_exact_discrete(&tensor_power(mu, n)?, &tensor_power(nu, n)?)?.cost };
    Ok(AuditRow { audit: format!("tensorization_n{n}"), lhs, rhs, pass: (lhs - rhs).abs() <= 1e-9 })
}

/// `lhs = ℓ⁻¹ W₂²(g^{(ℓ)}, f^{(ℓ)})` and `rhs = N⁻¹ W₂²(g, f)` for block
/// symmetric measures on `(ℝ^d)^N`.
pub fn marginal_superadditivity_audit(
    g: &DiscreteMeasure,
    f: &DiscreteMeasure,
    n_blocks: usize,
    ell: usize,
) -> Result<AuditRow> {
    if g.dim != f.dim {
        return Err(Error::InvalidParameter("measures live in different spaces".into()));
    }
    for m in [g, f] {
        if !is_block_symmetric(m, n_blocks, 1e-12)? {
            return Err(Error::NotSymmetric);
        }
    }
    let full = w2_exact_discrete(g, f)?.cost;
    let marg = w2_exact_discrete(&block_marginal(g, n_blocks, ell)?, &block_marginal(f, n_blocks, ell)?)?.cost;
    let lhs = marg / ell as f64;
    let rhs = full / n_blocks as f64;
    Ok(AuditRow { audit: format!("marginal_superadditivity_n{n_blocks}_l{ell}"), lhs, rhs, pass: lhs <= rhs + 1e-9 })
}

/// CSV rows `audit,lhs,rhs,pass`.
pub fn write_audit_csv<W: Write>(out: W, rows: &[AuditRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["audit", "lhs", "rhs", "pass"])?;
    for r in rows {
        w.write_record([r.audit.clone(), r.lhs.to_string(), r.rhs.to_string(), r.pass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn single_atom_products() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = DiscreteMeasure::dirac(vec![1.5]);
        let row = tensorization_audit(&mu, &nu, 3).unwrap();
        assert!((row.lhs - 6.75).abs() < 1e-12 && (row.rhs - 6.75).abs() < 1e-12);
        let one = tensorization_audit(&mu, &nu, 1).unwrap();
        assert_eq!(one.lhs, one.rhs);
    }

    #[test]
    fn tensor_power_weights() {
        let mu = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.25, 0.75], 1).unwrap();
        let p = tensor_power(&mu, 2).unwrap();
        assert_eq!(p.points, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(p.weights, vec![0.0625, 0.1875, 0.1875, 0.5625]);
    }

    #[test]
    fn superadditivity_example_is_tight() {
        let g = DiscreteMeasure::new(vec![0.0, 1.0, 1.0, 0.0], vec![0.5, 0.5], 2).unwrap();
        let f = DiscreteMeasure::dirac(vec![0.0, 0.0]);
        let row = marginal_superadditivity_audit(&g, &f, 2, 1).unwrap();
        assert!((row.lhs - 0.5).abs() < 1e-12 && (row.rhs - 0.5).abs() < 1e-12 && row.pass);
        let same = marginal_superadditivity_audit(&g, &g, 2, 2).unwrap();
        assert!(same.lhs.abs() < 1e-15 && same.rhs.abs() < 1e-15);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let g = DiscreteMeasure::dirac(vec![0.0, 1.0]);
        let f = DiscreteMeasure::dirac(vec![0.0, 0.0]);
        assert!(matches!(marginal_superadditivity_audit(&g, &f, 2, 1), Err(Error::NotSymmetric)));
        let sym = symmetrize(&g, 2).unwrap();
        assert!(is_block_symmetric(&sym, 2, 1e-12).unwrap());
        assert!(marginal_superadditivity_audit(&sym, &f, 2, 1).is_ok());
    }
}
