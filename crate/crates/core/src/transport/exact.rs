//! Exact discrete optimal transport for the squared Euclidean cost.
//!
//! Equal-size, equal-weight problems are assignment problems and go to the
//! Hungarian method. Everything else is solved as a transportation problem
//! by successive shortest paths with Dijkstra on reduced costs.

use serde::Serialize;

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};

/// Default limit on `n x m` plan entries.
pub const DEFAULT_PLAN_CAP: usize = 1_000_000;

/// Residual masses below this are treated as exhausted.
const MASS_TOL: f64 = 1e-14;

#[derive(Clone, Debug, Serialize)]
pub struct OtSolution {
    pub cost: f64,
    /// Row-major `n x m` transport plan.
    pub plan: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl OtSolution {
    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.plan.chunks_exact(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    let mut c = Vec::with_capacity(mu.len() * nu.len());
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            c.push(sq_dist(mu.point(i), nu.point(j)));
        }
    }
    c
}

/// `W₂²(μ, ν)` and an optimal plan.
pub fn w2_exact_discrete(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<OtSolution> {
    w2_exact_discrete_with_cap(mu, nu, DEFAULT_PLAN_CAP)
}

pub fn w2_exact_discrete_with_cap(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cap: usize) -> Result<OtSolution> {
    if mu.dim != nu.dim {
        return Err(Error::InvalidParameter(format!("dimensions differ: {} vs {}", mu.dim, nu.dim)));
    }
    let (n, m) = (mu.len(), nu.len());
    if n.saturating_mul(m) > cap {
        return Err(Error::TooLarge { rows: n, cols: m, cap });
    }
    let cost = cost_matrix(mu, nu);
    if n == m && mu.has_equal_weights() && nu.has_equal_weights() {
        let assignment = hungarian(&cost, n);
        let mut plan = vec![0.0; n * n];
        let w = 1.0 / n as f64;
        let mut total = 0.0;
        for (i, &j) in assignment.iter().enumerate() {
            plan[i * n + j] = w;
            total += cost[i * n + j];
        }
        return Ok(OtSolution { cost: total * w, plan, rows: n, cols: n });
    }
    let plan = transportation(&cost, &mu.weights, &nu.weights);
    let total = plan.iter().zip(&cost).map(|(p, c)| p * c).sum();
    Ok(OtSolution { cost: total, plan, rows: n, cols: m })
}

/// Minimum-cost perfect matching of an `n x n` cost matrix; entry `i` of the
/// result is the column assigned to row `i`.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-indexed potentials u (rows), v (columns); p[j] is the row matched to column j
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Transportation problem with supplies `a`, demands `b` and nonnegative
/// costs, by successive shortest augmenting paths.
pub fn transportation(cost: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let (n, m) = (a.len(), b.len());
    let mut flow = vec![0.0; n * m];
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut pi = vec![0.0; n + m];
    let mut dist = vec![0.0; n + m];
    let mut prev = vec![usize::MAX; n + m];
    let mut done = vec![false; n + m];

    loop {
        let remaining: f64 = supply.iter().filter(|s| **s > MASS_TOL).sum();
        if remaining <= MASS_TOL || demand.iter().all(|d| *d <= MASS_TOL) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..n {
            if supply[i] > MASS_TOL {
                dist[i] = 0.0;
            }
        }
        // dense Dijkstra; nodes 0..n are sources, n..n+m sinks
        let mut target = usize::MAX;
        loop {
            let mut best = f64::INFINITY;
            let mut u = usize::MAX;
            for (k, &d) in dist.iter().enumerate() {
                if !done[k] && d < best {
                    best = d;
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && demand[u - n] > MASS_TOL {
                target = u;
                break;
            }
            if u < n {
                let row = &cost[u * m..(u + 1) * m];
                for (j, &c) in row.iter().enumerate() {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (c + pi[u] - pi[v]).max(0.0);
                    if best + rc < dist[v] {
                        dist[v] = best + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= MASS_TOL {
                        continue;
                    }
                    let rc = (-cost[i * m + j] + pi[u] - pi[i]).max(0.0);
                    if best + rc < dist[i] {
                        dist[i] = best + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let reach = dist[target];
        for k in 0..n + m {
            pi[k] += dist[k].min(reach);
        }
        // bottleneck along the path
        let mut bottleneck = demand[target - n];
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                // backward arc: sink u-n sends back along (v, u-n)
                bottleneck = bottleneck.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        bottleneck = bottleneck.min(supply[v]);
        let source = v;
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u * m + (v - n)] += bottleneck;
            } else {
                let cell = &mut flow[v * m + (u - n)];
                *cell -= bottleneck;
                if *cell <= MASS_TOL {
                    *cell = 0.0;
                }
            }
            v = u;
        }
        supply[source] -= bottleneck;
        if supply[source] <= MASS_TOL {
            supply[source] = 0.0;
        }
        demand[target - n] -= bottleneck;
        if demand[target - n] <= MASS_TOL {
            demand[target - n] = 0.0;
        }
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best / n as f64
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let m = DiscreteMeasure::from_unnormalized(vec![0.0, 1.0, 3.0], vec![1.0, 2.0, 3.0], 1).unwrap();
        assert!(w2_exact_discrete(&m, &m).unwrap().cost.abs() < 1e-15);
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=6 {
            for _ in 0..10 {
                let mut a = DiscreteMeasure::random(&mut rng, n, 2, 2.0);
                let mut b = DiscreteMeasure::random(&mut rng, n, 2, 2.0);
                a.weights = vec![1.0 / n as f64; n];
                b.weights = vec![1.0 / n as f64; n];
                let exact = brute_force(&cost_matrix(&a, &b), n);
                let hung = w2_exact_discrete(&a, &b).unwrap().cost;
                // the general solver must agree with the assignment solver
                let general = transportation(&cost_matrix(&a, &b), &a.weights, &b.weights);
                let gen_cost: f64 = general.iter().zip(cost_matrix(&a, &b)).map(|(p, c)| p * c).sum();
                assert!((exact - hung).abs() < 1e-12, "n = {n}: {exact} vs {hung}");
                assert!((exact - gen_cost).abs() < 1e-12, "n = {n}: {exact} vs {gen_cost}");
            }
        }
    }

    #[test]
    fn plan_marginals_match_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = DiscreteMeasure::random(&mut rng, 7, 2, 1.0);
            let b = DiscreteMeasure::random(&mut rng, 4, 2, 1.0);
            let sol = w2_exact_discrete(&a, &b).unwrap();
            assert!(sol.plan.iter().all(|p| *p >= 0.0));
            for (r, w) in sol.row_sums().iter().zip(&a.weights) {
                assert!((r - w).abs() < 1e-10);
            }
            for (c, w) in sol.col_sums().iter().zip(&b.weights) {
                assert!((c - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let a = DiscreteMeasure::uniform(vec![0.0; 10], 1).unwrap();
        assert!(matches!(w2_exact_discrete_with_cap(&a, &a, 99), Err(Error::TooLarge { .. })));
    }
}
