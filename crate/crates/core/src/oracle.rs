//! Exact optimal transport for small instances.
//!
//! [`exact_ot`] runs the primal network simplex on the bipartite
//! transportation graph: a spanning-tree basis of `2n - 1` cells, node
//! potentials from the tree, and pivots on cells of negative reduced cost.
//! Entering cells are chosen by most negative reduced cost; after a
//! degenerate pivot the next choice falls back to Bland's rule (lowest cell
//! index, ties in the leaving cell also by lowest index) so degenerate
//! stretches cannot cycle.
//!
//! [`exhaustive_ot`] enumerates every basis for `n <= 4` and serves as an
//! independent check.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::problem::{cost_of_matrix, OtInstance, TransportPlan};

pub const DEFAULT_N_LIMIT: usize = 64;
/// Largest size accepted by [`exhaustive_ot`].
pub const EXHAUSTIVE_N_LIMIT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Exhaustive,
    Simplex,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub value: f64,
    pub plan: TransportPlan,
    pub method: OracleMethod,
}

/// Exact optimum by network simplex; fails when `n > n_limit`.
pub fn exact_ot(instance: &OtInstance, n_limit: usize) -> Result<OracleResult> {
    let n = instance.n();
    if n > n_limit {
        return Err(OtError::TooLarge { n, limit: n_limit });
    }
    let mut solver = TransportSimplex::new(instance);
    solver.run()?;
    let p = solver.plan();
    finish(instance, p, OracleMethod::Simplex)
}

fn finish(instance: &OtInstance, p: Array2<f64>, method: OracleMethod) -> Result<OracleResult> {
    let plan = TransportPlan::new(p, instance.r(), instance.c())?;
    let value = cost_of_matrix(instance, plan.matrix().view())?;
    Ok(OracleResult { value, plan, method })
}

struct TransportSimplex<'a> {
    inst: &'a OtInstance,
    n: usize,
    /// Basic cells as flat indices `i * n + j`.
    basis: Vec<usize>,
    flow: Array2<f64>,
    in_basis: Vec<bool>,
    u: Vec<f64>,
    v: Vec<f64>,
    tol: f64,
}

impl<'a> TransportSimplex<'a> {
    fn new(inst: &'a OtInstance) -> Self {
        let n = inst.n();
        let mut s = Self {
            inst,
            n,
            basis: Vec::with_capacity(2 * n - 1),
            flow: Array2::zeros((n, n)),
            in_basis: vec![false; n * n],
            u: vec![0.0; n],
            v: vec![0.0; n],
            tol: 1e-12 * inst.w_inf().max(1.0),
        };
        s.north_west_corner();
        s
    }

    /// Staircase initial basis: always exactly `2n - 1` cells forming a tree.
    fn north_west_corner(&mut self) {
        let n = self.n;
        let mut supply = self.inst.r().to_vec();
        let mut demand = self.inst.c().to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]).max(0.0);
            self.flow[[i, j]] = x;
            supply[i] -= x;
            demand[j] -= x;
            self.add_basic(i * n + j);
            if i == n - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < n - 1 && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    fn add_basic(&mut self, cell: usize) {
        self.basis.push(cell);
        self.in_basis[cell] = true;
    }

    /// Adjacency of the basis tree over nodes `0..n` (rows) and `n..2n` (columns).
    fn tree(&self) -> Vec<Vec<(usize, usize)>> {
        let n = self.n;
        let mut adj = vec![Vec::new(); 2 * n];
        for &cell in &self.basis {
            let (i, j) = (cell / n, cell % n);
            adj[i].push((n + j, cell));
            adj[n + j].push((i, cell));
        }
        adj
    }

    fn potentials(&mut self, adj: &[Vec<(usize, usize)>]) {
        let n = self.n;
        let w = self.inst.cost();
        let mut seen = vec![false; 2 * n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &(next, cell) in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = (cell / n, cell % n);
                if next >= n {
                    self.v[j] = w[[i, j]] - self.u[i];
                } else {
                    self.u[i] = w[[i, j]] - self.v[j];
                }
                queue.push_back(next);
            }
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let n = self.n;
        let w = self.inst.cost();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                let cell = i * n + j;
                if self.in_basis[cell] {
                    continue;
                }
                let d = w[[i, j]] - self.u[i] - self.v[j];
                if d < -self.tol {
                    if bland {
                        return Some(cell);
                    }
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((cell, d));
                    }
                }
            }
        }
        best.map(|(c, _)| c)
    }

    /// Cells on the tree path from row node `i` to column node `n + j`.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let n = self.n;
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; 2 * n];
        let mut seen = vec![false; 2 * n];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(node) = queue.pop_front() {
            if node == n + j {
                break;
            }
            for &(next, cell) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    prev[next] = Some((node, cell));
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = n + j;
        while node != i {
            let (p, cell) = prev[node].expect("basis is a spanning tree");
            cells.push(cell);
            node = p;
        }
        cells.reverse();
        cells
    }

    fn run(&mut self) -> Result<()> {
        let n = self.n;
        let max_pivots = 50 * n * n * n + 1000;
        let mut bland = false;
        for _ in 0..max_pivots {
            let adj = self.tree();
            self.potentials(&adj);
            let Some(enter) = self.entering(bland) else {
                return Ok(());
            };
            let (ei, ej) = (enter / n, enter % n);
            // Path cells alternate starting with a decrease at row ei.
            let path = self.path(&adj, ei, ej);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &cell in path.iter().step_by(2) {
                let x = self.flow[[cell / n, cell % n]];
                if x < theta || (x == theta && cell < leave) {
                    theta = x;
                    leave = cell;
                }
            }
            let theta = theta.max(0.0);
            for (k, &cell) in path.iter().enumerate() {
                let f = &mut self.flow[[cell / n, cell % n]];
                if k % 2 == 0 {
                    *f = (*f - theta).max(0.0);
                } else {
                    *f += theta;
                }
            }
            self.flow[[ei, ej]] = theta;
            self.flow[[leave / n, leave % n]] = 0.0;
            let pos = self.basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
            self.basis[pos] = enter;
            self.in_basis[leave] = false;
            self.in_basis[enter] = true;
            bland = theta == 0.0;
        }
        Err(OtError::numeric("network simplex did not terminate"))
    }

    fn plan(&self) -> Array2<f64> {
        self.flow.clone()
    }
}

/// Exact optimum by enumerating every set of `2n - 1` cells, solving the
/// marginal equations on that support and keeping the cheapest
/// nonnegative solution. Only for `n <= 4`.
pub fn exhaustive_ot(instance: &OtInstance) -> Result<OracleResult> {
    let n = instance.n();
    if n > EXHAUSTIVE_N_LIMIT {
        return Err(OtError::TooLarge { n, limit: EXHAUSTIVE_N_LIMIT });
    }
    let k = 2 * n - 1;
    let cells = n * n;
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    let mut chosen = Vec::with_capacity(k);
    enumerate(0, cells, k, &mut chosen, &mut |support| {
        if let Some(x) = solve_support(instance, support) {
            if x.iter().all(|&v| v >= -1e-12) {
                let cost: f64 =
                    support.iter().zip(&x).map(|(&c, &v)| instance.cost()[[c / n, c % n]] * v.max(0.0)).sum();
                if best.as_ref().is_none_or(|(b, _)| cost < *b - 1e-15) {
                    best = Some((cost, support.iter().copied().zip(x).collect()));
                }
            }
        }
    });
    let (_, entries) = best.ok_or_else(|| OtError::numeric("no basic feasible solution found"))?;
    let mut p = Array2::zeros((n, n));
    for (cell, v) in entries {
        p[[cell / n, cell % n]] = v.max(0.0);
    }
    finish(instance, p, OracleMethod::Exhaustive)
}

fn enumerate(start: usize, total: usize, k: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for c in start..total {
        if total - c < k - chosen.len() {
            break;
        }
        chosen.push(c);
        enumerate(c + 1, total, k, chosen, f);
        chosen.pop();
    }
}

/// Solves the row and column equations (dropping the redundant last column
/// equation) restricted to `support`. `None` if the system is singular.
#[allow(clippy::needless_range_loop)]
fn solve_support(instance: &OtInstance, support: &[usize]) -> Option<Vec<f64>> {
    let n = instance.n();
    let k = support.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (col, &cell) in support.iter().enumerate() {
        let (i, j) = (cell / n, cell % n);
        a[i][col] = 1.0;
        if j < n - 1 {
            a[n + j][col] = 1.0;
        }
    }
    for i in 0..n {
        a[i][k] = instance.r()[i];
    }
    for j in 0..n - 1 {
        a[n + j][k] = instance.c()[j];
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..k {
            if row != col && a[row][col] != 0.0 {
                let factor = a[row][col] / a[col][col];
                for c2 in col..=k {
                    a[row][c2] -= factor * a[col][c2];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn flip() -> Array2<f64> {
        array![[0.0, 1.0], [1.0, 0.0]]
    }

    #[test]
    fn diagonal_optimum() {
        let inst = OtInstance::new(flip(), vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let res = exact_ot(&inst, DEFAULT_N_LIMIT).unwrap();
        assert_eq!(res.value, 0.0);
        assert_eq!(res.plan.matrix(), &array![[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(res.method, OracleMethod::Simplex);
    }

    #[test]
    fn forced_support() {
        let inst = OtInstance::new(flip(), vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        for res in [exact_ot(&inst, 64).unwrap(), exhaustive_ot(&inst).unwrap()] {
            assert_eq!(res.value, 1.0);
            assert_eq!(res.plan.matrix(), &array![[0.0, 1.0], [0.0, 0.0]]);
        }
    }

    #[test]
    fn size_limits() {
        let n = 5;
        let u = vec![0.2; n];
        let inst = OtInstance::new(Array2::zeros((n, n)), u.clone(), u).unwrap();
        assert!(matches!(exact_ot(&inst, 4), Err(OtError::TooLarge { .. })));
        assert!(exhaustive_ot(&inst).is_err());
    }

    #[test]
    fn one_point() {
        let inst = OtInstance::new(array![[2.0]], vec![1.0], vec![1.0]).unwrap();
        assert_eq!(exact_ot(&inst, 64).unwrap().value, 2.0);
        assert_eq!(exhaustive_ot(&inst).unwrap().value, 2.0);
    }
}
