//! Problem data model: instances, plans, dual iterates, and the objective
//! functions of the penalized and minimax formulations.
//!
//! A plan with marginal `r` is often handled through its row-block view:
//! row `i` of the plan equals `r_i * p_i` where `p_i` lies on the simplex.
//! Functions taking `rows` expect the `n x n` matrix whose `i`-th row is `p_i`.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::numeric::{accurate_sum, entropy, NeumaierSum};

/// Tolerance used when validating user-supplied probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-10;
/// Tolerance on the total mass of instance marginals.
pub const MARGINAL_SUM_TOL: f64 = 1e-12;

/// A discrete optimal transport problem: cost matrix plus the two marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct OtInstance {
    w: Array2<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    w_inf: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    n: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
}

impl OtInstance {
    /// Validates and builds an instance.
    pub fn new(w: Array2<f64>, r: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = r.len();
        if n == 0 {
            return Err(OtError::invalid("empty marginal"));
        }
        if w.dim() != (n, n) {
            return Err(OtError::DimensionMismatch { expected: n, got: w.nrows().max(w.ncols()) });
        }
        if c.len() != n {
            return Err(OtError::DimensionMismatch { expected: n, got: c.len() });
        }
        check_marginal(&r, "r")?;
        check_marginal(&c, "c")?;
        let mut w_inf = 0.0f64;
        for &x in w.iter() {
            if !x.is_finite() || x < 0.0 {
                return Err(OtError::invalid(format!("cost entry {x} is negative or non-finite")));
            }
            w_inf = w_inf.max(x.abs());
        }
        Ok(Self { w, r, c, w_inf })
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Largest absolute cost entry.
    pub fn w_inf(&self) -> f64 {
        self.w_inf
    }

    /// Returns a copy with costs divided by `w_inf` (unchanged if all costs
    /// are zero), together with the scale that was divided out.
    pub fn normalized(&self) -> (OtInstance, f64) {
        if self.w_inf == 0.0 || self.w_inf == 1.0 {
            return (self.clone(), 1.0);
        }
        let scale = self.w_inf;
        let w = self.w.mapv(|x| x / scale);
        let w_inf = w.iter().copied().fold(0.0, f64::max);
        (OtInstance { w, r: self.r.clone(), c: self.c.clone(), w_inf }, scale)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc =
            InstanceDoc { n: self.n(), w: self.w.iter().copied().collect(), r: self.r.clone(), c: self.c.clone() };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(s)?;
        if doc.w.len() != doc.n * doc.n {
            return Err(OtError::DimensionMismatch { expected: doc.n * doc.n, got: doc.w.len() });
        }
        if doc.r.len() != doc.n {
            return Err(OtError::DimensionMismatch { expected: doc.n, got: doc.r.len() });
        }
        let w = Array2::from_shape_vec((doc.n, doc.n), doc.w).map_err(|e| OtError::invalid(e.to_string()))?;
        Self::new(w, doc.r, doc.c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_marginal(v: &[f64], name: &str) -> Result<()> {
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(OtError::NotOnSimplex(format!("{name} has a negative or non-finite entry")));
    }
    let s = accurate_sum(v.iter().copied());
    if (s - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(OtError::NotOnSimplex(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// A nonnegative coupling together with its marginal violations.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    p: Array2<f64>,
    row_violation: f64,
    col_violation: f64,
}

impl TransportPlan {
    /// Wraps `p`, recording `||P1 - r||_1` and `||P^T 1 - c||_1`.
    pub fn new(p: Array2<f64>, r: &[f64], c: &[f64]) -> Result<Self> {
        let n = r.len();
        if p.dim() != (n, n) || c.len() != n {
            return Err(OtError::DimensionMismatch { expected: n, got: p.nrows() });
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(OtError::invalid("plan has a negative or non-finite entry"));
        }
        let (row_violation, col_violation) = marginal_violation(p.view(), r, c)?;
        Ok(Self { p, row_violation, col_violation })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.p
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn row_violation(&self) -> f64 {
        self.row_violation
    }

    pub fn col_violation(&self) -> f64 {
        self.col_violation
    }

    pub fn total_mass(&self) -> f64 {
        accurate_sum(self.p.iter().copied())
    }

    /// Both marginal violations are at most `tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.row_violation <= tol && self.col_violation <= tol
    }
}

/// The two-point dual variables `mu_j = [mu_{j,+}, mu_{j,-}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualIterate {
    mu: Vec<[f64; 2]>,
}

impl DualIterate {
    pub fn new(mu: Vec<[f64; 2]>) -> Result<Self> {
        for (j, m) in mu.iter().enumerate() {
            if m[0] < 0.0 || m[1] < 0.0 || ((m[0] + m[1]) - 1.0).abs() > SIMPLEX_TOL {
                return Err(OtError::NotOnSimplex(format!("dual pair {j} = {m:?}")));
            }
        }
        Ok(Self { mu })
    }

    /// All pairs equal to `[1/2, 1/2]`.
    pub fn uniform(n: usize) -> Self {
        Self { mu: vec![[0.5, 0.5]; n] }
    }

    pub fn pairs(&self) -> &[[f64; 2]] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// `<W, P>`.
pub fn transport_cost(instance: &OtInstance, plan: &TransportPlan) -> Result<f64> {
    cost_of_matrix(instance, plan.matrix().view())
}

/// `<W, P>` for a bare matrix.
pub fn cost_of_matrix(instance: &OtInstance, p: ArrayView2<f64>) -> Result<f64> {
    if p.dim() != instance.w.dim() {
        return Err(OtError::DimensionMismatch { expected: instance.n(), got: p.nrows() });
    }
    let mut acc = NeumaierSum::new();
    for (w, x) in instance.w.iter().zip(p.iter()) {
        acc.add(w * x);
    }
    let v = acc.value();
    if !v.is_finite() {
        return Err(OtError::numeric("transport cost is not finite"));
    }
    Ok(v)
}

/// `(||P1 - r||_1, ||P^T 1 - c||_1)`.
pub fn marginal_violation(p: ArrayView2<f64>, r: &[f64], c: &[f64]) -> Result<(f64, f64)> {
    let n = r.len();
    if p.dim() != (n, n) || c.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: p.nrows() });
    }
    let rows =
        accurate_sum(p.axis_iter(Axis(0)).zip(r).map(|(row, &ri)| (accurate_sum(row.iter().copied()) - ri).abs()));
    let cols =
        accurate_sum(p.axis_iter(Axis(1)).zip(c).map(|(col, &cj)| (accurate_sum(col.iter().copied()) - cj).abs()));
    Ok((rows, cols))
}

/// Assembles `[r_1 p_1, ..., r_n p_n]^T` from the row-block view.
pub fn assemble_plan(rows: ArrayView2<f64>, r: &[f64]) -> Array2<f64> {
    let mut p = rows.to_owned();
    for (mut row, &ri) in p.axis_iter_mut(Axis(0)).zip(r) {
        row.mapv_inplace(|x| x * ri);
    }
    p
}

fn check_rows(rows: ArrayView2<f64>, n: usize) -> Result<()> {
    if rows.dim() != (n, n) {
        return Err(OtError::DimensionMismatch { expected: n, got: rows.nrows() });
    }
    for (i, row) in rows.axis_iter(Axis(0)).enumerate() {
        let s = accurate_sum(row.iter().copied());
        if row.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(OtError::NotOnSimplex(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// `sum_i r_i p_{ij} - c_j` for every column `j`.
pub fn column_residual(rows: ArrayView2<f64>, instance: &OtInstance) -> Vec<f64> {
    let n = instance.n();
    (0..n)
        .map(|j| {
            let mut acc = NeumaierSum::new();
            for i in 0..n {
                acc.add(instance.r[i] * rows[[i, j]]);
            }
            acc.add(-instance.c[j]);
            acc.value()
        })
        .collect()
}

fn half_row_cost(rows: ArrayView2<f64>, instance: &OtInstance) -> f64 {
    let mut acc = NeumaierSum::new();
    for (i, (row, wrow)) in rows.axis_iter(Axis(0)).zip(instance.w.axis_iter(Axis(0))).enumerate() {
        let inner: f64 = row.iter().zip(wrow.iter()).map(|(p, w)| p * w).sum();
        acc.add(instance.r[i] * inner);
    }
    0.5 * acc.value()
}

/// The l1-penalized objective
/// `1/2 sum_i r_i <w_i, p_i> + ||W||_inf * ||sum_i r_i p_i - c||_1`.
pub fn penalized_objective(rows: ArrayView2<f64>, instance: &OtInstance) -> Result<f64> {
    check_rows(rows, instance.n())?;
    let residual = column_residual(rows, instance);
    let penalty = accurate_sum(residual.iter().map(|x| x.abs()));
    Ok(half_row_cost(rows, instance) + instance.w_inf * penalty)
}

fn check_normalized(instance: &OtInstance) -> Result<()> {
    if (instance.w_inf - 1.0).abs() > 1e-12 {
        return Err(OtError::invalid(format!(
            "bilinear objective expects costs normalized to max 1, got {}",
            instance.w_inf
        )));
    }
    Ok(())
}

/// The bilinear objective
/// `1/2 sum_i r_i <w_i,p_i> + sum_j (mu_{j,+} - mu_{j,-}) (sum_i r_i p_{ij} - c_j)`.
///
/// The penalty weight is taken to be one, so the instance must already be
/// normalized (`w_inf == 1`).
pub fn eval_f(rows: ArrayView2<f64>, duals: &DualIterate, instance: &OtInstance) -> Result<f64> {
    check_normalized(instance)?;
    check_rows(rows, instance.n())?;
    if duals.len() != instance.n() {
        return Err(OtError::DimensionMismatch { expected: instance.n(), got: duals.len() });
    }
    let residual = column_residual(rows, instance);
    let dual_term = accurate_sum(duals.pairs().iter().zip(&residual).map(|(m, res)| (m[0] - m[1]) * res));
    Ok(half_row_cost(rows, instance) + dual_term)
}

/// Entropy-regularized objective
/// `F = f + sum_j tau_mu_j H(mu_j) - sum_i tau_p_i H(p_i)`.
pub fn eval_regularized(
    rows: ArrayView2<f64>,
    duals: &DualIterate,
    instance: &OtInstance,
    tau_mu: &[f64],
    tau_p: &[f64],
) -> Result<f64> {
    let n = instance.n();
    if tau_mu.len() != n || tau_p.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: tau_mu.len().min(tau_p.len()) });
    }
    if tau_mu.iter().chain(tau_p).any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(OtError::param("regularization weights must be positive"));
    }
    let f = eval_f(rows, duals, instance)?;
    let dual_ent = accurate_sum(duals.pairs().iter().zip(tau_mu).map(|(m, t)| t * entropy(m)));
    let primal_ent = accurate_sum(rows.axis_iter(Axis(0)).zip(tau_p).map(|(row, t)| t * entropy(&row.to_vec())));
    Ok(f + dual_ent - primal_ent)
}

/// The dual vertex maximizing `f` for the given rows: `mu_j = [1, 0]` when
/// the `j`-th column residual is nonnegative, `[0, 1]` otherwise.
pub fn maximizing_duals(rows: ArrayView2<f64>, instance: &OtInstance) -> DualIterate {
    let mu = column_residual(rows, instance)
        .into_iter()
        .map(|res| if res >= 0.0 { [1.0, 0.0] } else { [0.0, 1.0] })
        .collect();
    DualIterate { mu }
}
