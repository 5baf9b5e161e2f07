//! Rounding of an approximate coupling onto the transportation polytope.
//!
//! Rows are first scaled down to at most `r`, then columns to at most `c`;
//! the remaining mass deficits `e_r`, `e_c` are restored with the rank-one
//! correction `e_r e_c^T / ||e_r||_1`. The result satisfies
//! `||P_hat - P_tilde||_1 <= 2 (||P_hat 1 - r||_1 + ||P_hat^T 1 - c||_1)`.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{OtError, Result};
use crate::numeric::{accurate_sum, NeumaierSum};
use crate::problem::{marginal_violation, TransportPlan};

/// How far rounding moved the input, and the guaranteed bound on that move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundingReport {
    pub l1_moved: f64,
    pub bound: f64,
}

impl RoundingReport {
    pub fn within_bound(&self) -> bool {
        self.l1_moved <= self.bound
    }
}

/// Rounds a nonnegative matrix to a plan with marginals exactly `r` and `c`.
pub fn round_to_feasible(p_hat: ArrayView2<f64>, r: &[f64], c: &[f64]) -> Result<(TransportPlan, RoundingReport)> {
    let n = r.len();
    if p_hat.dim() != (n, n) || c.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: p_hat.nrows() });
    }
    if p_hat.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(OtError::invalid("rounding input has a negative or non-finite entry"));
    }
    let (row_viol, col_viol) = marginal_violation(p_hat, r, c)?;

    let mut f = p_hat.to_owned();
    for (mut row, &ri) in f.axis_iter_mut(Axis(0)).zip(r) {
        let s = accurate_sum(row.iter().copied());
        // An empty row keeps factor 1; its mass comes from the correction.
        if s > ri {
            let x = ri / s;
            row.mapv_inplace(|v| v * x);
        }
    }
    let col_sums = column_sums(&f);
    let y: Vec<f64> = col_sums.iter().zip(c).map(|(&s, &cj)| if s > cj { cj / s } else { 1.0 }).collect();
    for mut row in f.axis_iter_mut(Axis(0)) {
        for (v, &yj) in row.iter_mut().zip(&y) {
            *v *= yj;
        }
    }

    let e_r: Vec<f64> =
        f.axis_iter(Axis(0)).zip(r).map(|(row, &ri)| (ri - accurate_sum(row.iter().copied())).max(0.0)).collect();
    let e_c: Vec<f64> = column_sums(&f).iter().zip(c).map(|(&s, &cj)| (cj - s).max(0.0)).collect();
    let e_r_norm = accurate_sum(e_r.iter().copied());
    if e_r_norm > 0.0 {
        for (mut row, &er) in f.axis_iter_mut(Axis(0)).zip(&e_r) {
            if er == 0.0 {
                continue;
            }
            let scale = er / e_r_norm;
            for (v, &ec) in row.iter_mut().zip(&e_c) {
                *v += scale * ec;
            }
        }
    }

    let l1_moved = accurate_sum(p_hat.iter().zip(f.iter()).map(|(a, b)| (a - b).abs()));
    let report = RoundingReport { l1_moved, bound: 2.0 * (row_viol + col_viol) };
    Ok((TransportPlan::new(f, r, c)?, report))
}

fn column_sums(m: &Array2<f64>) -> Vec<f64> {
    let n = m.ncols();
    let mut acc = vec![NeumaierSum::new(); n];
    for row in m.axis_iter(Axis(0)) {
        for (a, &v) in acc.iter_mut().zip(row.iter()) {
            a.add(v);
        }
    }
    acc.iter().map(NeumaierSum::value).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn feasible_input_is_unchanged() {
        let r = [0.375, 0.625];
        let c = [0.5, 0.5];
        let p = array![[0.125, 0.25], [0.375, 0.25]];
        let (plan, rep) = round_to_feasible(p.view(), &r, &c).unwrap();
        assert_eq!(plan.matrix(), &p);
        assert_eq!(rep.l1_moved, 0.0);
    }

    #[test]
    fn hand_traced_example() {
        let r = [0.5, 0.5];
        let p = array![[0.6, 0.0], [0.0, 0.6]];
        let (plan, rep) = round_to_feasible(p.view(), &r, &r).unwrap();
        let expect = array![[0.5, 0.0], [0.0, 0.5]];
        for (a, b) in plan.matrix().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((rep.l1_moved - 0.2).abs() < 1e-15);
        assert!((rep.bound - 0.8).abs() < 1e-15);
    }

    #[test]
    fn empty_rows_get_mass_from_correction() {
        let r = [0.5, 0.5];
        let c = [0.25, 0.75];
        let p = array![[0.0, 0.0], [0.2, 0.1]];
        let (plan, rep) = round_to_feasible(p.view(), &r, &c).unwrap();
        assert!(plan.is_feasible(1e-14));
        assert!(rep.within_bound());
        let zero = Array2::zeros((2, 2));
        let (plan, _) = round_to_feasible(zero.view(), &r, &c).unwrap();
        let expect = array![[0.125, 0.375], [0.125, 0.375]];
        assert_eq!(plan.matrix(), &expect);
    }

    #[test]
    fn negative_entry_rejected() {
        let p = array![[0.5, -0.1], [0.0, 0.6]];
        assert!(round_to_feasible(p.view(), &[0.5, 0.5], &[0.5, 0.5]).is_err());
    }
}
