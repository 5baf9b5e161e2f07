//! Entropy-regularized extragradient method with adaptive learning rates.
//!
//! Each iteration takes a mirror-descent step from the base point
//! `(p^t, mu^{t,adjust})` with the gradient at that point (the midpoint),
//! a second step from the same base point with the gradient at the
//! midpoint (the main sequence), and finally clamps every dual pair so its
//! ratio stays within `e^B`. All probability tables are kept as logarithms;
//! the `(1 - eta)` power becomes a multiplication in log space.

mod params;

use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};

pub use params::{derive_params, Constants, ManualSettings, ParamMode, SolverParams};

use crate::error::{OtError, Result};
use crate::numeric::normalize_log_row;
use crate::problem::{assemble_plan, cost_of_matrix, DualIterate, OtInstance, TransportPlan};
use crate::rounding::round_to_feasible;
use crate::trace::{Monitor, TraceOptions, TraceRecord, TraceSink};

/// Matrix-vector-product equivalents charged per iteration.
pub const MATVECS_PER_ITERATION: u64 = 2;

/// Scales a nonnegative vector to sum to one.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(OtError::invalid("normalize needs finite nonnegative entries"));
    }
    let s: f64 = x.iter().sum();
    if s == 0.0 {
        return Err(OtError::invalid("normalize of an all-zero vector"));
    }
    Ok(x.iter().map(|v| v / s).collect())
}

/// Clamps a probability pair so that `max / min <= e^B`:
/// `mu_s <- max(mu_s, e^{-B} max(mu))`, then renormalizes.
pub fn adjust_mu(mu: [f64; 2], b: f64) -> Result<[f64; 2]> {
    if !(b > 0.0) {
        return Err(OtError::param(format!("adjustment strength B = {b} must be positive")));
    }
    if mu[0] < 0.0 || mu[1] < 0.0 || !(mu[0] + mu[1] > 0.0) {
        return Err(OtError::invalid(format!("{mu:?} is not a probability pair")));
    }
    let hi = mu[0].max(mu[1]);
    let floor = (-b).exp() * hi;
    let x = [mu[0].max(floor), mu[1].max(floor)];
    let s = x[0] + x[1];
    let mut y = [x[0] / s, x[1] / s];
    // Division rounding can leave the ratio an ulp above e^B.
    let limit = b.exp();
    let (h, l) = if y[0] >= y[1] { (0, 1) } else { (1, 0) };
    while y[h] / y[l] > limit {
        y[l] = y[l].next_up();
        y[h] = 1.0 - y[l];
    }
    Ok(y)
}

/// Log-domain version of [`adjust_mu`] used inside the solver loop.
fn adjust_log_pair(l: [f64; 2], b: f64) -> [f64; 2] {
    let m = l[0].max(l[1]);
    let mut x = [l[0].max(m - b), l[1].max(m - b)];
    let hi = x[0].max(x[1]);
    let lz = hi + ((x[0] - hi).exp() + (x[1] - hi).exp()).ln();
    x[0] -= lz;
    x[1] -= lz;
    let (h, lo) = if x[0] >= x[1] { (0, 1) } else { (1, 0) };
    while x[h] - x[lo] > b {
        x[lo] = x[lo].next_up();
    }
    x
}

fn normalize_log_pair(l: [f64; 2]) -> Option<[f64; 2]> {
    let m = l[0].max(l[1]);
    if !m.is_finite() {
        return None;
    }
    let lz = m + ((l[0] - m).exp() + (l[1] - m).exp()).ln();
    Some([l[0] - lz, l[1] - lz])
}

/// Iterates of the extragradient loop.
#[derive(Clone, Debug)]
pub struct ExtragradState {
    t: u64,
    matvecs: u64,
    log_p: Array2<f64>,
    p: Array2<f64>,
    log_p_bar: Array2<f64>,
    p_bar: Array2<f64>,
    log_mu: Vec<[f64; 2]>,
    log_mu_bar: Vec<[f64; 2]>,
    log_mu_adjust: Vec<[f64; 2]>,
    /// `sum_i r_i p_{ij}` for the main rows.
    colsum: Vec<f64>,
    /// `sum_i r_i pbar_{ij}` for the midpoint rows.
    colsum_bar: Vec<f64>,
}

impl ExtragradState {
    /// Uniform rows and dual pairs `[1/2, 1/2]`.
    pub fn new(instance: &OtInstance) -> Self {
        let n = instance.n();
        let lp = -(n as f64).ln();
        let half = 0.5f64.ln();
        let p = Array2::from_elem((n, n), 1.0 / n as f64);
        let colsum = column_mass(&p, instance.r());
        Self {
            t: 0,
            matvecs: 0,
            log_p: Array2::from_elem((n, n), lp),
            p: p.clone(),
            log_p_bar: Array2::from_elem((n, n), lp),
            p_bar: p,
            log_mu: vec![[half; 2]; n],
            log_mu_bar: vec![[half; 2]; n],
            log_mu_adjust: vec![[half; 2]; n],
            colsum_bar: colsum.clone(),
            colsum,
        }
    }

    /// Builds a state from explicit rows and adjusted duals; the midpoints
    /// and unadjusted duals start equal to the given point.
    pub fn from_parts(instance: &OtInstance, rows: &Array2<f64>, mu_adjust: &DualIterate) -> Result<Self> {
        let n = instance.n();
        if rows.dim() != (n, n) || mu_adjust.len() != n {
            return Err(OtError::DimensionMismatch { expected: n, got: rows.nrows() });
        }
        let mut log_p = rows.mapv(f64::ln);
        let mut p = rows.clone();
        for (mut l, mut q) in log_p.axis_iter_mut(Axis(0)).zip(p.axis_iter_mut(Axis(0))) {
            normalize_log_row(l.as_slice_mut().unwrap(), q.as_slice_mut().unwrap())
                .ok_or_else(|| OtError::invalid("row with no positive entry"))?;
        }
        let log_mu: Vec<[f64; 2]> = mu_adjust.pairs().iter().map(|m| [m[0].ln(), m[1].ln()]).collect();
        let colsum = column_mass(&p, instance.r());
        Ok(Self {
            t: 0,
            matvecs: 0,
            log_p_bar: log_p.clone(),
            p_bar: p.clone(),
            log_p,
            p,
            log_mu_bar: log_mu.clone(),
            log_mu_adjust: log_mu.clone(),
            log_mu,
            colsum_bar: colsum.clone(),
            colsum,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn matvecs(&self) -> u64 {
        self.matvecs
    }

    /// Main rows `p_i^t` (row `i` is on the simplex).
    pub fn rows(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn log_rows(&self) -> &Array2<f64> {
        &self.log_p
    }

    pub fn midpoint_rows(&self) -> &Array2<f64> {
        &self.p_bar
    }

    pub fn mu(&self) -> Vec<[f64; 2]> {
        exp_pairs(&self.log_mu)
    }

    pub fn mu_bar(&self) -> Vec<[f64; 2]> {
        exp_pairs(&self.log_mu_bar)
    }

    pub fn mu_adjust(&self) -> Vec<[f64; 2]> {
        exp_pairs(&self.log_mu_adjust)
    }

    pub fn log_mu_adjust(&self) -> &[[f64; 2]] {
        &self.log_mu_adjust
    }

    /// `P_hat = [r_1 p_1, ..., r_n p_n]^T`.
    pub fn plan_estimate(&self, r: &[f64]) -> Array2<f64> {
        assemble_plan(self.p.view(), r)
    }
}

fn exp_pairs(l: &[[f64; 2]]) -> Vec<[f64; 2]> {
    l.iter().map(|x| [x[0].exp(), x[1].exp()]).collect()
}

fn column_mass(p: &Array2<f64>, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.ncols()];
    for (row, &ri) in p.axis_iter(Axis(0)).zip(r) {
        if ri == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(row.iter()) {
            *o += ri * v;
        }
    }
    out
}

fn check_normalized(instance: &OtInstance) -> Result<()> {
    let w = instance.w_inf();
    if w != 0.0 && (w - 1.0).abs() > 1e-12 {
        return Err(OtError::invalid(format!("steps expect costs normalized to max 1, got {w}")));
    }
    Ok(())
}

/// Mirror step on the dual pairs from `base` with residual `colsum - c`.
fn dual_step(
    base: &[[f64; 2]],
    colsum: &[f64],
    params: &SolverParams,
    instance: &OtInstance,
    out: &mut [[f64; 2]],
) -> Result<()> {
    let keep = 1.0 - params.eta;
    for (j, o) in out.iter_mut().enumerate() {
        let g = params.eta_mu[j] * (colsum[j] - instance.c()[j]);
        let l = [keep * base[j][0] + g, keep * base[j][1] - g];
        *o = normalize_log_pair(l).ok_or_else(|| OtError::numeric(format!("dual update {j} is not finite")))?;
    }
    Ok(())
}

/// Mirror step on the primal rows with dual signal
/// `delta_j = mu_{j,+} - mu_{j,-}` taken from `grad_mu`. The base point is
/// `log_base` when given, otherwise the current content of `log_out`.
fn primal_step(
    log_base: Option<&Array2<f64>>,
    grad_mu: &[[f64; 2]],
    params: &SolverParams,
    instance: &OtInstance,
    log_out: &mut Array2<f64>,
    out: &mut Array2<f64>,
) -> Result<()> {
    let keep = 1.0 - params.eta;
    let delta: Vec<f64> = grad_mu.iter().map(|l| l[0].exp() - l[1].exp()).collect();
    let w = instance.cost();
    for i in 0..instance.n() {
        let a = params.eta_p_times_r[i];
        let wrow = w.row(i);
        let mut lrow = log_out.row_mut(i);
        let lslice = lrow.as_slice_mut().unwrap();
        if let Some(base) = log_base {
            lslice.copy_from_slice(base.row(i).as_slice().unwrap());
        }
        for ((l, &wij), &d) in lslice.iter_mut().zip(wrow.iter()).zip(&delta) {
            *l = keep * *l - a * (0.5 * wij + d);
        }
        let mut prow = out.row_mut(i);
        normalize_log_row(lslice, prow.as_slice_mut().unwrap())
            .ok_or_else(|| OtError::numeric(format!("primal row {i} is not finite")))?;
    }
    Ok(())
}

/// Computes the midpoints `(pbar^{t+1}, mubar^{t+1})` from the base point
/// `(p^t, mu^{t,adjust})`, with gradients at the base point.
pub fn midpoint_step(state: &mut ExtragradState, params: &SolverParams, instance: &OtInstance) -> Result<()> {
    check_normalized(instance)?;
    let mut mu_bar = std::mem::take(&mut state.log_mu_bar);
    dual_step(&state.log_mu_adjust, &state.colsum, params, instance, &mut mu_bar)?;
    state.log_mu_bar = mu_bar;
    primal_step(Some(&state.log_p), &state.log_mu_adjust, params, instance, &mut state.log_p_bar, &mut state.p_bar)?;
    state.colsum_bar = column_mass(&state.p_bar, instance.r());
    state.matvecs += 1;
    Ok(())
}

/// Updates the main sequence from the same base point, with gradients at
/// the midpoints.
pub fn main_step(state: &mut ExtragradState, params: &SolverParams, instance: &OtInstance) -> Result<()> {
    check_normalized(instance)?;
    let mut mu = std::mem::take(&mut state.log_mu);
    dual_step(&state.log_mu_adjust, &state.colsum_bar, params, instance, &mut mu)?;
    state.log_mu = mu;
    // Row i of the update reads only row i of the base, so it runs in place.
    primal_step(None, &state.log_mu_bar, params, instance, &mut state.log_p, &mut state.p)?;
    state.colsum = column_mass(&state.p, instance.r());
    state.matvecs += 1;
    Ok(())
}

/// Clamps every main dual pair into `mu^{t+1,adjust}`.
pub fn adjust_phase(state: &mut ExtragradState, params: &SolverParams) {
    for (adj, &l) in state.log_mu_adjust.iter_mut().zip(&state.log_mu) {
        *adj = adjust_log_pair(l, params.b);
    }
    state.t += 1;
}

/// One full iteration: midpoint, main, adjust.
pub fn iterate(state: &mut ExtragradState, params: &SolverParams, instance: &OtInstance) -> Result<()> {
    midpoint_step(state, params, instance)?;
    main_step(state, params, instance)?;
    adjust_phase(state, params);
    Ok(())
}

/// Result of a solve.
#[derive(Clone, Debug)]
pub struct SolveOutput {
    /// `P_tilde`: the rounded plan with exact marginals.
    pub feasible: TransportPlan,
    /// `P_hat`: the plan assembled from the final rows.
    pub raw: TransportPlan,
    pub trace: Vec<TraceRecord>,
    pub iterations: u64,
    pub matvecs: u64,
    /// Time spent in iteration steps, excluding measurements.
    pub elapsed: Duration,
}

/// Runs `params.t_max` iterations (or fewer on early stop) and rounds the
/// result.
pub fn solve(instance: &OtInstance, params: &SolverParams, opts: &TraceOptions) -> Result<SolveOutput> {
    solve_with_sink(instance, params, opts, None)
}

pub fn solve_with_sink<'a>(
    instance: &'a OtInstance,
    params: &SolverParams,
    opts: &'a TraceOptions,
    sink: Option<TraceSink<'a>>,
) -> Result<SolveOutput> {
    params.validate(instance.n())?;
    let (normalized, _) = instance.normalized();
    let mut state = ExtragradState::new(&normalized);
    let mut monitor = Monitor::new(instance, opts, params.t_max, sink)?;
    let mut elapsed = Duration::ZERO;

    if monitor.due(0, false) {
        let p_hat = state.plan_estimate(instance.r());
        monitor.measure(0, 0.0, elapsed, p_hat.view())?;
    }
    while state.t < params.t_max {
        let start = Instant::now();
        iterate(&mut state, params, &normalized)?;
        elapsed += start.elapsed();
        let expired = monitor.expired(elapsed);
        if monitor.due(state.t, state.t == params.t_max || expired) {
            let p_hat = state.plan_estimate(instance.r());
            if monitor.measure(state.t, state.matvecs as f64, elapsed, p_hat.view())? {
                break;
            }
        }
        if expired {
            break;
        }
    }

    let p_hat = state.plan_estimate(instance.r());
    let raw = TransportPlan::new(p_hat, instance.r(), instance.c())?;
    let (feasible, _) = round_to_feasible(raw.matrix().view(), instance.r(), instance.c())?;
    if !cost_of_matrix(instance, feasible.matrix().view())?.is_finite() {
        return Err(OtError::numeric("final objective is not finite"));
    }
    Ok(SolveOutput { feasible, raw, trace: monitor.finish(), iterations: state.t, matvecs: state.matvecs, elapsed })
}
