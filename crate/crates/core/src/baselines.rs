//! Sinkhorn and Greenkhorn scaling baselines, in the log domain.
//!
//! Both maintain the diagonal-scaling form `P = diag(u) exp(-eta W) diag(v)`
//! through `log u`, `log v` and `K = -eta W`, so large `eta` does not
//! underflow the kernel. Matvec accounting: one Sinkhorn iteration (a row
//! sweep plus a column sweep) costs 1, one Greenkhorn line update costs `1/n`.

use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};

use crate::error::{OtError, Result};
use crate::numeric::log_sum_exp;
use crate::problem::{OtInstance, TransportPlan};
use crate::trace::{Monitor, TraceOptions, TraceRecord, TraceSink};

/// Regularization strength `eta = 4 log(n) / eps`.
pub fn theoretical_eta(n: usize, epsilon: f64) -> f64 {
    4.0 * (n as f64).ln() / epsilon
}

/// Log-domain diagonal scaling state.
#[derive(Clone, Debug)]
pub struct ScalingState {
    eta_reg: f64,
    log_u: Vec<f64>,
    log_v: Vec<f64>,
    k_log: Array2<f64>,
    log_r: Vec<f64>,
    log_c: Vec<f64>,
}

impl ScalingState {
    pub fn new(instance: &OtInstance, eta_reg: f64) -> Result<Self> {
        if !(eta_reg > 0.0) || !eta_reg.is_finite() {
            return Err(OtError::param(format!("regularization eta = {eta_reg} must be positive")));
        }
        let n = instance.n();
        let k_log = instance.cost().mapv(|w| -eta_reg * w);
        if k_log.iter().any(|x| !x.is_finite()) {
            return Err(OtError::numeric("scaled cost overflows"));
        }
        Ok(Self {
            eta_reg,
            log_u: vec![0.0; n],
            log_v: vec![0.0; n],
            k_log,
            log_r: instance.r().iter().map(|x| x.ln()).collect(),
            log_c: instance.c().iter().map(|x| x.ln()).collect(),
        })
    }

    pub fn eta_reg(&self) -> f64 {
        self.eta_reg
    }

    pub fn log_u(&self) -> &[f64] {
        &self.log_u
    }

    pub fn log_v(&self) -> &[f64] {
        &self.log_v
    }

    fn n(&self) -> usize {
        self.log_u.len()
    }

    /// `log sum_j exp(K_ij + log v_j)`.
    fn row_lse(&self, i: usize, buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(self.k_log.row(i).iter().zip(&self.log_v).map(|(k, v)| k + v));
        log_sum_exp(buf)
    }

    /// `log sum_i exp(log u_i + K_ij)`.
    fn col_lse(&self, j: usize, buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(self.k_log.column(j).iter().zip(&self.log_u).map(|(k, u)| k + u));
        log_sum_exp(buf)
    }

    fn scale_row(&mut self, i: usize, omega: f64, buf: &mut Vec<f64>) -> Result<()> {
        if self.log_r[i] == f64::NEG_INFINITY {
            self.log_u[i] = f64::NEG_INFINITY;
            return Ok(());
        }
        let lse = self.row_lse(i, buf);
        if !lse.is_finite() {
            return Err(OtError::numeric(format!("row {i} log-sum-exp is not finite")));
        }
        let target = self.log_r[i] - lse;
        self.log_u[i] = if omega == 1.0 { target } else { (1.0 - omega) * self.log_u[i] + omega * target };
        Ok(())
    }

    fn scale_col(&mut self, j: usize, omega: f64, buf: &mut Vec<f64>) -> Result<()> {
        if self.log_c[j] == f64::NEG_INFINITY {
            self.log_v[j] = f64::NEG_INFINITY;
            return Ok(());
        }
        let lse = self.col_lse(j, buf);
        if !lse.is_finite() {
            return Err(OtError::numeric(format!("column {j} log-sum-exp is not finite")));
        }
        let target = self.log_c[j] - lse;
        self.log_v[j] = if omega == 1.0 { target } else { (1.0 - omega) * self.log_v[j] + omega * target };
        Ok(())
    }

    /// Rescales every row (relaxed by `omega`).
    pub fn row_update(&mut self, omega: f64) -> Result<()> {
        let mut buf = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            self.scale_row(i, omega, &mut buf)?;
        }
        Ok(())
    }

    /// Rescales every column (relaxed by `omega`).
    pub fn col_update(&mut self, omega: f64) -> Result<()> {
        let mut buf = Vec::with_capacity(self.n());
        for j in 0..self.n() {
            self.scale_col(j, omega, &mut buf)?;
        }
        Ok(())
    }

    /// The implied plan `exp(log u_i + K_ij + log v_j)`.
    pub fn plan(&self) -> Array2<f64> {
        let mut p = self.k_log.clone();
        for (mut row, &lu) in p.axis_iter_mut(Axis(0)).zip(&self.log_u) {
            for (x, &lv) in row.iter_mut().zip(&self.log_v) {
                *x = (lu + *x + lv).exp();
            }
        }
        p
    }

    fn row_mass(&self) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.n());
        (0..self.n()).map(|i| (self.log_u[i] + self.row_lse(i, &mut buf)).exp()).collect()
    }

    fn col_mass(&self) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.n());
        (0..self.n()).map(|j| (self.log_v[j] + self.col_lse(j, &mut buf)).exp()).collect()
    }
}

/// Output of a baseline run.
#[derive(Clone, Debug)]
pub struct BaselineOutput {
    /// The implied (unrounded) plan.
    pub raw: TransportPlan,
    pub trace: Vec<TraceRecord>,
    /// Sinkhorn iterations or Greenkhorn line updates.
    pub iterations: u64,
    pub matvecs: f64,
    pub elapsed: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornSettings {
    pub eta_reg: f64,
    /// Total matvec-equivalents; one per half-sweep.
    pub budget: f64,
    /// Overrelaxation, `1 <= omega < 2`.
    pub omega: f64,
}

/// Alternating (optionally overrelaxed) row and column rescaling.
pub fn sinkhorn(instance: &OtInstance, settings: SinkhornSettings, opts: &TraceOptions) -> Result<BaselineOutput> {
    sinkhorn_with_sink(instance, settings, opts, None)
}

pub fn sinkhorn_with_sink<'a>(
    instance: &'a OtInstance,
    settings: SinkhornSettings,
    opts: &'a TraceOptions,
    sink: Option<TraceSink<'a>>,
) -> Result<BaselineOutput> {
    let SinkhornSettings { eta_reg, budget, omega } = settings;
    if !(1.0..2.0).contains(&omega) {
        return Err(OtError::param(format!("relaxation omega = {omega} not in [1, 2)")));
    }
    if !(budget >= 1.0) {
        return Err(OtError::param("budget must be at least one matvec"));
    }
    // One iteration is a half-sweep: all rows or all columns.
    let iters = budget.floor() as u64;
    let mut state = ScalingState::new(instance, eta_reg)?;
    let mut monitor = Monitor::new(instance, opts, iters, sink)?;
    let mut elapsed = Duration::ZERO;
    if monitor.due(0, false) {
        monitor.measure(0, 0.0, elapsed, state.plan().view())?;
    }
    let mut t = 0;
    while t < iters {
        let start = Instant::now();
        if t % 2 == 0 {
            state.row_update(omega)?;
        } else {
            state.col_update(omega)?;
        }
        elapsed += start.elapsed();
        t += 1;
        let expired = monitor.expired(elapsed);
        if monitor.due(t, t == iters || expired) && monitor.measure(t, t as f64, elapsed, state.plan().view())? {
            break;
        }
        if expired {
            break;
        }
    }
    let raw = TransportPlan::new(state.plan(), instance.r(), instance.c())?;
    Ok(BaselineOutput { raw, trace: monitor.finish(), iterations: t, matvecs: t as f64, elapsed })
}

/// Greedy score `rho(a, b) = b - a + a log(a / b)` of a line with target
/// mass `a` and current mass `b`.
pub fn greedy_score(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return b;
    }
    if b == 0.0 {
        return f64::INFINITY;
    }
    (b - a + a * (a / b).ln()).max(0.0)
}

/// A selected line: row or column index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Line {
    Row(usize),
    Col(usize),
}

/// Greenkhorn state: scaling vectors plus the current marginals of the
/// implied plan, kept up to date incrementally.
#[derive(Clone, Debug)]
pub struct GreenkhornState {
    scaling: ScalingState,
    row_mass: Vec<f64>,
    col_mass: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    updates: u64,
}

impl GreenkhornState {
    pub fn new(instance: &OtInstance, eta_reg: f64) -> Result<Self> {
        let scaling = ScalingState::new(instance, eta_reg)?;
        let row_mass = scaling.row_mass();
        let col_mass = scaling.col_mass();
        Ok(Self { scaling, row_mass, col_mass, r: instance.r().to_vec(), c: instance.c().to_vec(), updates: 0 })
    }

    pub fn scaling(&self) -> &ScalingState {
        &self.scaling
    }

    pub fn row_scores(&self) -> Vec<f64> {
        self.r.iter().zip(&self.row_mass).map(|(&a, &b)| greedy_score(a, b)).collect()
    }

    pub fn col_scores(&self) -> Vec<f64> {
        self.c.iter().zip(&self.col_mass).map(|(&a, &b)| greedy_score(a, b)).collect()
    }

    /// Up to `batch` lines with the largest positive score, all on the side
    /// (rows or columns) holding the single best line. Ties go to the
    /// smaller index, rows before columns. Empty when every score is zero.
    pub fn select(&self, batch: usize) -> Vec<Line> {
        let rows = self.row_scores();
        let cols = self.col_scores();
        let best = |s: &[f64]| s.iter().copied().fold(0.0f64, f64::max);
        let (rv, cv) = (best(&rows), best(&cols));
        if rv == 0.0 && cv == 0.0 {
            return Vec::new();
        }
        let (scores, use_rows) = if rv >= cv { (&rows, true) } else { (&cols, false) };
        let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.0).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(batch);
        order.into_iter().map(|i| if use_rows { Line::Row(i) } else { Line::Col(i) }).collect()
    }

    /// Rescales a single line exactly and refreshes the opposite marginal.
    pub fn update(&mut self, line: Line) -> Result<()> {
        let mut buf = Vec::with_capacity(self.r.len());
        let s = &mut self.scaling;
        match line {
            Line::Row(i) => {
                let old = s.log_u[i];
                s.scale_row(i, 1.0, &mut buf)?;
                let new = s.log_u[i];
                for (j, cm) in self.col_mass.iter_mut().enumerate() {
                    let base = s.k_log[[i, j]] + s.log_v[j];
                    *cm += (new + base).exp() - (old + base).exp();
                    *cm = cm.max(0.0);
                }
                self.row_mass[i] = self.r[i];
            }
            Line::Col(j) => {
                let old = s.log_v[j];
                s.scale_col(j, 1.0, &mut buf)?;
                let new = s.log_v[j];
                for (i, rm) in self.row_mass.iter_mut().enumerate() {
                    let base = s.k_log[[i, j]] + s.log_u[i];
                    *rm += (new + base).exp() - (old + base).exp();
                    *rm = rm.max(0.0);
                }
                self.col_mass[j] = self.c[j];
            }
        }
        self.updates += 1;
        let n = self.r.len() as u64;
        if self.updates.is_multiple_of((n * n).max(1)) {
            self.refresh();
        }
        Ok(())
    }

    /// Recomputes both marginals from scratch.
    pub fn refresh(&mut self) {
        self.row_mass = self.scaling.row_mass();
        self.col_mass = self.scaling.col_mass();
    }

    pub fn row_mass(&self) -> &[f64] {
        &self.row_mass
    }

    pub fn col_mass(&self) -> &[f64] {
        &self.col_mass
    }

    pub fn plan(&self) -> Array2<f64> {
        self.scaling.plan()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenkhornSettings {
    pub eta_reg: f64,
    /// Total matvec-equivalents; each line update costs `1/n`.
    pub budget: f64,
    pub batch_size: usize,
}

/// Greedy (optionally batched) single-line rescaling.
pub fn greenkhorn(instance: &OtInstance, settings: GreenkhornSettings, opts: &TraceOptions) -> Result<BaselineOutput> {
    greenkhorn_with_sink(instance, settings, opts, None)
}

pub fn greenkhorn_with_sink<'a>(
    instance: &'a OtInstance,
    settings: GreenkhornSettings,
    opts: &'a TraceOptions,
    sink: Option<TraceSink<'a>>,
) -> Result<BaselineOutput> {
    let n = instance.n();
    let GreenkhornSettings { eta_reg, budget, batch_size } = settings;
    if batch_size == 0 || batch_size > n {
        return Err(OtError::param(format!("batch size {batch_size} not in 1..={n}")));
    }
    if !(budget >= 1.0) {
        return Err(OtError::param("budget must be at least one matvec"));
    }
    let total = (budget * n as f64).round() as u64;
    let mut state = GreenkhornState::new(instance, eta_reg)?;
    let mut monitor = Monitor::new(instance, opts, total, sink)?;
    let mut elapsed = Duration::ZERO;
    let per_line = 1.0 / n as f64;
    if monitor.due(0, false) {
        monitor.measure(0, 0.0, elapsed, state.plan().view())?;
    }
    let interval = opts.cadence.interval(total);
    let mut next_mark = interval.unwrap_or(u64::MAX);
    let mut done = 0u64;
    let mut measured_at = 0u64;
    while done < total {
        let start = Instant::now();
        let lines = state.select(batch_size.min((total - done) as usize));
        if lines.is_empty() {
            break;
        }
        for &line in &lines {
            state.update(line)?;
        }
        done += lines.len() as u64;
        elapsed += start.elapsed();
        let expired = monitor.expired(elapsed);
        if let Some(k) = interval {
            if done >= next_mark || done >= total || expired {
                while next_mark <= done {
                    next_mark += k;
                }
                measured_at = done;
                if monitor.measure(done, done as f64 * per_line, elapsed, state.plan().view())? {
                    break;
                }
            }
        }
        if expired {
            break;
        }
    }
    // A run that converged before the budget still gets a final record.
    if interval.is_some() && measured_at != done {
        monitor.measure(done, done as f64 * per_line, elapsed, state.plan().view())?;
    }
    let raw = TransportPlan::new(state.plan(), instance.r(), instance.c())?;
    Ok(BaselineOutput { raw, trace: monitor.finish(), iterations: done, matvecs: done as f64 * per_line, elapsed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_cost_gives_product_after_one_sweep() {
        let r = vec![0.2, 0.3, 0.5];
        let c = vec![0.6, 0.1, 0.3];
        let inst = OtInstance::new(Array2::zeros((3, 3)), r.clone(), c.clone()).unwrap();
        let out =
            sinkhorn(&inst, SinkhornSettings { eta_reg: 10.0, budget: 2.0, omega: 1.0 }, &TraceOptions::disabled())
                .unwrap();
        for ((i, j), &v) in out.raw.matrix().indexed_iter() {
            assert!((v - r[i] * c[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn one_point() {
        let inst = OtInstance::new(array![[0.7]], vec![1.0], vec![1.0]).unwrap();
        let out =
            sinkhorn(&inst, SinkhornSettings { eta_reg: 5.0, budget: 3.0, omega: 1.0 }, &TraceOptions::disabled())
                .unwrap();
        assert!((out.raw.matrix()[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parameter_checks() {
        let inst = OtInstance::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let off = TraceOptions::disabled();
        assert!(sinkhorn(&inst, SinkhornSettings { eta_reg: 0.0, budget: 3.0, omega: 1.0 }, &off).is_err());
        assert!(sinkhorn(&inst, SinkhornSettings { eta_reg: 1.0, budget: 3.0, omega: 2.0 }, &off).is_err());
        assert!(sinkhorn(&inst, SinkhornSettings { eta_reg: 1.0, budget: 0.0, omega: 1.0 }, &off).is_err());
        assert!(greenkhorn(&inst, GreenkhornSettings { eta_reg: 1.0, budget: 3.0, batch_size: 3 }, &off).is_err());
    }

    #[test]
    fn greedy_score_properties() {
        assert_eq!(greedy_score(0.3, 0.3), 0.0);
        assert!(greedy_score(0.3, 0.2) > 0.0);
        assert!(greedy_score(0.2, 0.3) > 0.0);
        assert_eq!(greedy_score(0.0, 0.1), 0.1);
    }

    #[test]
    fn exact_rows_send_selection_to_columns() {
        let inst = OtInstance::new(
            array![[0.0, 1.0, 0.3], [1.0, 0.0, 0.6], [0.2, 0.5, 0.0]],
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.1, 0.3],
        )
        .unwrap();
        let mut st = GreenkhornState::new(&inst, 3.0).unwrap();
        for i in 0..3 {
            st.update(Line::Row(i)).unwrap();
        }
        st.refresh();
        // after a full row pass the rows are exact up to rounding
        let picked = st.select(1);
        assert!(matches!(picked[..], [Line::Col(_)]), "{picked:?}");
        let picked = st.select(3);
        assert!(picked.iter().all(|l| matches!(l, Line::Col(_))));
    }

    #[test]
    fn greenkhorn_zero_cost() {
        let r = vec![0.25, 0.75];
        let c = vec![0.4, 0.6];
        let inst = OtInstance::new(Array2::zeros((2, 2)), r.clone(), c.clone()).unwrap();
        let out = greenkhorn(
            &inst,
            GreenkhornSettings { eta_reg: 1.0, budget: 50.0, batch_size: 1 },
            &TraceOptions::disabled(),
        )
        .unwrap();
        for ((i, j), &v) in out.raw.matrix().indexed_iter() {
            assert!((v - r[i] * c[j]).abs() < 1e-12);
        }
    }
}
