//! Convergence traces shared by every solver.
//!
//! A measurement rounds a copy of the current approximate plan onto the
//! transportation polytope and records its cost; the rounding is not charged
//! to the solver's matvec counter or its wall clock.

use std::io::Write;
use std::time::Duration;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::problem::{cost_of_matrix, marginal_violation, OtInstance};
use crate::rounding::round_to_feasible;

/// One measurement of a running solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub matvec_equiv: f64,
    pub wall_ms: f64,
    pub rounded_cost: f64,
    pub gap: Option<f64>,
    pub row_violation_raw: f64,
    pub col_violation_raw: f64,
}

/// When to take measurements, in iterations of the solver's main loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    /// Every `ceil(total / 200)` iterations, or every iteration when the
    /// run is at most 200 iterations long.
    #[default]
    Auto,
    Every(u64),
    Never,
}

impl Cadence {
    pub fn interval(&self, total_iters: u64) -> Option<u64> {
        match *self {
            Cadence::Auto => Some(total_iters.div_ceil(200).max(1)),
            Cadence::Every(k) => Some(k.max(1)),
            Cadence::Never => None,
        }
    }
}

/// Measurement settings for a solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceOptions {
    pub cadence: Cadence,
    /// Optimal value used to report gaps, in the instance's own cost units.
    pub reference_value: Option<f64>,
    /// Stop as soon as a measured gap is at most this value. Needs a
    /// reference value.
    pub stop_below_gap: Option<f64>,
    /// Stop once the measured step time reaches this cap.
    pub wall_limit: Option<Duration>,
}

impl TraceOptions {
    pub fn disabled() -> Self {
        Self { cadence: Cadence::Never, ..Self::default() }
    }

    pub fn every(k: u64) -> Self {
        Self { cadence: Cadence::Every(k), ..Self::default() }
    }

    pub fn with_reference(mut self, value: f64) -> Self {
        self.reference_value = Some(value);
        self
    }

    pub fn stop_below(mut self, gap: f64) -> Self {
        self.stop_below_gap = Some(gap);
        self
    }

    pub fn with_wall_limit(mut self, limit: Duration) -> Self {
        self.wall_limit = Some(limit);
        self
    }
}

/// Callback receiving each record as it is produced.
pub type TraceSink<'a> = &'a mut dyn FnMut(&TraceRecord);

/// Takes measurements on behalf of a solver.
pub(crate) struct Monitor<'a> {
    instance: &'a OtInstance,
    opts: &'a TraceOptions,
    interval: Option<u64>,
    sink: Option<TraceSink<'a>>,
    records: Vec<TraceRecord>,
}

impl<'a> Monitor<'a> {
    pub(crate) fn new(
        instance: &'a OtInstance,
        opts: &'a TraceOptions,
        total_iters: u64,
        sink: Option<TraceSink<'a>>,
    ) -> Result<Self> {
        if opts.stop_below_gap.is_some() && opts.reference_value.is_none() {
            return Err(OtError::param("early stopping needs a reference value"));
        }
        Ok(Self { instance, opts, interval: opts.cadence.interval(total_iters), sink, records: Vec::new() })
    }

    pub(crate) fn due(&self, iter: u64, last: bool) -> bool {
        match self.interval {
            Some(k) => last || iter.is_multiple_of(k),
            None => false,
        }
    }

    /// Records a measurement of `p_hat`. Returns true when the early-stop
    /// criterion is met.
    pub(crate) fn expired(&self, elapsed: Duration) -> bool {
        self.opts.wall_limit.is_some_and(|l| elapsed >= l)
    }

    pub(crate) fn measure(
        &mut self,
        iter: u64,
        matvec_equiv: f64,
        elapsed: Duration,
        p_hat: ArrayView2<f64>,
    ) -> Result<bool> {
        let inst = self.instance;
        let (row_violation_raw, col_violation_raw) = marginal_violation(p_hat, inst.r(), inst.c())?;
        let (plan, _) = round_to_feasible(p_hat, inst.r(), inst.c())?;
        let rounded_cost = cost_of_matrix(inst, plan.matrix().view())?;
        let gap = self.opts.reference_value.map(|v| rounded_cost - v);
        let rec = TraceRecord {
            iter,
            matvec_equiv,
            wall_ms: elapsed.as_secs_f64() * 1e3,
            rounded_cost,
            gap,
            row_violation_raw,
            col_violation_raw,
        };
        if let Some(sink) = self.sink.as_mut() {
            sink(&rec);
        }
        self.records.push(rec);
        Ok(matches!((gap, self.opts.stop_below_gap), (Some(g), Some(t)) if g <= t))
    }

    pub(crate) fn finish(self) -> Vec<TraceRecord> {
        self.records
    }
}

/// Writes records as CSV with header
/// `iter,matvec_equiv,wall_ms,rounded_cost,gap,row_violation_raw,col_violation_raw`.
/// A missing gap is written as an empty field.
pub fn write_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records {
        w.serialize(rec).map_err(|e| OtError::invalid(e.to_string()))?;
    }
    if records.is_empty() {
        w.write_record([
            "iter",
            "matvec_equiv",
            "wall_ms",
            "rounded_cost",
            "gap",
            "row_violation_raw",
            "col_violation_raw",
        ])
        .map_err(|e| OtError::invalid(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_cadence() {
        assert_eq!(Cadence::Auto.interval(150), Some(1));
        assert_eq!(Cadence::Auto.interval(200), Some(1));
        assert_eq!(Cadence::Auto.interval(201), Some(2));
        assert_eq!(Cadence::Auto.interval(1_000_000), Some(5000));
        assert_eq!(Cadence::Never.interval(10), None);
    }

    #[test]
    fn csv_layout() {
        let rec = TraceRecord {
            iter: 3,
            matvec_equiv: 6.0,
            wall_ms: 0.5,
            rounded_cost: 1.25,
            gap: None,
            row_violation_raw: 0.0,
            col_violation_raw: 0.125,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[rec]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,matvec_equiv,wall_ms,rounded_cost,gap,row_violation_raw,col_violation_raw"
        );
        assert_eq!(lines.next().unwrap(), "3,6.0,0.5,1.25,,0.0,0.125");
    }
}
