//! Trial runner, curve aggregation and output files.

use std::fs;
use std::path::Path;
use std::time::Duration;

use egot::baselines::{greenkhorn, sinkhorn, theoretical_eta, GreenkhornSettings, SinkhornSettings};
use egot::extragrad::{solve, ManualSettings, SolverParams};
use egot::instances::{gen_point_clouds, gen_random, gen_synthetic, mnist_pair, read_idx_images};
use egot::oracle::exact_ot;
use egot::trace::{Cadence, TraceOptions, TraceRecord};
use egot::{marginal_violation, round_to_feasible, transport_cost, OtInstance, TransportPlan};
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AlgorithmSpec, CadenceSpec, ExtragradMode, GeneratorSpec, RunConfig};
use crate::error::{BenchError, Result};

/// Points on the shared matvec grid of a summary.
pub const GRID_POINTS: usize = 201;

/// Largest marginal violation tolerated in a rounded plan.
const FEASIBILITY_TOL: f64 = 1e-12;

/// Measurement interval used when only a wall-time budget bounds a trial.
const UNBOUNDED_CADENCE: u64 = 100;

/// Seed of the instance solved in trial `trial`.
pub fn instance_seed(master_seed: u64, trial: usize) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(master_seed);
    let mut s = 0;
    for _ in 0..=trial {
        s = sm.next_u64();
    }
    s
}

/// Builds the instance of one trial.
pub fn generate(spec: &GeneratorSpec, seed: u64, normalize: bool) -> Result<OtInstance> {
    let inst = match spec {
        GeneratorSpec::Synthetic { size } => gen_synthetic(*size, seed)?,
        GeneratorSpec::PointClouds { size, squared } => gen_point_clouds(*size, seed, *squared)?,
        GeneratorSpec::Random { size } => gen_random(*size, seed)?,
        GeneratorSpec::Mnist { path, size, indices } => {
            let images = read_idx_images(path)?;
            let (a, b) = match indices {
                Some(pair) => *pair,
                None => {
                    if images.count < 2 {
                        return Err(BenchError::Config("IDX file needs at least two images".into()));
                    }
                    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
                    let a = rng.random_range(0..images.count);
                    let mut b = rng.random_range(0..images.count - 1);
                    if b >= a {
                        b += 1;
                    }
                    (a, b)
                }
            };
            mnist_pair(&images, a, b, *size)?
        }
        GeneratorSpec::File { path } => OtInstance::load(path)?,
    };
    Ok(if normalize { inst.normalized().0 } else { inst })
}

/// Outcome of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub optimum: Option<f64>,
    pub trace: Vec<TraceRecord>,
    pub final_cost: f64,
    pub final_gap: Option<f64>,
    pub iterations: u64,
    pub matvecs: f64,
    pub wall_ms: f64,
}

fn trace_options(cfg: &RunConfig, optimum: Option<f64>) -> Result<TraceOptions> {
    let cadence = match (cfg.cadence, cfg.budget.matvecs) {
        (CadenceSpec::Auto, None) => Cadence::Every(UNBOUNDED_CADENCE),
        (CadenceSpec::Auto, Some(_)) => Cadence::Auto,
        (CadenceSpec::Every(k), _) => Cadence::Every(k),
        (CadenceSpec::Never, _) => Cadence::Never,
    };
    let mut opts = TraceOptions { cadence, ..TraceOptions::default() };
    opts.reference_value = optimum;
    if let Some(g) = cfg.stop_below_gap {
        if optimum.is_none() {
            return Err(BenchError::Config("stop_below_gap needs the oracle".into()));
        }
        opts.stop_below_gap = Some(g);
    }
    opts.wall_limit = cfg.budget.wall_ms.map(Duration::from_millis);
    Ok(opts)
}

fn budget_or_unbounded(cfg: &RunConfig) -> f64 {
    cfg.budget.matvecs.unwrap_or(u64::MAX as f64 / 4.0)
}

fn extragrad_params(cfg: &RunConfig, mode: ExtragradMode, inst: &OtInstance) -> Result<SolverParams> {
    let n = inst.n();
    let budget_iters = cfg.budget.matvecs.map(|m| (m / 2.0).floor() as u64);
    let t_max = budget_iters.unwrap_or(u64::MAX / 4);
    let p = match mode {
        ExtragradMode::Theoretical => {
            let mut p = SolverParams::theoretical(inst, cfg.epsilon)?;
            if let Some(t) = budget_iters {
                p.t_max = p.t_max.min(t);
            }
            p
        }
        ExtragradMode::FineTuned => SolverParams::fine_tuned(inst, t_max)?,
        ExtragradMode::ScaledTheoretical => {
            SolverParams::manual(inst, ManualSettings::scaled_theoretical(n, cfg.epsilon, t_max))?
        }
        ExtragradMode::Manual { b, eta, step_scale, c3 } => {
            SolverParams::manual(inst, ManualSettings { b, eta, step_scale, c3, t_max, epsilon: cfg.epsilon })?
        }
    };
    if p.t_max == 0 {
        return Err(BenchError::Config("budget allows no extragradient iteration".into()));
    }
    Ok(p)
}

struct Solved {
    trace: Vec<TraceRecord>,
    plan: TransportPlan,
    iterations: u64,
    matvecs: f64,
    elapsed: Duration,
}

fn solve_instance(cfg: &RunConfig, inst: &OtInstance, opts: &TraceOptions) -> Result<Solved> {
    let n = inst.n();
    let round = |raw: &TransportPlan| round_to_feasible(raw.matrix().view(), inst.r(), inst.c()).map(|x| x.0);
    Ok(match cfg.algorithm {
        AlgorithmSpec::Extragrad { mode } => {
            let params = extragrad_params(cfg, mode, inst)?;
            let out = solve(inst, &params, opts)?;
            Solved {
                trace: out.trace,
                plan: out.feasible,
                iterations: out.iterations,
                matvecs: out.matvecs as f64,
                elapsed: out.elapsed,
            }
        }
        AlgorithmSpec::Sinkhorn { eta, omega } => {
            let eta_reg = eta.unwrap_or_else(|| theoretical_eta(n, cfg.epsilon));
            let settings = SinkhornSettings { eta_reg, budget: budget_or_unbounded(cfg), omega };
            let out = sinkhorn(inst, settings, opts)?;
            let plan = round(&out.raw)?;
            Solved { trace: out.trace, plan, iterations: out.iterations, matvecs: out.matvecs, elapsed: out.elapsed }
        }
        AlgorithmSpec::Greenkhorn { eta, batch } => {
            let eta_reg = eta.unwrap_or_else(|| theoretical_eta(n, cfg.epsilon));
            let settings = GreenkhornSettings { eta_reg, budget: budget_or_unbounded(cfg), batch_size: batch };
            let out = greenkhorn(inst, settings, opts)?;
            let plan = round(&out.raw)?;
            Solved { trace: out.trace, plan, iterations: out.iterations, matvecs: out.matvecs, elapsed: out.elapsed }
        }
    })
}

/// Generates, solves and checks one trial.
pub fn run_trial(cfg: &RunConfig, trial: usize) -> Result<TrialResult> {
    let seed = instance_seed(cfg.master_seed, trial);
    let inst = generate(&cfg.generator, seed, cfg.normalize_costs)?;
    let n = inst.n();
    let optimum = if n <= cfg.oracle.n_limit {
        Some(exact_ot(&inst, cfg.oracle.n_limit)?.value)
    } else if cfg.oracle.required {
        return Err(BenchError::Config(format!(
            "oracle unavailable: n = {n} exceeds oracle.n_limit = {}",
            cfg.oracle.n_limit
        )));
    } else {
        None
    };
    let opts = trace_options(cfg, optimum)?;
    let solved = solve_instance(cfg, &inst, &opts)?;

    let (rv, cv) = marginal_violation(solved.plan.matrix().view(), inst.r(), inst.c())?;
    if rv > FEASIBILITY_TOL || cv > FEASIBILITY_TOL {
        return Err(egot::OtError::Numeric(format!("rounded plan violates marginals by {rv:e}, {cv:e}")).into());
    }
    let final_cost = transport_cost(&inst, &solved.plan)?;
    let final_gap = optimum.map(|v| final_cost - v);
    let tol = cfg.oracle.tolerance;
    for g in solved.trace.iter().filter_map(|r| r.gap).chain(final_gap) {
        if !(g >= -tol) {
            return Err(egot::OtError::Numeric(format!("gap {g:e} below oracle tolerance -{tol:e}")).into());
        }
    }
    Ok(TrialResult {
        trial,
        seed,
        n,
        optimum,
        trace: solved.trace,
        final_cost,
        final_gap,
        iterations: solved.iterations,
        matvecs: solved.matvecs,
        wall_ms: solved.elapsed.as_secs_f64() * 1e3,
    })
}

/// Runs all trials of a config on the worker pool, in trial order.
pub fn run_trials(cfg: &RunConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect()
}

/// Mean curve of one algorithm on the shared grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub name: String,
    pub grid: Vec<f64>,
    /// Absent when no trial had an oracle value.
    pub mean_gap: Option<Vec<f64>>,
    pub std_gap: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub per_algorithm: Vec<AlgorithmSummary>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Hex SHA-256 of the canonical JSON list of configs.
pub fn config_hash(configs: &[RunConfig]) -> String {
    let body: Vec<String> = configs.iter().map(RunConfig::canonical_json).collect();
    let text = format!("[{}]", body.join(","));
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Evenly spaced grid from 0 to the largest matvec count reached.
pub fn shared_grid<'a>(trials: impl IntoIterator<Item = &'a TrialResult>) -> Vec<f64> {
    let hi = trials.into_iter().flat_map(|t| t.trace.iter().map(|r| r.matvec_equiv)).fold(0.0f64, f64::max);
    (0..GRID_POINTS).map(|k| hi * k as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Piecewise-linear interpolation of a trace's gap at `x`. The curve is
/// held constant past either end of the trace.
pub fn interpolate_gap(trace: &[TraceRecord], x: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace.iter().filter_map(|r| r.gap.map(|g| (r.matvec_equiv, g))).collect();
    let (first, last) = (pts.first()?, pts.last()?);
    if x <= first.0 {
        return Some(first.1);
    }
    if x >= last.0 {
        return Some(last.1);
    }
    let k = pts.partition_point(|p| p.0 <= x);
    let (x0, y0) = pts[k - 1];
    let (x1, y1) = pts[k];
    if x1 == x0 {
        return Some(y1);
    }
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Mean and population standard deviation; the values are sorted first so
/// the result does not depend on their order.
pub fn mean_std(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / k).sqrt())
}

pub fn summarize(name: &str, trials: &[TrialResult], grid: &[f64]) -> AlgorithmSummary {
    let curves: Vec<&[TraceRecord]> =
        trials.iter().map(|t| t.trace.as_slice()).filter(|tr| tr.iter().any(|r| r.gap.is_some())).collect();
    let (mean_gap, std_gap) = if curves.is_empty() {
        (None, None)
    } else {
        let (m, s): (Vec<f64>, Vec<f64>) = grid
            .iter()
            .map(|&x| {
                let mut vals: Vec<f64> = curves.iter().filter_map(|c| interpolate_gap(c, x)).collect();
                mean_std(&mut vals)
            })
            .unzip();
        (Some(m), Some(s))
    };
    AlgorithmSummary { name: name.to_string(), grid: grid.to_vec(), mean_gap, std_gap }
}

/// One row of a per-trial trace file.
#[derive(Debug, Serialize)]
struct CsvRow {
    trial: usize,
    iter: u64,
    matvec_equiv: f64,
    wall_ms: f64,
    rounded_cost: f64,
    gap: Option<f64>,
    row_violation_raw: f64,
    col_violation_raw: f64,
}

pub fn write_trial_csv(path: &Path, result: &TrialResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in &result.trace {
        w.serialize(CsvRow {
            trial: result.trial,
            iter: r.iter,
            matvec_equiv: r.matvec_equiv,
            wall_ms: r.wall_ms,
            rounded_cost: r.rounded_cost,
            gap: r.gap,
            row_violation_raw: r.row_violation_raw,
            col_violation_raw: r.col_violation_raw,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> BenchError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BenchError::Io(io),
        other => BenchError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Everything produced by [`compare`].
#[derive(Clone, Debug)]
pub struct Report {
    pub summary: Summary,
    /// Trial results per config, in config order.
    pub runs: Vec<(String, Vec<TrialResult>)>,
}

/// Runs a single config. Same as comparing a one-element list.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Report> {
    compare(std::slice::from_ref(cfg), out)
}

/// Runs several configs on the same instances and aligns their mean gap
/// curves on one grid. Writes `<label>/trial_<k>.csv`, `summary.json` and
/// `curves.csv` under `out` when given.
pub fn compare(configs: &[RunConfig], out: Option<&Path>) -> Result<Report> {
    let first = configs.first().ok_or_else(|| BenchError::Config("compare needs at least one config".into()))?;
    for c in configs {
        c.validate()?;
        let same = c.generator == first.generator
            && c.master_seed == first.master_seed
            && c.trials == first.trials
            && c.normalize_costs == first.normalize_costs;
        if !same {
            return Err(BenchError::Config(
                "mismatched generators: configs must share generator, seed and trials".into(),
            ));
        }
    }
    let mut runs = Vec::new();
    for c in configs {
        let mut label = c.algorithm.label();
        let dup = runs.iter().filter(|(l, _): &&(String, Vec<TrialResult>)| l.starts_with(&label)).count();
        if dup > 0 {
            label = format!("{label}_{}", dup + 1);
        }
        runs.push((label, run_trials(c)?));
    }
    let grid = shared_grid(runs.iter().flat_map(|(_, t)| t.iter()));
    let per_algorithm = runs.iter().map(|(l, t)| summarize(l, t, &grid)).collect();
    let summary = Summary { config_hash: config_hash(configs), per_algorithm };
    if let Some(dir) = out {
        write_outputs(dir, &summary, &runs)?;
    }
    Ok(Report { summary, runs })
}

fn write_outputs(dir: &Path, summary: &Summary, runs: &[(String, Vec<TrialResult>)]) -> Result<()> {
    for (label, trials) in runs {
        let sub = dir.join(label);
        fs::create_dir_all(&sub)?;
        for t in trials {
            write_trial_csv(&sub.join(format!("trial_{}.csv", t.trial)), t)?;
        }
    }
    fs::write(dir.join("summary.json"), summary.to_json())?;
    let mut w = csv::Writer::from_path(dir.join("curves.csv")).map_err(csv_err)?;
    w.write_record(["algorithm", "matvec_equiv", "mean_gap", "std_gap"]).map_err(csv_err)?;
    for a in &summary.per_algorithm {
        for (k, x) in a.grid.iter().enumerate() {
            let cell = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v[k].to_string()).unwrap_or_default();
            w.write_record([a.name.clone(), x.to_string(), cell(&a.mean_gap), cell(&a.std_gap)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
