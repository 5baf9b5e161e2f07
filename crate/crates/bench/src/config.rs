//! Run configuration, read from JSON.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Two synthetic `size x size` images; `n = size^2`.
    Synthetic { size: usize },
    /// Two Gaussian clouds of `size` points.
    PointClouds {
        size: usize,
        #[serde(default)]
        squared: bool,
    },
    /// `U[0, 1]` costs and random marginals.
    Random { size: usize },
    /// Two images of an IDX file resized to `size x size`. Fixed indices are
    /// used for every trial when given, otherwise each trial draws a pair.
    Mnist {
        path: PathBuf,
        size: usize,
        #[serde(default)]
        indices: Option<(usize, usize)>,
    },
    /// A saved instance; every trial solves the same problem.
    File { path: PathBuf },
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let size = match self {
            GeneratorSpec::Synthetic { size } => {
                if *size < 2 {
                    return Err(BenchError::Config("synthetic size must be at least 2".into()));
                }
                *size
            }
            GeneratorSpec::PointClouds { size, .. } | GeneratorSpec::Random { size } => *size,
            GeneratorSpec::Mnist { size, .. } => *size,
            GeneratorSpec::File { .. } => 1,
        };
        if size == 0 {
            return Err(BenchError::Config("generator size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtragradMode {
    /// Parameters derived from `epsilon`; the budget, if any, caps `t_max`.
    Theoretical,
    FineTuned,
    ScaledTheoretical,
    Manual {
        b: f64,
        eta: f64,
        step_scale: f64,
        c3: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
// No deny_unknown_fields here: serde does not support it together with the
// flattened extragradient mode.
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Extragrad {
        #[serde(flatten)]
        mode: ExtragradMode,
    },
    Sinkhorn {
        /// Regularization strength; defaults to `4 ln n / epsilon`.
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default = "one")]
        omega: f64,
    },
    Greenkhorn {
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default = "one_usize")]
        batch: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl AlgorithmSpec {
    /// Short label used for output directories and summary entries.
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::Extragrad { mode } => match mode {
                ExtragradMode::Theoretical => "extragrad_theoretical".into(),
                ExtragradMode::FineTuned => "extragrad_fine_tuned".into(),
                ExtragradMode::ScaledTheoretical => "extragrad_scaled_theoretical".into(),
                ExtragradMode::Manual { .. } => "extragrad_manual".into(),
            },
            AlgorithmSpec::Sinkhorn { eta, omega } => {
                let mut s = match eta {
                    Some(e) => format!("sinkhorn_eta{e}"),
                    None => "sinkhorn".into(),
                };
                if *omega != 1.0 {
                    s.push_str(&format!("_omega{omega}"));
                }
                s
            }
            AlgorithmSpec::Greenkhorn { eta, batch } => {
                let mut s = match eta {
                    Some(e) => format!("greenkhorn_eta{e}"),
                    None => "greenkhorn".into(),
                };
                if *batch != 1 {
                    s.push_str(&format!("_batch{batch}"));
                }
                s
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// Matvec-equivalents per trial.
    #[serde(default)]
    pub matvecs: Option<f64>,
    /// Cap on measured step time per trial.
    #[serde(default)]
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Largest `n` the exact solver is run on.
    #[serde(default = "default_n_limit")]
    pub n_limit: usize,
    /// Gaps below `-tolerance` are reported as a numeric failure.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Fail when the instance is too large for the oracle instead of
    /// recording traces without gaps.
    #[serde(default = "yes")]
    pub required: bool,
}

fn default_n_limit() -> usize {
    egot::oracle::DEFAULT_N_LIMIT
}

fn default_tolerance() -> f64 {
    1e-9
}

fn yes() -> bool {
    true
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { n_limit: default_n_limit(), tolerance: default_tolerance(), required: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CadenceSpec {
    /// About 200 measurements per trial.
    #[default]
    Auto,
    Every(u64),
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    /// Divide costs by their maximum before solving. Off by default: the
    /// extragradient solver normalizes internally, while the baselines'
    /// `eta` acts on the costs as given.
    #[serde(default)]
    pub normalize_costs: bool,
    pub algorithm: AlgorithmSpec,
    /// Target accuracy, in units of the costs the solver sees.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub cadence: CadenceSpec,
    /// Stop a trial once its rounded gap is at most this value.
    #[serde(default)]
    pub stop_below_gap: Option<f64>,
    #[serde(default = "one_usize")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Output directory; not part of the config hash.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    0.1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Config(m.into()));
        self.generator.validate()?;
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad("epsilon must be positive");
        }
        if let Some(m) = self.budget.matvecs {
            if !(m > 0.0) || !m.is_finite() {
                return bad("budget.matvecs must be positive");
            }
        }
        if self.budget.wall_ms == Some(0) {
            return bad("budget.wall_ms must be positive");
        }
        let theoretical = matches!(self.algorithm, AlgorithmSpec::Extragrad { mode: ExtragradMode::Theoretical });
        if self.budget.matvecs.is_none() && self.budget.wall_ms.is_none() && !theoretical {
            return bad("budget needs matvecs or wall_ms");
        }
        if let CadenceSpec::Every(0) = self.cadence {
            return bad("cadence interval must be positive");
        }
        if let Some(g) = self.stop_below_gap {
            if !(g >= 0.0) {
                return bad("stop_below_gap must be nonnegative");
            }
        }
        if !(self.oracle.tolerance >= 0.0) {
            return bad("oracle.tolerance must be nonnegative");
        }
        match self.algorithm {
            AlgorithmSpec::Sinkhorn { eta, omega } => {
                if eta.is_some_and(|e| !(e > 0.0)) {
                    return bad("sinkhorn eta must be positive");
                }
                if !(1.0..2.0).contains(&omega) {
                    return bad("sinkhorn omega must be in [1, 2)");
                }
            }
            AlgorithmSpec::Greenkhorn { eta, batch } => {
                if eta.is_some_and(|e| !(e > 0.0)) {
                    return bad("greenkhorn eta must be positive");
                }
                if batch == 0 {
                    return bad("greenkhorn batch must be positive");
                }
            }
            AlgorithmSpec::Extragrad { .. } => {}
        }
        Ok(())
    }

    /// Canonical JSON without the output path.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}
