use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::problem::OtInstance;

/// How a parameter set was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    Theoretical,
    Manual,
}

/// Universal constants of the theoretical parameter choice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for Constants {
    /// `C1 = 124, C2 = 0.024, C3 = 1, C4 = 2`, values for which the accuracy
    /// guarantee is known to hold (they are conservative in practice).
    fn default() -> Self {
        Self { c1: 124.0, c2: 0.024, c3: 1.0, c4: 2.0 }
    }
}

/// Hand-set parameters: rates follow
/// `eta_p_i r_i = C / sqrt(B)` and `eta_mu_j = C sqrt(B) / (c_j + C3 / n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManualSettings {
    pub b: f64,
    pub eta: f64,
    pub step_scale: f64,
    pub c3: f64,
    pub t_max: u64,
    /// Target accuracy after cost normalization; only used for early stopping.
    pub epsilon: f64,
}

impl ManualSettings {
    /// `B = 1`, `eta = 0`, `C = 1`, `C3 = 1e-2`: undamped multiplicative
    /// updates with strong adjustment of the dual pairs.
    pub fn fine_tuned(t_max: u64) -> Self {
        Self { b: 1.0, eta: 0.0, step_scale: 1.0, c3: 1e-2, t_max, epsilon: 0.0 }
    }

    /// The experimental "theoretical" choice: `B = log(n/eps)`,
    /// `eta = eps / (sqrt(B) log n)`, `C = C3 = 1`.
    pub fn scaled_theoretical(n: usize, epsilon: f64, t_max: u64) -> Self {
        let b = (n as f64 / epsilon).ln();
        let eta = epsilon / (b.sqrt() * log_n(n));
        Self { b, eta, step_scale: 1.0, c3: 1.0, t_max, epsilon }
    }
}

/// Every scalar the extragradient loop needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub mode: ParamMode,
    /// Target accuracy after dividing costs by `||W||_inf`.
    pub epsilon: f64,
    /// Adjustment strength; dual pairs are clamped to ratio `e^B`.
    pub b: f64,
    /// Damping `eta = tau * rate`, in `[0, 1)`.
    pub eta: f64,
    pub eta_mu: Vec<f64>,
    /// The products `eta_p_i * r_i`; the loop never needs `eta_p_i` alone.
    pub eta_p_times_r: Vec<f64>,
    pub t_max: u64,
    pub constants: Option<Constants>,
}

// log n with n = 1 treated as n = 2 so that eta stays finite on the trivial
// one-point problem.
fn log_n(n: usize) -> f64 {
    (n.max(2) as f64).ln()
}

/// Derives the theoretical parameter set for `instance` at accuracy
/// `epsilon_raw` (in the instance's own cost units).
pub fn derive_params(instance: &OtInstance, epsilon_raw: f64, constants: Constants) -> Result<SolverParams> {
    let n = instance.n();
    let w_inf = instance.w_inf();
    if !(epsilon_raw > 0.0) || epsilon_raw >= w_inf {
        return Err(OtError::param(format!(
            "accuracy must satisfy 0 < eps < ||W||_inf, got eps = {epsilon_raw}, ||W||_inf = {w_inf}"
        )));
    }
    let Constants { c1, c2, c3, c4 } = constants;
    if !(c1 > 0.0 && c2 > 0.0 && c3 > 0.0 && c4 > 0.0) {
        return Err(OtError::param("constants must be positive"));
    }
    let eps = epsilon_raw / w_inf;
    let nf = n as f64;
    let log_ratio = (nf / eps).ln();
    let b = c1 * log_ratio;
    let sqrt_b = b.sqrt();
    let eta = c2 * c2 * eps / (sqrt_b * log_n(n));
    let eta_mu = instance.c().iter().map(|&cj| 15.0 * c2 * sqrt_b / (cj + c3 / nf)).collect();
    let eta_p_times_r = vec![c2 / sqrt_b; n];
    let t_max = (c4 / eta * log_ratio).ceil() as u64;
    let params = SolverParams {
        mode: ParamMode::Theoretical,
        epsilon: eps,
        b,
        eta,
        eta_mu,
        eta_p_times_r,
        t_max: t_max.max(1),
        constants: Some(constants),
    };
    params.validate(n)?;
    Ok(params)
}

impl SolverParams {
    pub fn theoretical(instance: &OtInstance, epsilon_raw: f64) -> Result<Self> {
        derive_params(instance, epsilon_raw, Constants::default())
    }

    pub fn manual(instance: &OtInstance, s: ManualSettings) -> Result<Self> {
        let n = instance.n();
        if !(s.b > 0.0) || !(s.step_scale > 0.0) || !(s.c3 > 0.0) {
            return Err(OtError::param("B, C and C3 must be positive"));
        }
        let nf = n as f64;
        let sqrt_b = s.b.sqrt();
        let params = SolverParams {
            mode: ParamMode::Manual,
            epsilon: s.epsilon,
            b: s.b,
            eta: s.eta,
            eta_mu: instance.c().iter().map(|&cj| s.step_scale * sqrt_b / (cj + s.c3 / nf)).collect(),
            eta_p_times_r: vec![s.step_scale / sqrt_b; n],
            t_max: s.t_max,
            constants: None,
        };
        params.validate(n)?;
        Ok(params)
    }

    pub fn fine_tuned(instance: &OtInstance, t_max: u64) -> Result<Self> {
        Self::manual(instance, ManualSettings::fine_tuned(t_max))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.eta) {
            return Err(OtError::param(format!("eta = {} not in [0, 1)", self.eta)));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(OtError::param(format!("B = {} must be positive", self.b)));
        }
        if self.eta_mu.len() != n || self.eta_p_times_r.len() != n {
            return Err(OtError::DimensionMismatch {
                expected: n,
                got: self.eta_mu.len().min(self.eta_p_times_r.len()),
            });
        }
        if self.eta_mu.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(OtError::param("dual rates must be finite and positive"));
        }
        if self.eta_p_times_r.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(OtError::param("primal rates must be finite and nonnegative"));
        }
        if self.t_max == 0 {
            return Err(OtError::param("t_max must be positive"));
        }
        Ok(())
    }

    /// `tau_mu_j = eta / eta_mu_j`.
    pub fn tau_mu(&self) -> Vec<f64> {
        self.eta_mu.iter().map(|&r| self.eta / r).collect()
    }

    /// `tau_p_i = eta / eta_p_i = eta r_i / (eta_p_i r_i)`.
    pub fn tau_p(&self, r: &[f64]) -> Vec<f64> {
        self.eta_p_times_r.iter().zip(r).map(|(&a, &ri)| self.eta * ri / a).collect()
    }

    /// `sum_j tau_mu_j log 2 + sum_i tau_p_i log n`, the largest possible
    /// difference between the regularized and plain minimax objectives.
    pub fn regularization_budget(&self, r: &[f64]) -> f64 {
        let n = r.len();
        self.tau_mu().iter().sum::<f64>() * 2f64.ln() + self.tau_p(r).iter().sum::<f64>() * (n as f64).ln()
    }
}
