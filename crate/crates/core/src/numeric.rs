//! Small numerical helpers shared by the solvers.

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sum of an iterator with Neumaier compensation.
pub fn accurate_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `log(sum(exp(x)))`, shifted by the maximum. Returns `-inf` for an empty
/// slice or a slice of `-inf`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    let s: f64 = x.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

/// Normalizes a row of log-weights in place so that `exp` of the row sums to
/// one, writing the probabilities into `probs`. Returns the log-normalizer,
/// or `None` when the row contains a non-finite maximum.
#[inline]
pub fn normalize_log_row(logs: &mut [f64], probs: &mut [f64]) -> Option<f64> {
    debug_assert_eq!(logs.len(), probs.len());
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let mut s = 0.0;
    for (l, p) in logs.iter().zip(probs.iter_mut()) {
        let e = (*l - m).exp();
        *p = e;
        s += e;
    }
    let inv = 1.0 / s;
    let lz = m + s.ln();
    for (l, p) in logs.iter_mut().zip(probs.iter_mut()) {
        *l -= lz;
        *p *= inv;
    }
    Some(lz)
}

/// Entropy `-sum p log p` with the convention `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}
