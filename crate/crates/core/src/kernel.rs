//! Kernel families, mark factors and the kernel-matrix specification.
//!
//! A component `φ^{ij}(t, x)` is a time family (possibly depending on the mark
//! `x`) multiplied by a mark factor `f(x)`. Mark factors are normalised so that
//! `E[f(ξ)] = 1` when `ξ` is uniform on `1..=M`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};

/// Anything that evaluates a `D×D` marked kernel matrix.
pub trait KernelMatrix: Sync {
    fn dimension(&self) -> usize;
    fn mark_cardinality(&self) -> u32;
    /// `φ^{ij}(t, m)` with 0-based `i, j`, `t >= 0` and `m` in `1..=M`.
    fn value(&self, i: usize, j: usize, t: f64, m: u32) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Zero,
    /// `α e^{-βt}`
    Exponential { alpha: f64, beta: f64 },
    /// `α (γ + t)^{-β}`
    PowerLaw { alpha: f64, beta: f64, gamma: f64 },
    /// `α e^{-β(t-ℓ)} 1{t ≥ ℓ}`
    DelayedExponential { alpha: f64, beta: f64, delay: f64 },
    /// `α_lo e^{-β_lo t} 1{t < ℓ} + α_hi e^{-β_hi (t-ℓ)} 1{t ≥ ℓ}`
    InhibitionTwoPhase { alpha_lo: f64, beta_lo: f64, alpha_hi: f64, beta_hi: f64, delay: f64 },
    /// Equal-weight mixture of two Gaussian bumps scaled by `α/2`.
    BimodalGaussian { alpha: f64, mu_lo: f64, sigma_lo: f64, mu_hi: f64, sigma_hi: f64 },
    /// As [`KernelFamily::BimodalGaussian`] but the second bump is centred at
    /// `((x-1)/M) μ_lo + ((M-x+1)/M) μ_hi`.
    NonMultiplicativeBimodal { alpha: f64, mu_lo: f64, sigma_lo: f64, mu_hi: f64, sigma_hi: f64 },
    Tabulated(TabulatedKernel),
}

/// Piecewise-linear kernel on a time grid, one value column per mark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernel {
    pub times: Vec<f64>,
    /// `values[m - 1][k]` is the kernel at `times[k]` for mark `m`.
    pub values: Vec<Vec<f64>>,
    /// Per-mark maximum of the positive part, used as the thinning bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Vec<f64>>,
}

impl TabulatedKernel {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let max = values.iter().map(|col| col.iter().fold(0.0f64, |a, &v| a.max(v))).collect();
        let tab = Self { times, values, max: Some(max) };
        tab.validate(None)?;
        Ok(tab)
    }

    fn validate(&self, marks: Option<u32>) -> Result<()> {
        if self.times.is_empty() || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HawkesError::arg("tabulated grid must be non-empty and strictly increasing"));
        }
        if self.times[0] < 0.0 {
            return Err(HawkesError::arg("tabulated grid must start at t >= 0"));
        }
        if self.values.iter().any(|c| c.len() != self.times.len()) {
            return Err(HawkesError::arg("tabulated value columns must match the grid length"));
        }
        if let Some(m) = marks {
            if self.values.len() != m as usize {
                return Err(HawkesError::arg(format!(
                    "tabulated kernel has {} mark columns, expected {m}",
                    self.values.len()
                )));
            }
        }
        if let Some(max) = &self.max {
            if max.len() != self.values.len() {
                return Err(HawkesError::arg("tabulated max must have one entry per mark"));
            }
        }
        Ok(())
    }

    /// Linear interpolation; the first value is held on `[0, times[0])` and the
    /// kernel is zero past the last node.
    pub fn eval(&self, t: f64, m: u32) -> f64 {
        let col = &self.values[(m - 1) as usize];
        let ts = &self.times;
        let last = ts.len() - 1;
        if t > ts[last] {
            return 0.0;
        }
        if t <= ts[0] {
            return col[0];
        }
        let k = ts.partition_point(|&x| x <= t);
        if k > last {
            return col[last];
        }
        let (t0, t1) = (ts[k - 1], ts[k]);
        col[k - 1] + (col[k] - col[k - 1]) * (t - t0) / (t1 - t0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarkFactor {
    /// `f0(x) = 1`
    #[default]
    Constant,
    /// `f1(x) = 2x / (M+1)`
    Linear,
    /// `f2(x) = 6x² / ((M+1)(2M+1))`
    Quadratic,
    /// No separate factor; the family itself depends on the mark.
    None,
}

impl MarkFactor {
    pub fn value(self, m: u32, marks: u32) -> f64 {
        let x = m as f64;
        let big_m = marks as f64;
        match self {
            MarkFactor::Constant | MarkFactor::None => 1.0,
            MarkFactor::Linear => 2.0 * x / (big_m + 1.0),
            MarkFactor::Quadratic => 6.0 * x * x / ((big_m + 1.0) * (2.0 * big_m + 1.0)),
        }
    }
}

fn gauss_bump(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = (t - mu) / sigma;
    (-0.5 * z * z).exp() / sigma
}

/// Supremum over `t >= a` of one Gaussian bump.
fn gauss_bump_sup_from(a: f64, mu: f64, sigma: f64) -> f64 {
    if a <= mu {
        1.0 / sigma
    } else {
        gauss_bump(a, mu, sigma)
    }
}

impl KernelFamily {
    /// Centre of the mark-dependent second bump for mark `m` of `marks`.
    pub fn mode_center(mu_lo: f64, mu_hi: f64, m: u32, marks: u32) -> f64 {
        let x = m as f64;
        let big_m = marks as f64;
        (x - 1.0) / big_m * mu_lo + (big_m - x + 1.0) / big_m * mu_hi
    }

    /// Time profile at `t >= 0` for mark `m` (mark factor not applied).
    pub fn eval(&self, t: f64, m: u32, marks: u32) -> f64 {
        match *self {
            KernelFamily::Zero => 0.0,
            KernelFamily::Exponential { alpha, beta } => alpha * (-beta * t).exp(),
            KernelFamily::PowerLaw { alpha, beta, gamma } => alpha * (gamma + t).powf(-beta),
            KernelFamily::DelayedExponential { alpha, beta, delay } => {
                if t >= delay {
                    alpha * (-beta * (t - delay)).exp()
                } else {
                    0.0
                }
            }
            KernelFamily::InhibitionTwoPhase { alpha_lo, beta_lo, alpha_hi, beta_hi, delay } => {
                if t < delay {
                    alpha_lo * (-beta_lo * t).exp()
                } else {
                    alpha_hi * (-beta_hi * (t - delay)).exp()
                }
            }
            KernelFamily::BimodalGaussian { alpha, mu_lo, sigma_lo, mu_hi, sigma_hi } => {
                alpha / (2.0 * (2.0 * PI).sqrt()) * (gauss_bump(t, mu_lo, sigma_lo) + gauss_bump(t, mu_hi, sigma_hi))
            }
            KernelFamily::NonMultiplicativeBimodal { alpha, mu_lo, sigma_lo, mu_hi, sigma_hi } => {
                let centre = Self::mode_center(mu_lo, mu_hi, m, marks);
                alpha / (2.0 * (2.0 * PI).sqrt()) * (gauss_bump(t, mu_lo, sigma_lo) + gauss_bump(t, centre, sigma_hi))
            }
            KernelFamily::Tabulated(ref tab) => tab.eval(t, m),
        }
    }

    /// An upper bound of `sup_{t >= a} max(φ(t, m), 0)` that is non-increasing in `a`.
    pub(crate) fn positive_sup_from(&self, a: f64, m: u32, marks: u32) -> Result<f64> {
        let a = a.max(0.0);
        Ok(match *self {
            KernelFamily::Zero => 0.0,
            KernelFamily::Exponential { alpha, beta } => (alpha * (-beta * a).exp()).max(0.0),
            KernelFamily::PowerLaw { alpha, beta, gamma } => (alpha * (gamma + a).powf(-beta)).max(0.0),
            KernelFamily::DelayedExponential { alpha, beta, delay } => {
                if alpha <= 0.0 {
                    0.0
                } else if a <= delay {
                    alpha
                } else {
                    alpha * (-beta * (a - delay)).exp()
                }
            }
            KernelFamily::InhibitionTwoPhase { alpha_lo, beta_lo, alpha_hi, beta_hi, delay } => {
                let lo = if a < delay && alpha_lo > 0.0 { alpha_lo * (-beta_lo * a).exp() } else { 0.0 };
                let hi = if alpha_hi <= 0.0 {
                    0.0
                } else if a <= delay {
                    alpha_hi
                } else {
                    alpha_hi * (-beta_hi * (a - delay)).exp()
                };
                lo.max(hi)
            }
            KernelFamily::BimodalGaussian { alpha, mu_lo, sigma_lo, mu_hi, sigma_hi } => {
                let s = gauss_bump_sup_from(a, mu_lo, sigma_lo) + gauss_bump_sup_from(a, mu_hi, sigma_hi);
                (alpha / (2.0 * (2.0 * PI).sqrt()) * s).max(0.0)
            }
            KernelFamily::NonMultiplicativeBimodal { alpha, mu_lo, sigma_lo, mu_hi, sigma_hi } => {
                let centre = Self::mode_center(mu_lo, mu_hi, m, marks);
                let s = gauss_bump_sup_from(a, mu_lo, sigma_lo) + gauss_bump_sup_from(a, centre, sigma_hi);
                (alpha / (2.0 * (2.0 * PI).sqrt()) * s).max(0.0)
            }
            KernelFamily::Tabulated(ref tab) => {
                let max = tab.max.as_ref().ok_or_else(|| {
                    HawkesError::arg("tabulated kernel has no stored maximum; cannot bound the intensity")
                })?;
                if a > *tab.times.last().unwrap() {
                    0.0
                } else {
                    max[(m - 1) as usize].max(0.0)
                }
            }
        })
    }

    /// Lag past which less than `tol` of the kernel mass remains, capped at `cap`.
    pub(crate) fn memory(&self, tol: f64, cap: f64) -> f64 {
        let log_tol = (1.0 / tol).ln();
        // one-sided Gaussian tail below 1e-6 at ~4.75σ
        let z = 5.0;
        let m = match *self {
            KernelFamily::Zero => 0.0,
            KernelFamily::Exponential { beta, .. } => log_tol / beta,
            KernelFamily::PowerLaw { beta, gamma, .. } => {
                if beta <= 1.0 {
                    f64::INFINITY
                } else {
                    gamma * (tol.powf(1.0 / (1.0 - beta)) - 1.0)
                }
            }
            KernelFamily::DelayedExponential { beta, delay, .. } => delay + log_tol / beta,
            KernelFamily::InhibitionTwoPhase { beta_hi, delay, .. } => delay + log_tol / beta_hi,
            KernelFamily::BimodalGaussian { mu_lo, sigma_lo, mu_hi, sigma_hi, .. } => {
                (mu_lo + z * sigma_lo).max(mu_hi + z * sigma_hi)
            }
            KernelFamily::NonMultiplicativeBimodal { mu_lo, sigma_lo, mu_hi, sigma_hi, .. } => {
                (mu_lo + z * sigma_lo).max(mu_lo.max(mu_hi) + z * sigma_hi)
            }
            KernelFamily::Tabulated(ref tab) => *tab.times.last().unwrap(),
        };
        m.min(cap)
    }

    fn validate(&self, marks: u32) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HawkesError::arg(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(HawkesError::arg(format!("{name} must be finite")))
            }
        };
        match *self {
            KernelFamily::Zero => Ok(()),
            KernelFamily::Exponential { alpha, beta } => {
                finite("alpha", alpha)?;
                positive("beta", beta)
            }
            KernelFamily::PowerLaw { alpha, beta, gamma } => {
                finite("alpha", alpha)?;
                positive("beta", beta)?;
                positive("gamma", gamma)
            }
            KernelFamily::DelayedExponential { alpha, beta, delay } => {
                finite("alpha", alpha)?;
                positive("beta", beta)?;
                if delay >= 0.0 { Ok(()) } else { Err(HawkesError::arg("delay must be >= 0")) }
            }
            KernelFamily::InhibitionTwoPhase { alpha_lo, beta_lo, alpha_hi, beta_hi, delay } => {
                finite("alpha_lo", alpha_lo)?;
                finite("alpha_hi", alpha_hi)?;
                positive("beta_lo", beta_lo)?;
                positive("beta_hi", beta_hi)?;
                if delay >= 0.0 { Ok(()) } else { Err(HawkesError::arg("delay must be >= 0")) }
            }
            KernelFamily::BimodalGaussian { alpha, mu_lo, sigma_lo, mu_hi, sigma_hi }
            | KernelFamily::NonMultiplicativeBimodal { alpha, mu_lo, sigma_lo, mu_hi, sigma_hi } => {
                finite("alpha", alpha)?;
                finite("mu_lo", mu_lo)?;
                finite("mu_hi", mu_hi)?;
                positive("sigma_lo", sigma_lo)?;
                positive("sigma_hi", sigma_hi)
            }
            KernelFamily::Tabulated(ref tab) => tab.validate(Some(marks)),
        }
    }

    /// Shortest characteristic time of the profile, if it has one.
    pub(crate) fn time_scale(&self) -> Option<f64> {
        match *self {
            KernelFamily::Zero | KernelFamily::Tabulated(_) => None,
            KernelFamily::Exponential { beta, .. } | KernelFamily::DelayedExponential { beta, .. } => Some(1.0 / beta),
            KernelFamily::PowerLaw { gamma, .. } => Some(gamma),
            KernelFamily::InhibitionTwoPhase { beta_lo, beta_hi, .. } => Some(1.0 / beta_lo.max(beta_hi)),
            KernelFamily::BimodalGaussian { sigma_lo, sigma_hi, .. }
            | KernelFamily::NonMultiplicativeBimodal { sigma_lo, sigma_hi, .. } => Some(sigma_lo.min(sigma_hi)),
        }
    }

    fn is_mark_coupled(&self) -> bool {
        matches!(self, KernelFamily::NonMultiplicativeBimodal { .. } | KernelFamily::Tabulated(_))
    }

    fn has_negative_part(&self) -> bool {
        match *self {
            KernelFamily::Zero => false,
            KernelFamily::Exponential { alpha, .. }
            | KernelFamily::PowerLaw { alpha, .. }
            | KernelFamily::DelayedExponential { alpha, .. }
            | KernelFamily::BimodalGaussian { alpha, .. }
            | KernelFamily::NonMultiplicativeBimodal { alpha, .. } => alpha < 0.0,
            KernelFamily::InhibitionTwoPhase { alpha_lo, alpha_hi, .. } => alpha_lo < 0.0 || alpha_hi < 0.0,
            KernelFamily::Tabulated(ref tab) => tab.values.iter().flatten().any(|&v| v < 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    #[serde(flatten)]
    pub family: KernelFamily,
    #[serde(default)]
    pub mark_factor: MarkFactor,
}

impl KernelEntry {
    pub fn new(family: KernelFamily, mark_factor: MarkFactor) -> Self {
        Self { family, mark_factor }
    }

    pub fn eval(&self, t: f64, m: u32, marks: u32) -> f64 {
        self.family.eval(t, m, marks) * self.mark_factor.value(m, marks)
    }
}

/// Baseline, mark distributions and the `D×D` kernel matrix of a marked Hawkes process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dimension: usize,
    pub mark_cardinality: u32,
    /// `μ`, events per second.
    pub baseline: Vec<f64>,
    /// `mark_pmfs[j][m - 1] = P(ξ^j = m)`.
    pub mark_pmfs: Vec<Vec<f64>>,
    /// `kernels[i][j]` is the impact of a type-`j` event on type-`i` arrivals.
    pub kernels: Vec<Vec<KernelEntry>>,
}

pub fn uniform_pmf(marks: u32) -> Vec<f64> {
    vec![1.0 / marks as f64; marks as usize]
}

impl KernelSpec {
    /// Builds and validates a spec with uniform mark distributions.
    pub fn new(baseline: Vec<f64>, kernels: Vec<Vec<KernelEntry>>, marks: u32) -> Result<Self> {
        let dimension = baseline.len();
        let spec = Self {
            dimension,
            mark_cardinality: marks,
            baseline,
            mark_pmfs: vec![uniform_pmf(marks); dimension],
            kernels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 || self.mark_cardinality == 0 {
            return Err(HawkesError::arg("dimension and mark cardinality must be >= 1"));
        }
        if self.baseline.len() != d || self.mark_pmfs.len() != d || self.kernels.len() != d {
            return Err(HawkesError::arg("baseline, mark_pmfs and kernels must all have D rows"));
        }
        if self.baseline.iter().any(|&mu| !(mu >= 0.0) || !mu.is_finite()) {
            return Err(HawkesError::arg("baseline rates must be finite and >= 0"));
        }
        for (j, pmf) in self.mark_pmfs.iter().enumerate() {
            if pmf.len() != self.mark_cardinality as usize || pmf.iter().any(|&p| !(p >= 0.0)) {
                return Err(HawkesError::arg(format!("mark pmf of component {} is malformed", j + 1)));
            }
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(HawkesError::arg(format!("mark pmf of component {} sums to {total}", j + 1)));
            }
        }
        for (i, row) in self.kernels.iter().enumerate() {
            if row.len() != d {
                return Err(HawkesError::arg(format!("kernel row {} must have D entries", i + 1)));
            }
            for (j, e) in row.iter().enumerate() {
                e.family
                    .validate(self.mark_cardinality)
                    .map_err(|err| HawkesError::arg(format!("kernel ({},{}): {err}", i + 1, j + 1)))?;
                if e.family.is_mark_coupled() && e.mark_factor != MarkFactor::None && e.mark_factor != MarkFactor::Constant {
                    return Err(HawkesError::arg(format!(
                        "kernel ({},{}): mark-coupled families take no separate mark factor",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_indices(&self, i: usize, j: usize, m: u32) -> Result<()> {
        if i >= self.dimension || j >= self.dimension {
            return Err(HawkesError::arg(format!("kernel index ({i},{j}) out of range for D={}", self.dimension)));
        }
        if m == 0 || m > self.mark_cardinality {
            return Err(HawkesError::arg(format!("mark {m} outside 1..={}", self.mark_cardinality)));
        }
        Ok(())
    }

    /// `φ^{ij}(t, m)` with argument checks.
    pub fn kernel_eval(&self, i: usize, j: usize, t: f64, m: u32) -> Result<f64> {
        self.check_indices(i, j, m)?;
        if !(t >= 0.0) {
            return Err(HawkesError::arg(format!("kernel time must be >= 0, got {t}")));
        }
        Ok(self.value(i, j, t, m))
    }

    pub fn has_negative_parts(&self) -> bool {
        self.kernels.iter().flatten().any(|e| e.family.has_negative_part())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl KernelMatrix for KernelSpec {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn mark_cardinality(&self) -> u32 {
        self.mark_cardinality
    }

    fn value(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
        self.kernels[i][j].eval(t, m, self.mark_cardinality)
    }
}
