//! Ready-made synthetic experiments: a kernel spec, a statistics grid and a
//! reference sample size for each.

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernel::{KernelEntry, KernelFamily, KernelSpec, MarkFactor};
use crate::stats::GridConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub spec: KernelSpec,
    pub grid: GridConfig,
    /// Sample size the experiment was designed around.
    pub reference_events: usize,
}

pub const PRESET_NAMES: [&str; 8] = [
    "benchmark",
    "exponential-4d",
    "power-law",
    "delayed-exponential",
    "inhibition",
    "non-multiplicative",
    "convergence-exponential",
    "convergence-power-law",
];

pub fn preset(name: &str) -> Result<Preset> {
    let mixed = |h, n_lin, n_log, horizon| GridConfig::Mixed { h, n_lin, n_log, horizon };
    let (spec, grid, reference_events) = match name {
        "benchmark" => (benchmark_exponential(), mixed(0.1, 10, 50, 10.0), 200_000),
        "exponential-4d" => (exponential_4d(), mixed(0.1, 10, 50, 10.0), 10_000_000),
        "power-law" => (power_law_2d(), mixed(1e-3, 25, 75, 10.0), 2_000_000),
        "delayed-exponential" => (delayed_exponential_2d(), mixed(0.1, 10, 50, 10.0), 2_000_000),
        "inhibition" => (inhibition_2d(), mixed(0.1, 25, 75, 10.0), 2_000_000),
        "non-multiplicative" => (non_multiplicative_2d(), GridConfig::Uniform { n: 75, horizon: 1.0 }, 5_000_000),
        "convergence-exponential" => (convergence_exponential(), mixed(0.1, 10, 50, 10.0), 1_000_000),
        "convergence-power-law" => (convergence_power_law(), mixed(1e-3, 25, 75, 10.0), 1_000_000),
        _ => {
            return Err(HawkesError::arg(format!("unknown preset `{name}`; known: {}", PRESET_NAMES.join(", "))));
        }
    };
    Ok(Preset { name: name.to_string(), spec, grid, reference_events })
}

fn build(baseline: Vec<f64>, marks: u32, entry: impl Fn(usize, usize) -> KernelEntry) -> KernelSpec {
    let d = baseline.len();
    let kernels = (0..d).map(|i| (0..d).map(|j| entry(i, j)).collect()).collect();
    KernelSpec::new(baseline, kernels, marks).expect("preset parameters are valid")
}

fn exponential(alpha: f64, beta: f64, f: MarkFactor) -> KernelEntry {
    KernelEntry::new(KernelFamily::Exponential { alpha, beta }, f)
}

/// Unmarked 2-d exponential kernels spanning two orders of magnitude.
pub fn benchmark_exponential() -> KernelSpec {
    let alpha = [[10.0, 0.2], [0.5, 30.0]];
    let beta = [[20.0, 5.0], [2.5, 40.0]];
    build(vec![0.05, 0.05], 1, |i, j| exponential(alpha[i][j], beta[i][j], MarkFactor::Constant))
}

/// 4-d exponential kernels with ten marks and mixed mark factors.
pub fn exponential_4d() -> KernelSpec {
    use MarkFactor::{Constant as F0, Linear as F1, Quadratic as F2};
    let alpha = [[1.5, 1.0, 2.0, 0.75], [1.0, 2.0, 2.0, 1.0], [1.0, 1.0, 2.0, 1.5], [2.0, 1.0, 2.0, 0.5]];
    let beta = [[8.0, 5.0, 10.0, 8.0], [5.0, 15.0, 8.0, 5.0], [8.0, 10.0, 8.0, 8.0], [5.0, 5.0, 8.0, 4.0]];
    let f = [[F1, F2, F1, F1], [F1, F2, F2, F0], [F0, F0, F2, F0], [F2, F1, F2, F1]];
    build(vec![0.5, 0.25, 0.75, 0.15], 10, |i, j| exponential(alpha[i][j], beta[i][j], f[i][j]))
}

/// 2-d power-law kernels, five marks, quadratic mark factor.
pub fn power_law_2d() -> KernelSpec {
    let alpha = [[0.01, 0.006], [0.005, 0.012]];
    let beta = [[1.05, 1.25], [1.3, 1.025]];
    let gamma = [[0.0005, 0.00075], [0.001, 0.0006]];
    build(vec![0.05, 0.05], 5, |i, j| {
        KernelEntry::new(
            KernelFamily::PowerLaw { alpha: alpha[i][j], beta: beta[i][j], gamma: gamma[i][j] },
            MarkFactor::Quadratic,
        )
    })
}

/// 2-d exponential kernels switched on after a latency.
pub fn delayed_exponential_2d() -> KernelSpec {
    let alpha = [[1.25, 0.35], [0.6, 1.15]];
    let beta = [[5.0, 8.0], [8.0, 10.0]];
    let delay = [[0.1, 0.2], [0.25, 0.4]];
    build(vec![0.05, 0.05], 5, |i, j| {
        KernelEntry::new(
            KernelFamily::DelayedExponential { alpha: alpha[i][j], beta: beta[i][j], delay: delay[i][j] },
            MarkFactor::Quadratic,
        )
    })
}

/// 2-d kernels whose sign flips at a latency.
pub fn inhibition_2d() -> KernelSpec {
    let alpha_lo = [[1.0, -0.25], [-0.2, 1.2]];
    let beta_lo = [[3.0, 3.0], [2.0, 2.0]];
    let alpha_hi = [[-0.3, 1.5], [1.0, -0.25]];
    let beta_hi = [[2.0, 5.0], [3.0, 10.0]];
    let delay = [[0.25, 0.5], [0.15, 0.6]];
    build(vec![3.0, 2.5], 5, |i, j| {
        KernelEntry::new(
            KernelFamily::InhibitionTwoPhase {
                alpha_lo: alpha_lo[i][j],
                beta_lo: beta_lo[i][j],
                alpha_hi: alpha_hi[i][j],
                beta_hi: beta_hi[i][j],
                delay: delay[i][j],
            },
            MarkFactor::Quadratic,
        )
    })
}

/// 2-d bimodal kernels whose second mode moves with the mark, ten marks.
pub fn non_multiplicative_2d() -> KernelSpec {
    let alpha = [[0.5, 0.1], [0.1, 0.2]];
    let mu_lo = [[0.05, 0.15], [0.25, 0.15]];
    let sigma_lo = [[0.1, 0.05], [0.2, 0.1]];
    let mu_hi = [[0.5, 0.7], [0.6, 0.8]];
    let sigma_hi = [[0.1, 0.2], [0.075, 0.1]];
    build(vec![0.05, 0.05], 10, |i, j| {
        KernelEntry::new(
            KernelFamily::NonMultiplicativeBimodal {
                alpha: alpha[i][j],
                mu_lo: mu_lo[i][j],
                sigma_lo: sigma_lo[i][j],
                mu_hi: mu_hi[i][j],
                sigma_hi: sigma_hi[i][j],
            },
            MarkFactor::None,
        )
    })
}

/// 2-d exponential kernels with two marks, for error-versus-sample-size studies.
pub fn convergence_exponential() -> KernelSpec {
    let alpha = [[1.0, 0.25], [0.5, 0.75]];
    let beta = [[2.0, 1.0], [1.0, 1.5]];
    build(vec![0.05, 0.05], 2, |i, j| exponential(alpha[i][j], beta[i][j], MarkFactor::Constant))
}

/// 2-d power-law kernels with two marks, for error-versus-sample-size studies.
pub fn convergence_power_law() -> KernelSpec {
    let alpha = [[0.012, 0.008], [0.004, 0.005]];
    build(vec![0.05, 0.05], 2, |i, j| {
        KernelEntry::new(KernelFamily::PowerLaw { alpha: alpha[i][j], beta: 1.3, gamma: 0.0005 }, MarkFactor::Constant)
    })
}
