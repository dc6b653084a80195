//! First-order algebra: L1 norms, branching ratio, stationary rates, baseline
//! recovery and the aggregated time and mark kernels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernel::{KernelFamily, KernelMatrix, KernelSpec};
use crate::quadrature::{geometric_edges, QuadratureGrid};

/// `D×D` matrix of signed L1 norms `Σ_m p^j(m) ∫ φ^{ij}(s, m) ds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormMatrix {
    pub values: Vec<Vec<f64>>,
}

impl NormMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let d = values.len();
        if d == 0 || values.iter().any(|r| r.len() != d) {
            return Err(HawkesError::arg("norm matrix must be square and non-empty"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HawkesError::Numerical("norm matrix has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(d: usize) -> Self {
        Self { values: vec![vec![0.0; d]; d] }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Entry-wise absolute value, the conservative input for stationarity checks.
    pub fn abs(&self) -> Self {
        Self { values: self.values.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect() }
    }

    pub fn transpose(&self) -> Self {
        let d = self.dimension();
        Self { values: (0..d).map(|i| (0..d).map(|j| self.values[j][i]).collect()).collect() }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.dimension();
        DMatrix::from_fn(d, d, |i, j| self.values[i][j])
    }
}

/// Signed L1 norms of any kernel matrix through `quad`.
pub fn l1_norms<K: KernelMatrix + ?Sized>(kernel: &K, pmfs: &[Vec<f64>], quad: &QuadratureGrid) -> NormMatrix {
    let d = kernel.dimension();
    let marks = kernel.mark_cardinality();
    let values = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    (1..=marks)
                        .map(|m| {
                            let p = pmfs[j][(m - 1) as usize];
                            if p == 0.0 {
                                0.0
                            } else {
                                p * quad.integrate(|s| kernel.value(i, j, s, m))
                            }
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    NormMatrix { values }
}

/// Signed L1 norms of `spec` on `[0, horizon]` using the supplied quadrature.
pub fn kernel_l1_norm(spec: &KernelSpec, horizon: f64, quad: &QuadratureGrid) -> Result<NormMatrix> {
    if !(horizon > 0.0) {
        return Err(HawkesError::arg(format!("truncation horizon must be positive, got {horizon}")));
    }
    if (quad.upper() - horizon).abs() > 1e-9 * horizon {
        return Err(HawkesError::arg(format!(
            "quadrature ends at {} but the truncation horizon is {horizon}",
            quad.upper()
        )));
    }
    NormMatrix::new(l1_norms(spec, &spec.mark_pmfs, quad).values)
}

impl KernelSpec {
    /// Kink and jump locations inside `(0, horizon)` that a quadrature should respect.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .kernels
            .iter()
            .flatten()
            .filter_map(|e| match e.family {
                KernelFamily::DelayedExponential { delay, .. } | KernelFamily::InhibitionTwoPhase { delay, .. } => {
                    Some(delay)
                }
                _ => None,
            })
            .filter(|&x| x > 0.0 && x < horizon)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// A high-accuracy quadrature on `[0, horizon]` adapted to this spec.
    pub fn norm_quadrature(&self, horizon: f64) -> Result<QuadratureGrid> {
        self.norm_quadrature_with(horizon, 200)
    }

    pub(crate) fn norm_quadrature_with(&self, horizon: f64, panels: usize) -> Result<QuadratureGrid> {
        let scale = self
            .kernels
            .iter()
            .flatten()
            .filter_map(|e| e.family.time_scale())
            .fold(f64::INFINITY, f64::min);
        let lo = (horizon * 1e-7).min(scale * 1e-3);
        let edges = geometric_edges(lo, horizon, panels, &self.breakpoints(horizon))?;
        QuadratureGrid::gauss_legendre_panels(&edges, 8)
    }

    /// Signed L1 norms on `[0, horizon]` with [`KernelSpec::norm_quadrature`].
    pub fn l1_norms(&self, horizon: f64) -> Result<NormMatrix> {
        let quad = self.norm_quadrature(horizon)?;
        kernel_l1_norm(self, horizon, &quad)
    }

    /// Stationary rates `Λ = (I - ‖Φ‖)^{-1} μ` with norms on `[0, horizon]`.
    pub fn stationary_rates(&self, horizon: f64) -> Result<Vec<f64>> {
        stationary_rates(&self.l1_norms(horizon)?, &self.baseline)
    }

    /// Fraction of each entry's absolute mass lying on `(horizon, 10^4·horizon]`.
    pub fn truncated_mass(&self, horizon: f64) -> Result<Vec<Vec<f64>>> {
        let far = horizon * 1e4;
        let near_q = self.norm_quadrature(horizon)?;
        let far_q = self.norm_quadrature(far)?;
        let d = self.dimension;
        let abs_norm = |q: &QuadratureGrid, i: usize, j: usize| -> f64 {
            (1..=self.mark_cardinality)
                .map(|m| self.mark_pmfs[j][(m - 1) as usize] * q.integrate(|s| self.value(i, j, s, m).abs()))
                .sum()
        };
        Ok((0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let total = abs_norm(&far_q, i, j);
                        if total == 0.0 {
                            0.0
                        } else {
                            ((total - abs_norm(&near_q, i, j)) / total).max(0.0)
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// Spectral radius of the entry-wise absolute norm matrix.
///
/// Power iteration on `|N| + I` from the all-ones vector; the unit shift makes
/// the Perron root strictly dominant for non-negative matrices. If the
/// iteration stalls, the eigenvalues are computed from a real Schur form.
pub fn branching_ratio(norms: &NormMatrix) -> Result<f64> {
    let a = norms.abs().to_matrix();
    let d = a.nrows();
    let shifted = &a + DMatrix::identity(d, d);
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut estimate = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let next = w / norm;
        let step = (&next - &v).amax();
        v = next;
        estimate = norm;
        if step < POWER_TOL {
            return Ok((estimate - 1.0).max(0.0));
        }
    }
    let eig = a.complex_eigenvalues();
    if eig.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Err(HawkesError::Numerical(format!(
        "spectral radius did not converge after {POWER_MAX_ITER} iterations (last estimate {})",
        estimate - 1.0
    )))
}

/// `μ = (I - N) Λ` after checking stationarity.
pub fn baseline_from_rates(norms: &NormMatrix, rates: &[f64]) -> Result<Vec<f64>> {
    let d = norms.dimension();
    if rates.len() != d {
        return Err(HawkesError::arg(format!("{} rates for a {d}-dimensional norm matrix", rates.len())));
    }
    let ratio = branching_ratio(norms)?;
    if ratio >= 1.0 {
        return Err(HawkesError::Stationarity { ratio });
    }
    Ok((0..d)
        .map(|i| rates[i] - (0..d).map(|j| norms.values[i][j] * rates[j]).sum::<f64>())
        .collect())
}

/// `Λ = (I - N)^{-1} μ` after checking stationarity.
pub fn stationary_rates(norms: &NormMatrix, baseline: &[f64]) -> Result<Vec<f64>> {
    let d = norms.dimension();
    if baseline.len() != d {
        return Err(HawkesError::arg(format!("{} baseline rates for a {d}-dimensional norm matrix", baseline.len())));
    }
    let ratio = branching_ratio(norms)?;
    if ratio >= 1.0 {
        return Err(HawkesError::Stationarity { ratio });
    }
    let system = DMatrix::identity(d, d) - norms.to_matrix();
    let rhs = DVector::from_column_slice(baseline);
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| HawkesError::Numerical("I - ‖Φ‖ is singular".into()))?;
    Ok(sol.iter().copied().collect())
}

/// `Σ_m p^j(m) φ^{ij}(t, m)`.
pub fn aggregated_time_kernel<K: KernelMatrix + ?Sized>(kernel: &K, pmf: &[f64], i: usize, j: usize, t: f64) -> f64 {
    (1..=kernel.mark_cardinality())
        .map(|m| pmf[(m - 1) as usize] * kernel.value(i, j, t, m))
        .sum()
}

/// `(1/‖φ^{ij}‖) ∫ φ^{ij}(s, m) ds`, both integrals through `quad`.
pub fn aggregated_mark_kernel<K: KernelMatrix + ?Sized>(
    kernel: &K,
    pmf: &[f64],
    i: usize,
    j: usize,
    m: u32,
    quad: &QuadratureGrid,
) -> Result<f64> {
    let marks = kernel.mark_cardinality();
    if m == 0 || m > marks {
        return Err(HawkesError::arg(format!("mark {m} outside 1..={marks}")));
    }
    let per_mark: Vec<f64> = (1..=marks).map(|z| quad.integrate(|s| kernel.value(i, j, s, z))).collect();
    let norm: f64 = per_mark.iter().zip(pmf).map(|(v, p)| v * p).sum();
    if norm == 0.0 || !norm.is_finite() {
        return Err(HawkesError::Degenerate(format!("kernel ({},{}) has zero L1 norm", i + 1, j + 1)));
    }
    Ok(per_mark[(m - 1) as usize] / norm)
}
