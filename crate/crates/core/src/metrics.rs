//! Error metrics against a known kernel, convergence studies and causality ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernel::{KernelMatrix, KernelSpec};
use crate::norms::{baseline_from_rates, branching_ratio, NormMatrix};
use crate::simulate::simulate_events;
use crate::solver::{fit, FittedKernel, TrainConfig};
use crate::stats::{estimate_second_order, StatGrid};

/// Error of one `(row, col, mark)` entry; indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub row: usize,
    pub col: usize,
    pub mark: u32,
    /// `‖φ^{ij}(·, m)‖_∞` of the reference entry.
    pub sup_norm: f64,
    pub delta_2: f64,
    pub delta_inf: f64,
    pub normalized_delta_2: f64,
    pub normalized_delta_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub delta_2: f64,
    pub delta_inf: f64,
    pub normalized_delta_2: f64,
    pub normalized_delta_inf: f64,
    /// `sup_{i,j,m} ‖φ^{ij}(·, m)‖_∞` of the reference kernel.
    pub sup_norm: f64,
    /// Grid has `K + 1` nodes.
    pub k: usize,
    pub cells: Vec<CellError>,
}

impl ErrorReport {
    /// `(Δ̄₂, Δ̄∞)` of the cells with `keep(row, col)` (1-based), normalized by
    /// the largest reference sup-norm within that group.
    pub fn group(&self, keep: impl Fn(usize, usize) -> bool) -> (f64, f64) {
        let sel: Vec<&CellError> = self.cells.iter().filter(|c| keep(c.row, c.col)).collect();
        if sel.is_empty() {
            return (0.0, 0.0);
        }
        let mean_sq = sel.iter().map(|c| c.delta_2 * c.delta_2).sum::<f64>() / sel.len() as f64;
        let max = sel.iter().map(|c| c.delta_inf).fold(0.0, f64::max);
        let sup = sel.iter().map(|c| c.sup_norm).fold(0.0, f64::max);
        let norm = if sup > 0.0 { sup } else { 1.0 };
        (mean_sq.sqrt() / norm, max / norm)
    }
}

/// Evaluation nodes `kT/K`, `k = 0..=K`, with the first node moved to `t_first`.
pub fn error_grid(k: usize, horizon: f64, t_first: f64) -> Vec<f64> {
    (0..=k).map(|n| if n == 0 { t_first } else { horizon * n as f64 / k as f64 }).collect()
}

/// `Δ₂`, `Δ∞` and their normalized versions of `fitted` against `truth` on
/// `K + 1` uniform nodes of `[0, T]`, the first node placed at `t_first`.
pub fn error_report<A, B>(fitted: &A, truth: &B, k: usize, horizon: f64, t_first: f64) -> Result<ErrorReport>
where
    A: KernelMatrix + ?Sized,
    B: KernelMatrix + ?Sized,
{
    if k == 0 || !(horizon > 0.0) || !(0.0..horizon).contains(&t_first) {
        return Err(HawkesError::arg("error grid needs K >= 1, T > 0 and 0 <= t_first < T"));
    }
    let d = truth.dimension();
    let marks = truth.mark_cardinality();
    if fitted.dimension() != d || fitted.mark_cardinality() != marks {
        return Err(HawkesError::arg("fitted and reference kernels have different shapes"));
    }
    let nodes = error_grid(k, horizon, t_first);
    let fine = 20 * k;
    let cell_sup = |i: usize, j: usize, m: u32| {
        let on_fine = (0..=fine).map(|n| truth.value(i, j, horizon * n as f64 / fine as f64, m).abs());
        let on_nodes = nodes.iter().map(|&t| truth.value(i, j, t, m).abs());
        on_fine.chain(on_nodes).fold(0.0, f64::max)
    };
    let mut sups = Vec::with_capacity(d * d * marks as usize);
    for i in 0..d {
        for j in 0..d {
            for m in 1..=marks {
                sups.push(cell_sup(i, j, m));
            }
        }
    }
    let sup_norm = sups.iter().copied().fold(0.0, f64::max);
    let norm = if sup_norm > 0.0 { sup_norm } else { 1.0 };
    let mut cells = Vec::with_capacity(d * d * marks as usize);
    let (mut total_sq, mut total_max) = (0.0, 0.0f64);
    for i in 0..d {
        for j in 0..d {
            for m in 1..=marks {
                let (mut sq, mut mx) = (0.0, 0.0f64);
                for &t in &nodes {
                    let e = fitted.value(i, j, t, m) - truth.value(i, j, t, m);
                    sq += e * e;
                    mx = mx.max(e.abs());
                }
                total_sq += sq;
                total_max = total_max.max(mx);
                let d2 = (sq / nodes.len() as f64).sqrt();
                cells.push(CellError {
                    row: i + 1,
                    col: j + 1,
                    mark: m,
                    sup_norm: sups[cells.len()],
                    delta_2: d2,
                    delta_inf: mx,
                    normalized_delta_2: d2 / norm,
                    normalized_delta_inf: mx / norm,
                });
            }
        }
    }
    let delta_2 = (total_sq / (d * d * marks as usize * nodes.len()) as f64).sqrt();
    Ok(ErrorReport {
        delta_2,
        delta_inf: total_max,
        normalized_delta_2: delta_2 / norm,
        normalized_delta_inf: total_max / norm,
        sup_norm,
        k,
        cells,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(HawkesError::arg("slope needs at least two positive (x, y) pairs"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(HawkesError::arg("slope needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRun {
    pub n_events: usize,
    pub seed: u64,
    pub normalized_delta_2: f64,
    pub normalized_delta_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub runs: Vec<ConvergenceRun>,
    /// Per entry of the `N` list: mean over seeds of `(Δ̄₂, Δ̄∞)`.
    pub mean_errors: Vec<(usize, f64, f64)>,
    pub slope_delta_2: f64,
    pub slope_delta_inf: f64,
}

/// Simulates, estimates, fits and scores `spec` for each `N` and seed, then
/// fits the log-log error slope. Runs execute in parallel.
pub fn convergence_study(
    spec: &KernelSpec,
    n_list: &[usize],
    grid: &StatGrid,
    config: &TrainConfig,
    seeds: &[u64],
    k: usize,
) -> Result<ConvergenceReport> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[1] < w[0]) || seeds.is_empty() {
        return Err(HawkesError::arg("need a non-decreasing list of at least 3 event counts and one seed"));
    }
    let jobs: Vec<(usize, u64)> = n_list.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let run = || -> Result<ConvergenceRun> {
                let stream = simulate_events(spec, n, seed)?;
                let stats = estimate_second_order(&stream, grid)?;
                let models = fit(&stats, &TrainConfig { seed, ..config.clone() })?;
                let fitted = FittedKernel::new(&models, stats.mark_cardinality, grid.horizon)?;
                let report = error_report(&fitted, spec, k, grid.horizon, grid.t_min)?;
                Ok(ConvergenceRun {
                    n_events: n,
                    seed,
                    normalized_delta_2: report.normalized_delta_2,
                    normalized_delta_inf: report.normalized_delta_inf,
                })
            };
            run().map_err(|e| HawkesError::Stage { stage: format!("N={n}, seed={seed}"), source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean_errors = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let chunk = &runs[idx * seeds.len()..(idx + 1) * seeds.len()];
        let c = chunk.len() as f64;
        mean_errors.push((
            n,
            chunk.iter().map(|r| r.normalized_delta_2).sum::<f64>() / c,
            chunk.iter().map(|r| r.normalized_delta_inf).sum::<f64>() / c,
        ));
    }
    let xs: Vec<f64> = mean_errors.iter().map(|e| e.0 as f64).collect();
    let slope_delta_2 = log_log_slope(&xs, &mean_errors.iter().map(|e| e.1).collect::<Vec<_>>())?;
    let slope_delta_inf = log_log_slope(&xs, &mean_errors.iter().map(|e| e.2).collect::<Vec<_>>())?;
    Ok(ConvergenceReport { runs, mean_errors, slope_delta_2, slope_delta_inf })
}

/// Expected-ancestry causality ratios of a fitted or known process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalityReport {
    pub norms: Vec<Vec<f64>>,
    pub branching_ratio: f64,
    /// `S^{ij} = (Λ^j/Λ^i) ‖φ^{ij}‖`, zero on the diagonal.
    pub spillover: Vec<Vec<f64>>,
    /// `L^j = Λ^j Σ_{i≠j} ‖φ^{ij}‖ / Σ_{i≠j} Λ^i`.
    pub leader: Vec<f64>,
    /// `R^i = Σ_{j≠i} Λ^j ‖φ^{ij}‖ / Λ^i`.
    pub receiver: Vec<f64>,
    /// `ν^j = V^j / Σ V`.
    pub participation: Vec<f64>,
    /// `(I - ‖Φ‖) Λ`, absent when the norms are not stationary.
    pub baseline: Option<Vec<f64>>,
}

pub fn causality_report(norms: &NormMatrix, rates: &[f64], volumes: &[f64]) -> Result<CausalityReport> {
    let d = norms.dimension();
    if rates.len() != d || volumes.len() != d {
        return Err(HawkesError::arg("rates and volumes need one entry per component"));
    }
    if rates.iter().any(|r| !(*r > 0.0)) {
        return Err(HawkesError::arg("every component rate must be positive"));
    }
    if volumes.iter().any(|v| !(*v >= 0.0)) {
        return Err(HawkesError::arg("volumes must be non-negative"));
    }
    let n = |i: usize, j: usize| norms.get(i, j);
    let spillover = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 0.0 } else { rates[j] / rates[i] * n(i, j) }).collect())
        .collect();
    let leader = (0..d)
        .map(|j| {
            let others: f64 = (0..d).filter(|&i| i != j).map(|i| rates[i]).sum();
            let out: f64 = (0..d).filter(|&i| i != j).map(|i| n(i, j)).sum();
            if others > 0.0 {
                rates[j] / others * out
            } else {
                0.0
            }
        })
        .collect();
    let receiver = (0..d)
        .map(|i| (0..d).filter(|&j| j != i).map(|j| rates[j] * n(i, j)).sum::<f64>() / rates[i])
        .collect();
    let total_volume: f64 = volumes.iter().sum();
    let participation = if total_volume > 0.0 {
        volumes.iter().map(|v| v / total_volume).collect()
    } else {
        vec![1.0 / d as f64; d]
    };
    let ratio = branching_ratio(norms)?;
    let baseline = if ratio < 1.0 { Some(baseline_from_rates(norms, rates)?) } else { None };
    Ok(CausalityReport {
        norms: norms.values.clone(),
        branching_ratio: ratio,
        spillover,
        leader,
        receiver,
        participation,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelEntry, KernelFamily, MarkFactor};
    use proptest::prelude::*;

    fn exp_spec(alpha: f64) -> KernelSpec {
        KernelSpec::new(
            vec![0.5],
            vec![vec![KernelEntry::new(KernelFamily::Exponential { alpha, beta: 2.0 }, MarkFactor::Constant)]],
            1,
        )
        .unwrap()
    }

    struct Shifted<'a>(&'a KernelSpec, f64);
    impl KernelMatrix for Shifted<'_> {
        fn dimension(&self) -> usize {
            self.0.dimension
        }
        fn mark_cardinality(&self) -> u32 {
            self.0.mark_cardinality
        }
        fn value(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
            self.0.value(i, j, t, m) + self.1
        }
    }

    #[test]
    fn error_examples() {
        let s = exp_spec(1.0);
        let r = error_report(&s, &s, 50, 5.0, 0.0).unwrap();
        assert_eq!((r.delta_2, r.delta_inf, r.normalized_delta_2), (0.0, 0.0, 0.0));
        let r = error_report(&Shifted(&s, 0.3), &s, 50, 5.0, 0.01).unwrap();
        assert!((r.delta_2 - 0.3).abs() < 1e-12 && (r.delta_inf - 0.3).abs() < 1e-12);
        assert!((r.sup_norm - 1.0).abs() < 1e-15);
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.group(|i, j| i == j), (r.normalized_delta_2, r.normalized_delta_inf));
        assert_eq!(r.group(|i, j| i != j), (0.0, 0.0));
        assert!(error_report(&s, &s, 0, 5.0, 0.0).is_err());
    }

    #[test]
    fn two_node_hand_example() {
        // truth 0 plus a tabulated deviation of 1 at t=0 and 3 at t=T
        let zero = KernelSpec::new(vec![0.5], vec![vec![KernelEntry::new(KernelFamily::Zero, MarkFactor::Constant)]], 1).unwrap();
        struct Dev;
        impl KernelMatrix for Dev {
            fn dimension(&self) -> usize {
                1
            }
            fn mark_cardinality(&self) -> u32 {
                1
            }
            fn value(&self, _: usize, _: usize, t: f64, _: u32) -> f64 {
                1.0 + 2.0 * t
            }
        }
        let r = error_report(&Dev, &zero, 1, 1.0, 0.0).unwrap();
        assert!((r.delta_2 - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.delta_inf, 3.0);
    }

    #[test]
    fn causality_hand_example() {
        let norms = NormMatrix::new(vec![vec![0.4, 0.1], vec![0.3, 0.2]]).unwrap();
        let r = causality_report(&norms, &[2.0, 1.0], &[3.0, 1.0]).unwrap();
        assert_eq!(r.spillover, vec![vec![0.0, 0.05], vec![0.6, 0.0]]);
        assert_eq!(r.leader, vec![0.6, 0.05]);
        assert_eq!(r.receiver, vec![0.05, 0.6]);
        assert_eq!(r.participation, vec![0.75, 0.25]);
        let mu = r.baseline.unwrap();
        assert!((mu[0] - (2.0 - 0.8 - 0.1)).abs() < 1e-15 && (mu[1] - (1.0 - 0.6 - 0.2)).abs() < 1e-15);
        assert!(causality_report(&norms, &[2.0, 0.0], &[1.0, 1.0]).unwrap_err().is_argument_error());
    }

    #[test]
    fn one_dimensional_report() {
        let norms = NormMatrix::new(vec![vec![0.7]]).unwrap();
        let r = causality_report(&norms, &[3.0], &[5.0]).unwrap();
        assert_eq!((r.spillover[0][0], r.leader[0], r.receiver[0], r.participation[0]), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn symmetric_inputs_give_symmetric_ratios() {
        let norms = NormMatrix::new(vec![vec![0.2, 0.1, 0.1], vec![0.1, 0.2, 0.1], vec![0.1, 0.1, 0.2]]).unwrap();
        let r = causality_report(&norms, &[1.5; 3], &[1.0; 3]).unwrap();
        for i in 0..3 {
            assert_eq!(r.leader[i], r.leader[0]);
            assert_eq!(r.receiver[i], r.receiver[0]);
            for j in 0..3 {
                assert_eq!(r.spillover[i][j], r.spillover[j][i]);
            }
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1e4, 1e5, 1e6];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn ratios_are_invariant_to_rate_scaling(
            vals in proptest::collection::vec(0.0f64..0.3, 9),
            rates in proptest::collection::vec(0.1f64..5.0, 3),
            vols in proptest::collection::vec(0.0f64..10.0, 3),
            c in prop_oneof![Just(2.0f64), Just(0.5), Just(4.0), Just(0.25)],
        ) {
            let norms = NormMatrix::new(vals.chunks(3).map(|r| r.to_vec()).collect()).unwrap();
            let a = causality_report(&norms, &rates, &vols).unwrap();
            let scaled: Vec<f64> = rates.iter().map(|r| r * c).collect();
            let b = causality_report(&norms, &scaled, &vols).unwrap();
            prop_assert_eq!(&a.spillover, &b.spillover);
            prop_assert_eq!(&a.leader, &b.leader);
            prop_assert_eq!(&a.receiver, &b.receiver);
            let total: f64 = a.participation.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-15);
        }
    }
}
