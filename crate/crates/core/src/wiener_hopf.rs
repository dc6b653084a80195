//! Direct Wiener-Hopf solver on a uniform grid.
//!
//! With nodes `t_q = qδ`, `q = 0..Q-1`, `δ = T/(Q-1)`, row `i` of the kernel
//! solves the dense system
//!
//! ```text
//! G^{ij}(t_p, x) = φ^{ij}(t_p, x) + δ Σ_k Σ_z Σ_q p^k(z) φ^{ik}(t_q, z) K^{kj}(t_p - t_q, x, z)
//! ```
//!
//! for every `(j, x, p)`. The matrix does not depend on `i`, so it is factored
//! once and reused for all rows. Unknowns are ordered `(k, z, q)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{HawkesError, Result};
use crate::kernel::KernelMatrix;
use crate::stats::SecondOrderStats;

/// `K^{kj}(lag, x, z)`; the `lag > 0` branch is also used at `lag = 0`.
fn k_value(stats: &SecondOrderStats, k: usize, j: usize, lag: f64, x: u32, z: u32) -> f64 {
    if lag >= 0.0 {
        stats.interpolate_g(k, j, lag.max(f64::MIN_POSITIVE), x)
    } else {
        stats.rates[k] / stats.rates[j] * stats.interpolate_g(j, k, -lag, z)
    }
}

/// `Ĝ` on the closed interval, using the right limit at `t = 0`.
fn g_value(stats: &SecondOrderStats, i: usize, j: usize, t: f64, m: u32) -> f64 {
    stats.interpolate_g(i, j, t.max(f64::MIN_POSITIVE), m)
}

/// The assembled and factored system for one statistics set.
pub struct WienerHopfSystem {
    stats: SecondOrderStats,
    nodes: Vec<f64>,
    delta: f64,
    matrix: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl WienerHopfSystem {
    pub fn assemble(stats: &SecondOrderStats, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(HawkesError::arg("Wiener-Hopf needs at least 2 nodes"));
        }
        stats.check_complete()?;
        let horizon = stats.grid.horizon;
        let delta = horizon / (q - 1) as f64;
        let nodes: Vec<f64> = (0..q).map(|k| if k == q - 1 { horizon } else { k as f64 * delta }).collect();
        let d = stats.dimension;
        let marks = stats.mark_cardinality as usize;
        let n = d * marks * q;
        let index = |k: usize, z: usize, p: usize| (k * marks + z) * q + p;
        let mut matrix = DMatrix::identity(n, n);
        for j in 0..d {
            for x in 0..marks {
                for (p, &tp) in nodes.iter().enumerate() {
                    let r = index(j, x, p);
                    for k in 0..d {
                        for z in 0..marks {
                            let w = delta * stats.mark_pmfs[k][z];
                            if w == 0.0 {
                                continue;
                            }
                            for (qq, &tq) in nodes.iter().enumerate() {
                                matrix[(r, index(k, z, qq))] +=
                                    w * k_value(stats, k, j, tp - tq, x as u32 + 1, z as u32 + 1);
                            }
                        }
                    }
                }
            }
        }
        let lu = matrix.clone().lu();
        let diag: DVector<f64> = lu.u().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v: &f64| (lo.min(v.abs()), hi.max(v.abs())));
        if !(lo > hi * 1e-14) {
            return Err(HawkesError::Singular { condition: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
        }
        Ok(Self { stats: stats.clone(), nodes, delta, matrix, lu })
    }

    /// Number of unknowns per row, `Q·M·D`.
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `A φ`, i.e. the statistics implied by nodal kernel values.
    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.size() {
            return Err(HawkesError::arg(format!("expected {} nodal values, got {}", self.size(), phi.len())));
        }
        Ok((&self.matrix * DVector::from_column_slice(phi)).iter().copied().collect())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.size() {
            return Err(HawkesError::arg(format!("expected {} right-hand values, got {}", self.size(), rhs.len())));
        }
        let sol = self
            .lu
            .solve(&DVector::from_column_slice(rhs))
            .ok_or(HawkesError::Singular { condition: f64::INFINITY })?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(HawkesError::Numerical("Wiener-Hopf solution is not finite".into()));
        }
        Ok(sol.iter().copied().collect())
    }

    /// Right-hand side `Ĝ^{ij}(t_p, x)` of row `i`, ordered `(j, x, p)`.
    pub fn rhs(&self, i: usize) -> Vec<f64> {
        let st = &self.stats;
        let mut out = Vec::with_capacity(self.size());
        for j in 0..st.dimension {
            for x in 1..=st.mark_cardinality {
                for &t in &self.nodes {
                    out.push(g_value(st, i, j, t, x));
                }
            }
        }
        out
    }
}

const WH_FORMAT: &str = "neural-hawkes-wh";

/// Nodal kernel values of every row plus what reconstruction needs.
pub struct WhSolution {
    stats: SecondOrderStats,
    nodes: Vec<f64>,
    delta: f64,
    /// Per row, ordered `(k, z, q)`.
    values: Vec<Vec<f64>>,
}

impl WhSolution {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn stats(&self) -> &SecondOrderStats {
        &self.stats
    }

    /// Nodal values without the statistics; see [`WhSolution::from_json`].
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": WH_FORMAT,
            "version": 1,
            "dimension": self.stats.dimension,
            "mark_cardinality": self.stats.mark_cardinality,
            "nodes": self.nodes,
            "delta": self.delta,
            "values": self.values,
        })
    }

    /// Rebuilds a solution from [`WhSolution::to_json`] output and the
    /// statistics it was solved from.
    pub fn from_json(v: &serde_json::Value, stats: &SecondOrderStats) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Stored {
            format: String,
            version: u32,
            dimension: usize,
            mark_cardinality: u32,
            nodes: Vec<f64>,
            delta: f64,
            values: Vec<Vec<f64>>,
        }
        let s: Stored = serde_json::from_value(v.clone())?;
        if s.format != WH_FORMAT || s.version != 1 {
            return Err(HawkesError::arg("not a Wiener-Hopf solution file"));
        }
        if s.dimension != stats.dimension || s.mark_cardinality != stats.mark_cardinality {
            return Err(HawkesError::arg("solution and statistics have different shapes"));
        }
        let per_row = stats.dimension * stats.mark_cardinality as usize * s.nodes.len();
        if s.values.len() != stats.dimension || s.values.iter().any(|r| r.len() != per_row) || !(s.delta > 0.0) {
            return Err(HawkesError::arg("malformed Wiener-Hopf solution"));
        }
        Ok(Self { stats: stats.clone(), nodes: s.nodes, delta: s.delta, values: s.values })
    }

    /// Solved `φ^{ij}(t_q, m)`.
    pub fn nodal(&self, i: usize, j: usize, q: usize, m: u32) -> f64 {
        let marks = self.stats.mark_cardinality as usize;
        self.values[i][(j * marks + (m - 1) as usize) * self.nodes.len() + q]
    }

    /// `φ̂^{ij}(t, m) = Ĝ^{ij}(t, m) - δ Σ_k Σ_z Σ_q p^k(z) φ_q^{ik}(z) K^{kj}(t - t_q, m, z)`.
    pub fn reconstruct(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
        let st = &self.stats;
        let mut acc = 0.0;
        for k in 0..st.dimension {
            for z in 1..=st.mark_cardinality {
                let p = st.mark_pmfs[k][(z - 1) as usize];
                if p == 0.0 {
                    continue;
                }
                for (q, &tq) in self.nodes.iter().enumerate() {
                    acc += p * self.nodal(i, k, q, z) * k_value(st, k, j, t - tq, m, z);
                }
            }
        }
        g_value(st, i, j, t, m) - self.delta * acc
    }
}

impl KernelMatrix for WhSolution {
    fn dimension(&self) -> usize {
        self.stats.dimension
    }

    fn mark_cardinality(&self) -> u32 {
        self.stats.mark_cardinality
    }

    fn value(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
        if t > self.stats.grid.horizon {
            0.0
        } else {
            self.reconstruct(i, j, t, m)
        }
    }
}

/// Solves every row of the characterization on `q` uniform nodes.
pub fn wh_solve(stats: &SecondOrderStats, q: usize) -> Result<WhSolution> {
    let system = WienerHopfSystem::assemble(stats, q)?;
    let values = (0..stats.dimension)
        .into_par_iter()
        .map(|i| system.solve(&system.rhs(i)).map_err(|e| HawkesError::Row { row: i + 1, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(WhSolution { stats: stats.clone(), nodes: system.nodes.clone(), delta: system.delta, values })
}

/// `φ̂^{ij}(t, m)` from a solution; `t` must lie in `[0, T]`.
pub fn wh_reconstruct(solution: &WhSolution, i: usize, j: usize, t: f64, m: u32) -> Result<f64> {
    let st = &solution.stats;
    if !(0.0..=st.grid.horizon).contains(&t) {
        return Err(HawkesError::arg(format!("reconstruction time {t} outside [0, {}]", st.grid.horizon)));
    }
    if i >= st.dimension || j >= st.dimension || m == 0 || m > st.mark_cardinality {
        return Err(HawkesError::arg("kernel index or mark out of range"));
    }
    Ok(solution.reconstruct(i, j, t, m))
}

/// Node-to-node total variation `Σ_q |φ_{q+1} - φ_q|` of one entry.
pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::uniform_pmf;
    use crate::rng;
    use crate::stats::StatGrid;
    use proptest::prelude::*;
    use rand::Rng;

    fn synthetic(d: usize, marks: u32, seed: u64) -> SecondOrderStats {
        let grid = StatGrid::build(0.1, 10, 30, 3.0).unwrap();
        let mut r = rng::stream(seed, 0);
        let scales: Vec<f64> = (0..d * d * marks as usize).map(|_| r.gen_range(0.05..0.4)).collect();
        let centers = grid.centers();
        let mut values = Vec::new();
        for i in 0..d {
            for j in 0..d {
                for &c in &centers {
                    for m in 0..marks as usize {
                        values.push(scales[(i * d + j) * marks as usize + m] * (-1.5 * c).exp());
                    }
                }
            }
        }
        let rates = (0..d).map(|k| 1.0 + k as f64).collect();
        SecondOrderStats::from_parts(rates, vec![uniform_pmf(marks); d], grid, values, vec![50; d * marks as usize]).unwrap()
    }

    #[test]
    fn zero_statistics_give_zero_kernel() {
        let s = synthetic(2, 1, 0).scaled(0.0);
        let sol = wh_solve(&s, 20).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for q in 0..20 {
                    assert_eq!(sol.nodal(i, j, q, 1), 0.0);
                }
                assert_eq!(wh_reconstruct(&sol, i, j, 1.3, 1).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn reconstruction_at_nodes_matches_solution() {
        let s = synthetic(2, 2, 1);
        let sol = wh_solve(&s, 40).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for q in [1usize, 10, 39] {
                    let t = sol.nodes()[q];
                    let r = wh_reconstruct(&sol, i, j, t, 2).unwrap();
                    assert!((r - sol.nodal(i, j, q, 2)).abs() < 1e-12, "{r} vs {}", sol.nodal(i, j, q, 2));
                }
            }
        }
        assert!(wh_reconstruct(&sol, 0, 0, 3.5, 1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = synthetic(2, 2, 5);
        let sol = wh_solve(&s, 15).unwrap();
        let back = WhSolution::from_json(&sol.to_json(), &s).unwrap();
        assert_eq!(back.values, sol.values);
        assert_eq!(back.reconstruct(1, 0, 0.7, 2), sol.reconstruct(1, 0, 0.7, 2));
        assert!(WhSolution::from_json(&sol.to_json(), &synthetic(1, 2, 5)).is_err());
    }

    #[test]
    fn refinement_reduces_error() {
        // exact statistics of a 1-dim exponential kernel α=1, β=2 on a fine grid
        let grid = StatGrid::build(0.01, 10, 400, 10.0).unwrap();
        let g = grid.centers().iter().map(|t| 1.5 * (-t).exp()).collect();
        let s = SecondOrderStats::from_parts(vec![1.0], vec![vec![1.0]], grid, g, vec![1]).unwrap();
        let mut last = f64::INFINITY;
        for q in [50, 100, 200] {
            let sol = wh_solve(&s, q).unwrap();
            let err = (0..=200)
                .map(|k| {
                    let t = 5.0 * k as f64 / 200.0;
                    (sol.reconstruct(0, 0, t, 1) - (-2.0 * t).exp()).abs()
                })
                .fold(0.0, f64::max);
            assert!(err < last, "Q={q}: {err} !< {last}");
            last = err;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn right_hand_side_is_linear() {
        let s = synthetic(2, 2, 3);
        let sys = WienerHopfSystem::assemble(&s, 15).unwrap();
        let rhs = sys.rhs(1);
        let base = sys.solve(&rhs).unwrap();
        let scaled = sys.solve(&rhs.iter().map(|v| 3.5 * v).collect::<Vec<_>>()).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((3.5 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn singular_system_is_reported() {
        // with G ≡ g and δ = 1 the matrix is [[1+g, g], [g, 1+g]], singular at g = -1/2
        let grid = StatGrid::build(0.5, 1, 1, 1.0).unwrap();
        let nb = grid.n_bins();
        let s = SecondOrderStats::from_parts(vec![1.0], vec![vec![1.0]], grid, vec![-0.5; nb], vec![1]).unwrap();
        let r = WienerHopfSystem::assemble(&s, 2);
        assert!(matches!(r, Err(HawkesError::Singular { .. })), "{:?}", r.err());
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(total_variation(&[1.0, -1.0, 2.0]), 5.0);
        assert_eq!(total_variation(&[3.0]), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn forward_then_solve_round_trip(seed in 0u64..500, d in 1usize..=3, marks in 1u32..=3, q in 2usize..12) {
            let s = synthetic(d, marks, seed);
            let sys = WienerHopfSystem::assemble(&s, q).unwrap();
            let mut r = rng::stream(seed, 1);
            let phi: Vec<f64> = (0..sys.size()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let back = sys.solve(&sys.apply(&phi).unwrap()).unwrap();
            for (a, b) in phi.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
