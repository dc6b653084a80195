//! Moment-based neural estimation of the kernel matrix.
//!
//! Row `i` of the kernel matrix is represented by one network `u^{i·}` with
//! `D` outputs. The network is trained so that, at sampled `(t_n, x_n)`,
//!
//! ```text
//! ε_n^{ij} = Ĝ^{ij}(t_n, x_n) - u^{ij}(t_n, x_n)
//!            - Σ_k Σ_z p^k(z) Σ_q w_q u^{ik}(s_q, z) H^{kj}(t_n - s_q, x_n, z)
//! ```
//!
//! vanishes. The integral term is linear in the network outputs at the fixed
//! quadrature nodes, so each batch needs one forward and one reverse pass over
//! `Q·M` node inputs plus the batch points, whatever the batch size.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgm::{DgmParams, InputScaler};
use crate::error::{HawkesError, Result};
use crate::kernel::{KernelEntry, KernelFamily, KernelMatrix, KernelSpec, MarkFactor, TabulatedKernel};
use crate::norms::{baseline_from_rates, branching_ratio, l1_norms, NormMatrix};
use crate::quadrature::{QuadratureGrid, QuadratureRule};
use crate::rng::{self, HawkesRng};
use crate::simulate::{simulate, SimConfig};
use crate::stats::{estimate_second_order, SecondOrderStats};

const ROW_FORMAT: &str = "neural-hawkes-row";
const ROW_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `θ ← θ - γ_e ∇L`.
    Sgd,
    /// Adaptive moments with the same step schedule.
    #[default]
    Adam,
}

/// Training hyperparameters for one row network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub neurons: usize,
    pub dgm_cells: usize,
    pub learning_rate: f64,
    /// Total quadrature nodes, including the origin node when enabled.
    pub quadrature_nodes: usize,
    pub batch_size: usize,
    pub training_size: usize,
    pub validation_size: usize,
    pub epochs: usize,
    /// Fraction of training times drawn below `short_threshold`.
    pub short_fraction: f64,
    /// Defaults to [`crate::stats::StatGrid::short_scale`] of the statistics grid.
    pub short_threshold: Option<f64>,
    /// Temporal-weight strength; weights live in `(e^{-ε}, 1]`.
    pub temporal_strength: f64,
    /// Weight of the `u(T, x) = 0` penalty, off at 0.
    pub continuity_weight: f64,
    pub magnitude_weighting: bool,
    pub optimizer: Optimizer,
    /// Draw batch membership at random each epoch instead of taking
    /// consecutive runs of the time-sorted set.
    pub shuffle_batches: bool,
    pub quadrature_rule: QuadratureRule,
    /// Close the log grid with a trapezoid panel down to `t = 0`.
    pub quadrature_origin: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            neurons: 64,
            dgm_cells: 1,
            learning_rate: 1e-3,
            quadrature_nodes: 250,
            batch_size: 8,
            training_size: 1024,
            validation_size: 128,
            epochs: 1000,
            short_fraction: 0.3,
            short_threshold: None,
            temporal_strength: 5.0,
            continuity_weight: 0.0,
            magnitude_weighting: true,
            optimizer: Optimizer::Adam,
            shuffle_batches: true,
            quadrature_rule: QuadratureRule::LogTrapezoid,
            quadrature_origin: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let min_nodes = if self.quadrature_origin { 3 } else { 2 };
        if self.neurons == 0 || self.batch_size == 0 || self.training_size == 0 || self.validation_size == 0 {
            return Err(HawkesError::arg("neurons, batch, training and validation sizes must be >= 1"));
        }
        if self.training_size % self.batch_size != 0 {
            return Err(HawkesError::arg(format!(
                "training size {} is not a multiple of the batch size {}",
                self.training_size, self.batch_size
            )));
        }
        if self.quadrature_nodes < min_nodes {
            return Err(HawkesError::arg(format!("need at least {min_nodes} quadrature nodes")));
        }
        if !(0.0..1.0).contains(&self.short_fraction) {
            return Err(HawkesError::arg("short-time fraction must lie in [0, 1)"));
        }
        if !(self.temporal_strength >= 0.0) || !(self.continuity_weight >= 0.0) {
            return Err(HawkesError::arg("temporal strength and continuity weight must be >= 0"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(HawkesError::arg("learning rate must be positive"));
        }
        if let Some(tau) = self.short_threshold {
            if !(tau > 0.0) {
                return Err(HawkesError::arg("short-time threshold must be positive"));
            }
        }
        Ok(())
    }

    /// `γ_e = γ₀ · 100^{-e/E}` for `e = 1..=E`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * 100f64.powf(-(epoch as f64) / self.epochs.max(1) as f64)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

/// Quadrature used inside the characterization operator: a log grid from the
/// statistics grid's `t_min` to `T`, optionally closed down to 0.
pub fn solver_quadrature(stats: &SecondOrderStats, config: &TrainConfig) -> Result<QuadratureGrid> {
    let (t_min, horizon) = (stats.grid.t_min, stats.grid.horizon);
    if config.quadrature_origin {
        Ok(QuadratureGrid::log_grid(config.quadrature_nodes - 1, t_min, horizon, config.quadrature_rule)?.with_origin())
    } else {
        QuadratureGrid::log_grid(config.quadrature_nodes, t_min, horizon, config.quadrature_rule)
    }
}

/// Network input scaling used for statistics `stats`.
pub fn default_scaler(stats: &SecondOrderStats) -> Result<InputScaler> {
    InputScaler::for_marks(stats.grid.t_min / 10.0, stats.mark_cardinality)
}

/// `⌊S·N⌋` times uniform on `(0, τ)`, the rest uniform on `(τ, T)`, marks
/// uniform on `1..=M`; sorted by time.
pub fn sample_training_set(
    n: usize,
    short_fraction: f64,
    tau: f64,
    horizon: f64,
    marks: u32,
    rng: &mut HawkesRng,
) -> Result<Vec<(f64, u32)>> {
    if !(tau > 0.0 && tau < horizon) {
        return Err(HawkesError::arg(format!("need 0 < τ < T, got τ={tau}, T={horizon}")));
    }
    if !(0.0..1.0).contains(&short_fraction) || marks == 0 {
        return Err(HawkesError::arg("short-time fraction must lie in [0, 1) and M >= 1"));
    }
    let n_short = (short_fraction * n as f64).floor() as usize;
    let mut draw = |lo: f64, hi: f64| loop {
        let t = rng.gen_range(lo..hi);
        if t > lo {
            return t;
        }
    };
    let mut pts: Vec<(f64, u32)> = (0..n)
        .map(|k| {
            let t = if k < n_short { draw(0.0, tau) } else { draw(tau, horizon) };
            (t, 0)
        })
        .collect();
    for p in pts.iter_mut() {
        p.1 = rng.gen_range(1..=marks);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts)
}

/// Causal weights from time-sorted residual rows: `ω_1 = 1`,
/// `ω_n = exp(-ε S_{n-1} / S_N)` with `S` the per-column cumulative squared residual.
pub fn temporal_weights(residuals: &[Vec<f64>], strength: f64) -> Vec<Vec<f64>> {
    let n = residuals.len();
    let d = residuals.first().map_or(0, |r| r.len());
    let mut out = vec![vec![1.0; d]; n];
    for j in 0..d {
        let total: f64 = residuals.iter().map(|r| r[j] * r[j]).sum();
        if !(total > 0.0) {
            continue;
        }
        let mut cum = 0.0;
        for k in 1..n {
            cum += residuals[k - 1][j] * residuals[k - 1][j];
            out[k][j] = (-strength * cum / total).exp();
        }
    }
    out
}

/// Harmonic balancing `ζ_ij(x)` of the `|G|` time integrals, indexed `[i][j][x-1]`.
pub fn magnitude_weights(stats: &SecondOrderStats, quad: &QuadratureGrid) -> Result<Vec<Vec<Vec<f64>>>> {
    let d = stats.dimension;
    let marks = stats.mark_cardinality;
    let mut inv = vec![vec![vec![0.0; marks as usize]; d]; d];
    for i in 0..d {
        for j in 0..d {
            for m in 1..=marks {
                let mass = quad.integrate(|s| stats.interpolate_g(i, j, s.max(f64::MIN_POSITIVE), m).abs());
                if !(mass > 0.0) {
                    return Err(HawkesError::Degenerate(format!(
                        "G^({},{}) for mark {m} integrates to zero; magnitude weights undefined",
                        i + 1,
                        j + 1
                    )));
                }
                inv[i][j][(m - 1) as usize] = 1.0 / mass;
            }
        }
    }
    for m in 0..marks as usize {
        let total: f64 = inv.iter().flatten().map(|v| v[m]).sum();
        inv.iter_mut().flatten().for_each(|v| v[m] /= total);
    }
    Ok(inv)
}

/// The discretised characterization operator for one statistics set.
pub struct CharacterizationOperator<'a> {
    stats: &'a SecondOrderStats,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> CharacterizationOperator<'a> {
    pub fn new(stats: &'a SecondOrderStats, quad: &QuadratureGrid) -> Self {
        Self { stats, nodes: quad.nodes().to_vec(), weights: quad.weights().to_vec() }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Length of the per-point coefficient block, `D·D·M·Q`.
    pub fn block_len(&self) -> usize {
        let d = self.stats.dimension;
        d * d * self.stats.mark_cardinality as usize * self.nodes.len()
    }

    /// `c[j][k][z][q] = p^k(z) w_q H^{kj}(t - s_q, x, z)`.
    pub fn coefficients(&self, t: f64, x: u32, out: &mut [f64]) {
        let st = self.stats;
        let d = st.dimension;
        let marks = st.mark_cardinality as usize;
        let nq = self.nodes.len();
        for j in 0..d {
            for k in 0..d {
                let ratio = st.rates[k] / st.rates[j];
                for (q, (&s, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
                    let lag = t - s;
                    let pos = if lag > 0.0 { st.interpolate_g(k, j, lag, x) } else { 0.0 };
                    for z in 0..marks {
                        let h = if lag > 0.0 {
                            pos
                        } else if lag < 0.0 {
                            ratio * st.interpolate_g(j, k, -lag, z as u32 + 1)
                        } else {
                            0.0
                        };
                        out[((j * d + k) * marks + z) * nq + q] = st.mark_pmfs[k][z] * w * h;
                    }
                }
            }
        }
    }

    /// `Σ_k Σ_z Σ_q c[j][k][z][q] u^{k}(s_q, z)` for every `j`, with the node
    /// outputs laid out as `node_out[(k, z·Q + q)]`.
    fn integral(&self, coef: &[f64], node_out: &DMatrix<f64>) -> Vec<f64> {
        let d = self.stats.dimension;
        let mq = node_out.ncols();
        (0..d)
            .map(|j| {
                let mut acc = 0.0;
                for k in 0..d {
                    let block = &coef[(j * d + k) * mq..(j * d + k + 1) * mq];
                    for (c, col) in block.iter().zip(0..mq) {
                        acc += c * node_out[(k, col)];
                    }
                }
                acc
            })
            .collect()
    }

    /// Right-hand side of the characterization for row `i` of `kernel`:
    /// `φ^{ij}(t,x) + Σ_k ∫∫ φ^{ik}(s,z) H^{kj}(t-s,x,z) p^k(z)`.
    pub fn apply<K: KernelMatrix + ?Sized>(&self, kernel: &K, i: usize, t: f64, x: u32) -> Vec<f64> {
        let node_out = self.node_values(|s, z| (0..self.stats.dimension).map(|k| kernel.value(i, k, s, z)).collect());
        let mut coef = vec![0.0; self.block_len()];
        self.coefficients(t, x, &mut coef);
        let integral = self.integral(&coef, &node_out);
        (0..self.stats.dimension).map(|j| kernel.value(i, j, t, x) + integral[j]).collect()
    }

    fn node_values(&self, mut u: impl FnMut(f64, u32) -> Vec<f64>) -> DMatrix<f64> {
        let d = self.stats.dimension;
        let marks = self.stats.mark_cardinality;
        let nq = self.nodes.len();
        let mut out = DMatrix::zeros(d, nq * marks as usize);
        for z in 1..=marks {
            for (q, &s) in self.nodes.iter().enumerate() {
                let v = u(s, z);
                for k in 0..d {
                    out[(k, (z - 1) as usize * nq + q)] = v[k];
                }
            }
        }
        out
    }
}

/// Residuals `ε_n^{ij}` of row `i` for an arbitrary kernel row `u(t, m) -> D values`.
pub fn residuals_with(
    row: usize,
    stats: &SecondOrderStats,
    quad: &QuadratureGrid,
    points: &[(f64, u32)],
    mut u: impl FnMut(f64, u32) -> Vec<f64>,
) -> Result<Vec<Vec<f64>>> {
    stats.check_complete()?;
    if row >= stats.dimension {
        return Err(HawkesError::arg(format!("row {row} out of range")));
    }
    let op = CharacterizationOperator::new(stats, quad);
    let node_out = op.node_values(&mut u);
    let mut coef = vec![0.0; op.block_len()];
    Ok(points
        .iter()
        .map(|&(t, x)| {
            op.coefficients(t, x, &mut coef);
            let integral = op.integral(&coef, &node_out);
            let direct = u(t, x);
            (0..stats.dimension)
                .map(|j| stats.interpolate_g(row, j, t, x) - direct[j] - integral[j])
                .collect()
        })
        .collect())
}

/// Residuals of row `i` for a network.
pub fn residuals(
    row: usize,
    params: &DgmParams,
    scaler: &InputScaler,
    stats: &SecondOrderStats,
    quad: &QuadratureGrid,
    points: &[(f64, u32)],
) -> Result<Vec<Vec<f64>>> {
    residuals_with(row, stats, quad, points, |t, m| network_eval(params, scaler, t, m))
}

fn network_eval(params: &DgmParams, scaler: &InputScaler, t: f64, m: u32) -> Vec<f64> {
    let x = scaler.scale(t, m);
    params.forward_scaled(&DMatrix::from_column_slice(2, 1, &x)).column(0).iter().copied().collect()
}

/// A trained row network with its training record.
#[derive(Clone, Debug, PartialEq)]
pub struct RowModel {
    pub row: usize,
    pub params: DgmParams,
    pub scaler: InputScaler,
    pub config: TrainConfig,
    /// Unweighted validation loss after each epoch.
    pub history: Vec<f64>,
}

impl RowModel {
    /// `u^{i·}(t, m)`; times below the scaler floor (including 0) are clamped.
    pub fn eval(&self, t: f64, m: u32) -> Vec<f64> {
        network_eval(&self.params, &self.scaler, t, m)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": ROW_FORMAT,
            "version": ROW_VERSION,
            "row": self.row + 1,
            "config": self.config,
            "history": self.history,
            "network": self.params.to_json(&self.scaler),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        if v.get("format").and_then(|f| f.as_str()) != Some(ROW_FORMAT) {
            return Err(HawkesError::arg("not a row model file"));
        }
        if v.get("version").and_then(|x| x.as_u64()) != Some(ROW_VERSION as u64) {
            return Err(HawkesError::arg("unsupported row model version"));
        }
        let row = v.get("row").and_then(|x| x.as_u64()).filter(|&r| r >= 1).ok_or_else(|| HawkesError::arg("missing row"))?;
        let config: TrainConfig = serde_json::from_value(v.get("config").cloned().unwrap_or_default())?;
        let history: Vec<f64> = serde_json::from_value(v.get("history").cloned().unwrap_or_default())?;
        let (params, scaler) = DgmParams::from_json(v.get("network").ok_or_else(|| HawkesError::arg("missing network"))?)?;
        Ok(Self { row: row as usize - 1, params, scaler, config, history })
    }
}

/// Fitted rows viewed as a kernel matrix on `[0, T]`, zero beyond `T`.
pub struct FittedKernel<'a> {
    models: &'a [RowModel],
    marks: u32,
    horizon: f64,
}

impl<'a> FittedKernel<'a> {
    pub fn new(models: &'a [RowModel], marks: u32, horizon: f64) -> Result<Self> {
        check_models(models)?;
        Ok(Self { models, marks, horizon })
    }
}

impl KernelMatrix for FittedKernel<'_> {
    fn dimension(&self) -> usize {
        self.models.len()
    }

    fn mark_cardinality(&self) -> u32 {
        self.marks
    }

    fn value(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
        if t > self.horizon {
            0.0
        } else {
            self.models[i].eval(t, m)[j]
        }
    }
}

fn check_models(models: &[RowModel]) -> Result<()> {
    let d = models.len();
    if d == 0 {
        return Err(HawkesError::arg("no row models"));
    }
    for (i, m) in models.iter().enumerate() {
        if m.row != i || m.params.outputs() != d {
            return Err(HawkesError::arg(format!("row models must be rows 1..={d} in order, each with {d} outputs")));
        }
    }
    Ok(())
}

/// Per-row training state shared by the epoch loop.
struct RowProblem<'a> {
    row: usize,
    d: usize,
    op: CharacterizationOperator<'a>,
    scaler: InputScaler,
    node_inputs: DMatrix<f64>,
    /// `ζ_{row, j}(x)` as `[j][x-1]`, or all ones.
    zeta: Vec<Vec<f64>>,
    continuity_inputs: DMatrix<f64>,
    continuity_weight: f64,
}

/// Points of one training or validation set with their precomputed terms.
struct PointSet {
    points: Vec<(f64, u32)>,
    inputs: DMatrix<f64>,
    targets: Vec<Vec<f64>>,
    coef: Vec<f64>,
}

impl<'a> RowProblem<'a> {
    fn new(row: usize, stats: &'a SecondOrderStats, quad: &QuadratureGrid, config: &TrainConfig) -> Result<Self> {
        let d = stats.dimension;
        let marks = stats.mark_cardinality as usize;
        let scaler = default_scaler(stats)?;
        let op = CharacterizationOperator::new(stats, quad);
        let nq = op.nodes.len();
        let mut node_inputs = DMatrix::zeros(2, nq * marks);
        for z in 0..marks {
            for (q, &s) in op.nodes.iter().enumerate() {
                let x = scaler.scale(s, z as u32 + 1);
                node_inputs[(0, z * nq + q)] = x[0];
                node_inputs[(1, z * nq + q)] = x[1];
            }
        }
        let zeta = if config.magnitude_weighting {
            magnitude_weights(stats, quad)?.swap_remove(row)
        } else {
            vec![vec![1.0; marks]; d]
        };
        let (continuity_inputs, continuity_weight) = if config.continuity_weight > 0.0 {
            let mut c = DMatrix::zeros(2, marks);
            for z in 0..marks {
                let x = scaler.scale(stats.grid.horizon, z as u32 + 1);
                c[(0, z)] = x[0];
                c[(1, z)] = x[1];
            }
            (c, config.continuity_weight)
        } else {
            (DMatrix::zeros(2, 0), 0.0)
        };
        Ok(Self { row, d, op, scaler, node_inputs, zeta, continuity_inputs, continuity_weight })
    }

    fn prepare(&self, points: Vec<(f64, u32)>) -> PointSet {
        let n = points.len();
        let bl = self.op.block_len();
        let mut inputs = DMatrix::zeros(2, n);
        let mut coef = vec![0.0; n * bl];
        let mut targets = Vec::with_capacity(n);
        for (p, &(t, x)) in points.iter().enumerate() {
            let s = self.scaler.scale(t, x);
            inputs[(0, p)] = s[0];
            inputs[(1, p)] = s[1];
            self.op.coefficients(t, x, &mut coef[p * bl..(p + 1) * bl]);
            targets.push((0..self.d).map(|j| self.op.stats.interpolate_g(self.row, j, t, x)).collect());
        }
        PointSet { points, inputs, targets, coef }
    }

    fn residual(&self, set: &PointSet, p: usize, point_out: &[f64], node_out: &DMatrix<f64>) -> Vec<f64> {
        let bl = self.op.block_len();
        let integral = self.op.integral(&set.coef[p * bl..(p + 1) * bl], node_out);
        (0..self.d).map(|j| set.targets[p][j] - point_out[j] - integral[j]).collect()
    }

    fn all_residuals(&self, params: &DgmParams, set: &PointSet) -> Vec<Vec<f64>> {
        let node_out = params.forward_scaled(&self.node_inputs);
        let out = params.forward_scaled(&set.inputs);
        (0..set.points.len())
            .map(|p| {
                let col: Vec<f64> = out.column(p).iter().copied().collect();
                self.residual(set, p, &col, &node_out)
            })
            .collect()
    }

    /// Loss `(1/B) Σ_n Σ_j w_nj ε_nj² + ω_c Σ_x u(T,x)²` over `batch` and its gradient.
    fn batch_step(&self, params: &DgmParams, set: &PointSet, batch: &[usize], weights: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let nm = self.node_inputs.ncols();
        let b = batch.len();
        let nc = self.continuity_inputs.ncols();
        let mut x = DMatrix::zeros(2, nm + b + nc);
        x.columns_mut(0, nm).copy_from(&self.node_inputs);
        for (col, &p) in batch.iter().enumerate() {
            x.set_column(nm + col, &set.inputs.column(p));
        }
        if nc > 0 {
            x.columns_mut(nm + b, nc).copy_from(&self.continuity_inputs);
        }
        let (out, cache) = params.forward_for_gradient(&x);
        let node_out = out.columns(0, nm).into_owned();
        let bl = self.op.block_len();
        let scale = 2.0 / b as f64;
        let mut coef = DMatrix::zeros(self.d, x.ncols());
        let mut loss = 0.0;
        for (col, &p) in batch.iter().enumerate() {
            let point_out: Vec<f64> = out.column(nm + col).iter().copied().collect();
            let eps = self.residual(set, p, &point_out, &node_out);
            let block = &set.coef[p * bl..(p + 1) * bl];
            for j in 0..self.d {
                let w = weights[p][j];
                loss += w * eps[j] * eps[j] / b as f64;
                // dε/du(t_n) = -1, dε/du(s_q) = -c
                let a = -scale * w * eps[j];
                coef[(j, nm + col)] += a;
                for k in 0..self.d {
                    let row = &block[(j * self.d + k) * nm..(j * self.d + k + 1) * nm];
                    for (c, v) in row.iter().enumerate() {
                        coef[(k, c)] += a * v;
                    }
                }
            }
        }
        for c in 0..nc {
            for k in 0..self.d {
                let u = out[(k, nm + b + c)];
                loss += self.continuity_weight * u * u;
                coef[(k, nm + b + c)] = 2.0 * self.continuity_weight * u;
            }
        }
        let mut grad = vec![0.0; params.len()];
        params.backward_from(&x, &cache, &coef, &mut grad);
        (loss, grad)
    }

    fn loss_weights(&self, set: &PointSet, omega: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        omega
            .into_iter()
            .zip(&set.points)
            .map(|(w, &(_, x))| w.iter().enumerate().map(|(j, o)| o * self.zeta[j][(x - 1) as usize]).collect())
            .collect()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for k in 0..params.len() {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * grad[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains the network of row `row`.
pub fn train_row(row: usize, stats: &SecondOrderStats, config: &TrainConfig) -> Result<RowModel> {
    config.validate()?;
    stats.check_complete()?;
    if row >= stats.dimension {
        return Err(HawkesError::arg(format!("row {row} out of range for D={}", stats.dimension)));
    }
    let horizon = stats.grid.horizon;
    let tau = config.short_threshold.unwrap_or(stats.grid.short_scale());
    if !(tau < horizon) {
        return Err(HawkesError::arg(format!("short-time threshold {tau} must be below T={horizon}")));
    }
    let quad = solver_quadrature(stats, config)?;
    let problem = RowProblem::new(row, stats, &quad, config)?;
    let mut params = DgmParams::init(config.neurons, config.dgm_cells, stats.dimension, &mut rng::row_init(config.seed, row))?;
    let mut sampler = rng::row_samples(config.seed, row);
    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], step: 0 };
    let mut history = Vec::with_capacity(config.epochs);
    let marks = stats.mark_cardinality;

    for epoch in 1..=config.epochs {
        let train = sample_training_set(config.training_size, config.short_fraction, tau, horizon, marks, &mut sampler)?;
        let valid = sample_training_set(config.validation_size, config.short_fraction, tau, horizon, marks, &mut sampler)?;
        let train = problem.prepare(train);
        let valid = problem.prepare(valid);

        let eps = problem.all_residuals(&params, &train);
        if eps.iter().flatten().any(|e| !e.is_finite()) {
            return Err(HawkesError::Divergence { row, epoch });
        }
        let weights = problem.loss_weights(&train, temporal_weights(&eps, config.temporal_strength));

        let lr = config.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..config.training_size).collect();
        if config.shuffle_batches {
            order.shuffle(&mut sampler);
        }
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = problem.batch_step(&params, &train, batch, &weights);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(HawkesError::Divergence { row, epoch });
            }
            match config.optimizer {
                Optimizer::Sgd => params.data.iter_mut().zip(&grad).for_each(|(p, g)| *p -= lr * g),
                Optimizer::Adam => adam.update(&mut params.data, &grad, lr),
            }
        }

        let val: f64 = problem.all_residuals(&params, &valid).iter().flatten().map(|e| e * e).sum();
        if !val.is_finite() {
            return Err(HawkesError::Divergence { row, epoch });
        }
        log::debug!("row {} epoch {epoch}: validation loss {val:.6e}", row + 1);
        history.push(val);
    }
    Ok(RowModel { row, params, scaler: problem.scaler, config: config.clone(), history })
}

/// Trains every row; rows run in parallel and do not share random streams.
pub fn fit(stats: &SecondOrderStats, config: &TrainConfig) -> Result<Vec<RowModel>> {
    config.validate()?;
    stats.check_complete()?;
    (0..stats.dimension)
        .into_par_iter()
        .map(|i| train_row(i, stats, config).map_err(|e| HawkesError::Row { row: i + 1, source: Box::new(e) }))
        .collect()
}

/// `D×D` tabulated kernel entries sampled from the models at `times`.
pub fn tabulate(models: &[RowModel], times: &[f64], marks: u32) -> Result<Vec<Vec<KernelEntry>>> {
    check_models(models)?;
    let d = models.len();
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(HawkesError::arg("tabulation grid must be non-empty, non-negative and increasing"));
    }
    // values[i][j][m-1][k]
    let mut values = vec![vec![vec![vec![0.0; times.len()]; marks as usize]; d]; d];
    for (i, model) in models.iter().enumerate() {
        for m in 1..=marks {
            for (k, &t) in times.iter().enumerate() {
                for (j, v) in model.eval(t, m).into_iter().enumerate() {
                    values[i][j][(m - 1) as usize][k] = v;
                }
            }
        }
    }
    values
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|cols| {
                    Ok(KernelEntry::new(KernelFamily::Tabulated(TabulatedKernel::new(times.to_vec(), cols)?), MarkFactor::None))
                })
                .collect()
        })
        .collect()
}

/// Default tabulation grid: `n` geometric nodes from the scaler floor to `T`.
pub fn default_table_times(stats: &SecondOrderStats, n: usize) -> Result<Vec<f64>> {
    let floor = default_scaler(stats)?.t_floor;
    Ok(QuadratureGrid::log_grid(n.max(2), floor, stats.grid.horizon, QuadratureRule::Trapezoid)?.nodes().to_vec())
}

/// Signed norms `‖φ̂^{ij}‖` through the solver quadrature.
pub fn fitted_norms(models: &[RowModel], stats: &SecondOrderStats) -> Result<NormMatrix> {
    let kernel = FittedKernel::new(models, stats.mark_cardinality, stats.grid.horizon)?;
    let quad = solver_quadrature(stats, &models[0].config)?;
    NormMatrix::new(l1_norms(&kernel, &stats.mark_pmfs, &quad).values)
}

/// A simulable spec: tabulated fitted kernels, the estimated mark laws, and
/// the baseline `μ̂ = (I - ‖Φ̂‖) Λ̂`.
pub fn fitted_spec(models: &[RowModel], stats: &SecondOrderStats, times: &[f64]) -> Result<KernelSpec> {
    let norms = fitted_norms(models, stats)?;
    let baseline = baseline_from_rates(&norms, &stats.rates)?;
    let spec = KernelSpec {
        dimension: stats.dimension,
        mark_cardinality: stats.mark_cardinality,
        baseline,
        mark_pmfs: stats.mark_pmfs.clone(),
        kernels: tabulate(models, times, stats.mark_cardinality)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// `G̃ = φ + φ ⋆ H` evaluated at the bin centres of `stats`, with `H` from `stats`.
pub fn refit_statistics<K: KernelMatrix + ?Sized>(
    stats: &SecondOrderStats,
    quad: &QuadratureGrid,
    kernel: &K,
) -> Result<SecondOrderStats> {
    if kernel.dimension() != stats.dimension || kernel.mark_cardinality() != stats.mark_cardinality {
        return Err(HawkesError::arg("kernel and statistics shapes differ"));
    }
    let op = CharacterizationOperator::new(stats, quad);
    let mut cache: std::collections::HashMap<(usize, u64, u32), Vec<f64>> = Default::default();
    stats.with_values(|i, j, t, m| cache.entry((i, t.to_bits(), m)).or_insert_with(|| op.apply(kernel, i, t, m))[j])
}

/// Resimulation check of a fitted spec against the statistics it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub branching_ratio: f64,
    pub baseline: Vec<f64>,
    pub target_rates: Vec<f64>,
    pub simulated_rates: Vec<f64>,
    /// Mean over components of `|Λ_sim - Λ̂| / Λ̂`.
    pub rate_error: f64,
    /// Mean over bins and marks of `|Ĝ_sim - Ĝ|`, per `(i, j)`.
    pub g_discrepancy: Vec<Vec<f64>>,
    /// Mean over bins and marks of `|G̃ - Ĝ|`, per `(i, j)`.
    pub refit_discrepancy: Vec<Vec<f64>>,
    /// Mean over bins and marks of `|Ĝ|`, per `(i, j)`, for scale.
    pub g_scale: Vec<Vec<f64>>,
    pub simulated_events: usize,
}

/// Simulates `n_events` from `spec`, re-estimates `Λ` and `G` on the grid of
/// `stats`, and compares; also reports the analytic refit `G̃`.
pub fn goodness_of_fit(spec: &KernelSpec, stats: &SecondOrderStats, quad: &QuadratureGrid, n_events: usize, seed: u64) -> Result<GoodnessOfFit> {
    if spec.dimension != stats.dimension || spec.mark_cardinality != stats.mark_cardinality {
        return Err(HawkesError::arg("spec and statistics shapes differ"));
    }
    let norms = crate::norms::l1_norms(spec, &spec.mark_pmfs, quad);
    let ratio = branching_ratio(&norms)?;
    if ratio >= 1.0 {
        return Err(HawkesError::Refused(format!("fitted branching ratio {ratio:.6} >= 1")));
    }
    let total: f64 = stats.rates.iter().sum();
    let mut config = SimConfig::new(spec.clone(), n_events as f64 / total, seed);
    config.max_events = n_events.saturating_mul(10).max(1_000);
    let stream = simulate(&config)?;
    let sim = estimate_second_order(&stream, &stats.grid)?;
    let refit = refit_statistics(stats, quad, spec)?;

    let d = stats.dimension;
    let rate_error = (0..d).map(|i| (sim.rates[i] - stats.rates[i]).abs() / stats.rates[i]).sum::<f64>() / d as f64;
    let cell_mean = |f: &dyn Fn(usize, usize, usize, u32) -> f64| -> Vec<Vec<f64>> {
        let nb = stats.grid.n_bins();
        let count = (nb * stats.mark_cardinality as usize) as f64;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut s = 0.0;
                        for b in 0..nb {
                            for m in 1..=stats.mark_cardinality {
                                s += f(i, j, b, m);
                            }
                        }
                        s / count
                    })
                    .collect()
            })
            .collect()
    };
    Ok(GoodnessOfFit {
        branching_ratio: ratio,
        baseline: spec.baseline.clone(),
        target_rates: stats.rates.clone(),
        simulated_rates: sim.rates.clone(),
        rate_error,
        g_discrepancy: cell_mean(&|i, j, b, m| (sim.g(i, j, b, m) - stats.g(i, j, b, m)).abs()),
        refit_discrepancy: cell_mean(&|i, j, b, m| (refit.g(i, j, b, m) - stats.g(i, j, b, m)).abs()),
        g_scale: cell_mean(&|i, j, b, m| stats.g(i, j, b, m).abs()),
        simulated_events: stream.len(),
    })
}
