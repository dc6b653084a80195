//! Gated DGM network with ReLU activations and a hand-written reverse pass.
//!
//! With `x` the scaled input `(log10 t, z-scored mark)`:
//!
//! ```text
//! S¹    = σ(W¹x + b¹)
//! Zˡ    = σ(U^z x + W^z Sˡ + b^z)     Gˡ = σ(U^g x + W^g Sˡ + b^g)
//! Rˡ    = σ(U^r x + W^r Sˡ + b^r)     Hˡ = σ(U^h x + W^h (Sˡ⊙Rˡ) + b^h)
//! Sˡ⁺¹  = (1 - Gˡ)⊙Hˡ + Zˡ⊙Sˡ
//! out   = W^out S^{L+1} + b^out
//! ```
//!
//! The output is one value per kernel column, not constrained in sign.
//! The ReLU derivative at exactly zero is taken as zero.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::rng::HawkesRng;

const FORMAT: &str = "neural-hawkes-dgm";
const VERSION: u32 = 1;
const GATES: [&str; 4] = ["z", "g", "r", "h"];

/// Maps `(t, m)` to the network input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    /// Times below this are clamped before taking `log10`.
    pub t_floor: f64,
    pub mark_mean: f64,
    pub mark_std: f64,
}

impl InputScaler {
    pub fn new(t_floor: f64, mark_mean: f64, mark_std: f64) -> Result<Self> {
        if !(t_floor > 0.0) || !(mark_std > 0.0) {
            return Err(HawkesError::arg("scaler needs t_floor > 0 and mark_std > 0"));
        }
        Ok(Self { t_floor, mark_mean, mark_std })
    }

    /// z-score of the integer grid `1..=M` (unit scale when `M = 1`).
    pub fn for_marks(t_floor: f64, marks: u32) -> Result<Self> {
        let m = marks as f64;
        let mean = 0.5 * (m + 1.0);
        let var = (m * m - 1.0) / 12.0;
        Self::new(t_floor, mean, if var > 0.0 { var.sqrt() } else { 1.0 })
    }

    pub fn scale(&self, t: f64, m: u32) -> [f64; 2] {
        [t.max(self.t_floor).log10(), (m as f64 - self.mark_mean) / self.mark_std]
    }
}

#[derive(Clone, Copy, Debug)]
struct Block {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Debug)]
struct Layout {
    w1: Block,
    b1: Block,
    /// Per cell and gate: `(U, W, b)`.
    cells: Vec<[(Block, Block, Block); 4]>,
    wout: Block,
    bout: Block,
    total: usize,
}

impl Layout {
    fn new(width: usize, cells: usize, outputs: usize) -> Self {
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let w1 = take(width, 2);
        let b1 = take(width, 1);
        let cells = (0..cells)
            .map(|_| std::array::from_fn(|_| (take(width, 2), take(width, width), take(width, 1))))
            .collect();
        let wout = take(outputs, width);
        let bout = take(outputs, 1);
        Self { w1, b1, cells, wout, bout, total: offset }
    }

    fn named(&self) -> Vec<(String, Block, bool)> {
        let mut v = vec![("w1".to_string(), self.w1, false), ("b1".to_string(), self.b1, true)];
        for (l, cell) in self.cells.iter().enumerate() {
            for (g, (u, w, b)) in GATES.iter().zip(cell) {
                v.push((format!("cell{l}.u_{g}"), *u, false));
                v.push((format!("cell{l}.w_{g}"), *w, false));
                v.push((format!("cell{l}.b_{g}"), *b, true));
            }
        }
        v.push(("w_out".to_string(), self.wout, false));
        v.push(("b_out".to_string(), self.bout, true));
        v
    }
}

/// Network weights stored as one flat column-major vector.
#[derive(Clone, Debug)]
pub struct DgmParams {
    width: usize,
    cells: usize,
    outputs: usize,
    layout: Layout,
    pub data: Vec<f64>,
}

impl PartialEq for DgmParams {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.cells == other.cells && self.outputs == other.outputs && self.data == other.data
    }
}

impl DgmParams {
    pub fn zeros(width: usize, cells: usize, outputs: usize) -> Result<Self> {
        if width == 0 || outputs == 0 {
            return Err(HawkesError::arg("network width and output count must be >= 1"));
        }
        let layout = Layout::new(width, cells, outputs);
        let data = vec![0.0; layout.total];
        Ok(Self { width, cells, outputs, layout, data })
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn init(width: usize, cells: usize, outputs: usize, rng: &mut HawkesRng) -> Result<Self> {
        let mut p = Self::zeros(width, cells, outputs)?;
        for (_, block, is_bias) in p.layout.named() {
            if is_bias {
                continue;
            }
            // rows = fan_out, cols = fan_in
            let bound = (6.0 / (block.rows + block.cols) as f64).sqrt();
            for v in &mut p.data[block.offset..block.offset + block.len()] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn view(&self, b: Block) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data[b.offset..b.offset + b.len()], b.rows, b.cols)
    }

    /// Tensor by name, as rows.
    pub fn tensor(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        self.layout.named().into_iter().find(|(n, _, _)| n == name).map(|(_, b, _)| {
            let m = self.view(b);
            (0..b.rows).map(|r| (0..b.cols).map(|c| m[(r, c)]).collect()).collect()
        })
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.layout.named().into_iter().map(|(n, _, _)| n).collect()
    }

    /// Outputs at `(t, m)`, one per kernel column.
    pub fn forward(&self, scaler: &InputScaler, t: f64, m: u32) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(HawkesError::arg(format!("network time input must be > 0, got {t}")));
        }
        let x = scaler.scale(t, m);
        let out = self.forward_scaled(&DMatrix::from_column_slice(2, 1, &x));
        Ok(out.column(0).iter().copied().collect())
    }

    /// Outputs (`D × P`) for already scaled inputs (`2 × P`).
    pub fn forward_scaled(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.run(x).output
    }

    fn run(&self, x: &DMatrix<f64>) -> Tape {
        let p = x.ncols();
        let l = &self.layout;
        let mut s = affine(&self.view(l.w1), x, &self.view(l.b1));
        relu(&mut s);
        let mut cells = Vec::with_capacity(self.cells);
        for cell in &l.cells {
            let gate = |k: usize, input: &DMatrix<f64>| {
                let (u, w, b) = cell[k];
                let mut a = affine(&self.view(u), x, &self.view(b));
                a.gemm(1.0, &self.view(w), input, 1.0);
                relu(&mut a);
                a
            };
            let z = gate(0, &s);
            let g = gate(1, &s);
            let r = gate(2, &s);
            let sr = s.component_mul(&r);
            let h = gate(3, &sr);
            let mut next = DMatrix::zeros(self.width, p);
            for idx in 0..next.len() {
                next[idx] = (1.0 - g[idx]) * h[idx] + z[idx] * s[idx];
            }
            cells.push(CellTape { s_in: std::mem::replace(&mut s, next), z, g, r, sr, h });
        }
        let output = affine(&self.view(l.wout), &s, &self.view(l.bout));
        Tape { first: cells.first().map(|c| c.s_in.clone()).unwrap_or_else(|| s.clone()), cells, last: s, output }
    }

    /// Gradient of `Σ_p coef[:, p] · out[:, p]` for scaled inputs `x` (`2 × P`)
    /// and coefficients `coef` (`D × P`), added into `grad`.
    pub fn accumulate_gradient(&self, x: &DMatrix<f64>, coef: &DMatrix<f64>, grad: &mut [f64]) {
        let tape = self.run(x);
        self.backward(x, &tape, coef, grad);
    }

    /// Forward pass that keeps what the reverse pass needs.
    pub fn forward_for_gradient(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, ForwardCache) {
        let tape = self.run(x);
        let out = tape.output.clone();
        (out, ForwardCache(tape))
    }

    pub fn backward_from(&self, x: &DMatrix<f64>, cache: &ForwardCache, coef: &DMatrix<f64>, grad: &mut [f64]) {
        self.backward(x, &cache.0, coef, grad);
    }

    fn backward(&self, x: &DMatrix<f64>, tape: &Tape, coef: &DMatrix<f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.data.len());
        let l = &self.layout;
        add_outer(grad, l.wout, coef, &tape.last);
        add_rowsum(grad, l.bout, coef);
        let mut ds = self.view(l.wout).transpose() * coef;

        for (cell, t) in l.cells.iter().zip(&tape.cells).rev() {
            let n = ds.len();
            let mut dz = DMatrix::zeros(self.width, x.ncols());
            let mut dg = dz.clone();
            let mut dh = dz.clone();
            let mut ds_prev = dz.clone();
            for idx in 0..n {
                let d = ds[idx];
                dh[idx] = if t.h[idx] > 0.0 { d * (1.0 - t.g[idx]) } else { 0.0 };
                dg[idx] = if t.g[idx] > 0.0 { -d * t.h[idx] } else { 0.0 };
                dz[idx] = if t.z[idx] > 0.0 { d * t.s_in[idx] } else { 0.0 };
                ds_prev[idx] = d * t.z[idx];
            }
            // H gate, through S⊙R
            let (uh, wh, bh) = cell[3];
            add_outer(grad, uh, &dh, x);
            add_outer(grad, wh, &dh, &t.sr);
            add_rowsum(grad, bh, &dh);
            let dsr = self.view(wh).transpose() * &dh;
            let mut dr = DMatrix::zeros(self.width, x.ncols());
            for idx in 0..n {
                ds_prev[idx] += dsr[idx] * t.r[idx];
                dr[idx] = if t.r[idx] > 0.0 { dsr[idx] * t.s_in[idx] } else { 0.0 };
            }
            for (k, pre) in [(0usize, &dz), (1, &dg), (2, &dr)] {
                let (u, w, b) = cell[k];
                add_outer(grad, u, pre, x);
                add_outer(grad, w, pre, &t.s_in);
                add_rowsum(grad, b, pre);
                ds_prev.gemm_tr(1.0, &self.view(w), pre, 1.0);
            }
            ds = ds_prev;
        }
        for idx in 0..ds.len() {
            if tape.first[idx] <= 0.0 {
                ds[idx] = 0.0;
            }
        }
        add_outer(grad, l.w1, &ds, x);
        add_rowsum(grad, l.b1, &ds);
    }

    /// Gradient of `Σ coef · forward(t, m)` over `(t, m, coef)` triples.
    pub fn gradient(&self, scaler: &InputScaler, points: &[(f64, u32, Vec<f64>)]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.data.len()];
        if points.is_empty() {
            return Ok(grad);
        }
        let mut x = DMatrix::zeros(2, points.len());
        let mut coef = DMatrix::zeros(self.outputs, points.len());
        for (p, (t, m, c)) in points.iter().enumerate() {
            if !(*t > 0.0) {
                return Err(HawkesError::arg(format!("network time input must be > 0, got {t}")));
            }
            if c.len() != self.outputs || c.iter().any(|v| !v.is_finite()) {
                return Err(HawkesError::arg("coefficients must be finite with one entry per output"));
            }
            let s = scaler.scale(*t, *m);
            x[(0, p)] = s[0];
            x[(1, p)] = s[1];
            for (k, v) in c.iter().enumerate() {
                coef[(k, p)] = *v;
            }
        }
        self.accumulate_gradient(&x, &coef, &mut grad);
        Ok(grad)
    }

    pub fn to_json(&self, scaler: &InputScaler) -> serde_json::Value {
        let tensors: serde_json::Map<String, serde_json::Value> = self
            .tensor_names()
            .into_iter()
            .map(|n| {
                let t = self.tensor(&n).expect("known tensor");
                (n, serde_json::json!(t))
            })
            .collect();
        serde_json::json!({
            "format": FORMAT,
            "version": VERSION,
            "width": self.width,
            "cells": self.cells,
            "outputs": self.outputs,
            "scaler": scaler,
            "tensors": tensors,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<(Self, InputScaler)> {
        if v.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(HawkesError::arg("not a network parameter file"));
        }
        let version = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0);
        if version != VERSION as u64 {
            return Err(HawkesError::arg(format!("unsupported network file version {version}")));
        }
        let dim = |k: &str| {
            v.get(k).and_then(|x| x.as_u64()).map(|x| x as usize).ok_or_else(|| HawkesError::arg(format!("missing {k}")))
        };
        let mut p = Self::zeros(dim("width")?, dim("cells")?, dim("outputs")?)?;
        let scaler: InputScaler = serde_json::from_value(v.get("scaler").cloned().unwrap_or_default())?;
        let tensors = v.get("tensors").ok_or_else(|| HawkesError::arg("missing tensors"))?;
        for (name, block, _) in p.layout.named() {
            let rows: Vec<Vec<f64>> = serde_json::from_value(
                tensors.get(&name).cloned().ok_or_else(|| HawkesError::arg(format!("missing tensor {name}")))?,
            )?;
            if rows.len() != block.rows || rows.iter().any(|r| r.len() != block.cols) {
                return Err(HawkesError::arg(format!("tensor {name} has the wrong shape")));
            }
            let mut m = DMatrixViewMut::from_slice(&mut p.data[block.offset..block.offset + block.len()], block.rows, block.cols);
            for (r, row) in rows.iter().enumerate() {
                for (c, val) in row.iter().enumerate() {
                    m[(r, c)] = *val;
                }
            }
        }
        if p.data.iter().any(|x| !x.is_finite()) {
            return Err(HawkesError::arg("network parameters must be finite"));
        }
        Ok((p, scaler))
    }
}

struct CellTape {
    s_in: DMatrix<f64>,
    z: DMatrix<f64>,
    g: DMatrix<f64>,
    r: DMatrix<f64>,
    sr: DMatrix<f64>,
    h: DMatrix<f64>,
}

struct Tape {
    /// `S¹` after activation.
    first: DMatrix<f64>,
    cells: Vec<CellTape>,
    last: DMatrix<f64>,
    output: DMatrix<f64>,
}

/// Intermediate activations of one batched forward pass.
pub struct ForwardCache(Tape);

fn affine(w: &DMatrixView<'_, f64>, x: &DMatrix<f64>, b: &DMatrixView<'_, f64>) -> DMatrix<f64> {
    let mut out = w * x;
    for mut col in out.column_iter_mut() {
        col += b.column(0);
    }
    out
}

fn relu(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// `grad[block] += a · bᵀ`.
fn add_outer(grad: &mut [f64], block: Block, a: &DMatrix<f64>, b: &DMatrix<f64>) {
    let mut g = DMatrixViewMut::from_slice(&mut grad[block.offset..block.offset + block.len()], block.rows, block.cols);
    g.gemm(1.0, a, &b.transpose(), 1.0);
}

fn add_rowsum(grad: &mut [f64], block: Block, a: &DMatrix<f64>) {
    for (r, g) in grad[block.offset..block.offset + block.rows].iter_mut().enumerate() {
        *g += a.row(r).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn scaler() -> InputScaler {
        InputScaler::for_marks(1e-3, 3).unwrap()
    }

    fn random_points(seed: u64, n: usize, d: usize) -> Vec<(f64, u32, Vec<f64>)> {
        let mut r = rng::stream(seed, 99);
        (0..n)
            .map(|_| {
                let t = 10f64.powf(r.gen_range(-2.5..1.0));
                let m = r.gen_range(1..=3u32);
                let c = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
                (t, m, c)
            })
            .collect()
    }

    fn loss(p: &DgmParams, s: &InputScaler, pts: &[(f64, u32, Vec<f64>)]) -> f64 {
        pts.iter()
            .map(|(t, m, c)| p.forward(s, *t, *m).unwrap().iter().zip(c).map(|(o, k)| o * k).sum::<f64>())
            .sum()
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let a = DgmParams::init(64, 1, 2, &mut rng::stream(1, 0)).unwrap();
        let b = DgmParams::init(64, 1, 2, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 66.0).sqrt();
        assert!((bound - 0.3015).abs() < 1e-4);
        let w1 = a.tensor("w1").unwrap();
        assert!(w1.iter().flatten().all(|v| v.abs() <= bound));
        assert!(w1.iter().flatten().any(|v| v.abs() > 0.9 * bound));
        for name in a.tensor_names().iter().filter(|n| n.contains("b")) {
            if name.starts_with('b') || name.contains(".b_") || name == "b_out" {
                assert!(a.tensor(name).unwrap().iter().flatten().all(|v| *v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = DgmParams::zeros(8, 2, 3).unwrap();
        assert_eq!(p.forward(&scaler(), 0.5, 2).unwrap(), vec![0.0; 3]);
        assert!(p.forward(&scaler(), 0.0, 1).unwrap_err().is_argument_error());
    }

    #[test]
    fn zero_cells_is_a_single_hidden_layer() {
        let p = DgmParams::init(5, 0, 2, &mut rng::stream(4, 0)).unwrap();
        let s = scaler();
        let x = s.scale(0.3, 2);
        let w1 = p.tensor("w1").unwrap();
        let b1 = p.tensor("b1").unwrap();
        let wo = p.tensor("w_out").unwrap();
        let bo = p.tensor("b_out").unwrap();
        let hidden: Vec<f64> = (0..5).map(|r| (w1[r][0] * x[0] + w1[r][1] * x[1] + b1[r][0]).max(0.0)).collect();
        let out = p.forward(&s, 0.3, 2).unwrap();
        for k in 0..2 {
            let want: f64 = wo[k].iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + bo[k][0];
            assert!((out[k] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_trivial_cases() {
        let p = DgmParams::init(4, 1, 2, &mut rng::stream(2, 0)).unwrap();
        let s = scaler();
        let g = p.gradient(&s, &[(0.4, 1, vec![0.0, 0.0])]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let g = p.gradient(&s, &[(0.4, 1, vec![0.0, 2.5])]).unwrap();
        let bout = p.layout.bout;
        assert_eq!(g[bout.offset], 0.0);
        assert_eq!(g[bout.offset + 1], 2.5);
    }

    /// Central differences on every parameter.
    fn max_fd_error(p: &DgmParams, s: &InputScaler, pts: &[(f64, u32, Vec<f64>)]) -> f64 {
        let g = p.gradient(s, pts).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..p.len() {
            let mut plus = p.clone();
            plus.data[k] += h;
            let mut minus = p.clone();
            minus.data[k] -= h;
            let fd = (loss(&plus, s, pts) - loss(&minus, s, pts)) / (2.0 * h);
            let err = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-2);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = scaler();
        for seed in 0..5 {
            let mut p = DgmParams::init(4, 1, 2, &mut rng::stream(seed, 0)).unwrap();
            // non-zero biases so every branch of the cell is exercised
            for v in p.data.iter_mut() {
                *v += 0.05;
            }
            let pts = random_points(seed, 3, 2);
            let err = max_fd_error(&p, &s, &pts);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
        let p = DgmParams::init(3, 2, 1, &mut rng::stream(9, 0)).unwrap();
        assert!(max_fd_error(&p, &s, &random_points(9, 4, 1)) < 1e-4);
    }

    #[test]
    fn piecewise_linear_between_kinks() {
        let p = DgmParams::init(6, 0, 1, &mut rng::stream(5, 0)).unwrap();
        let s = InputScaler::new(1e-6, 0.0, 1.0).unwrap();
        let run = |x: [f64; 2]| p.forward_scaled(&DMatrix::from_column_slice(2, 1, &x))[(0, 0)];
        let pattern = |x: [f64; 2]| -> Vec<bool> {
            let w1 = p.tensor("w1").unwrap();
            w1.iter().map(|r| r[0] * x[0] + r[1] * x[1] > 0.0).collect()
        };
        let mut r = rng::stream(5, 1);
        let mut checked = 0;
        for _ in 0..200 {
            let a = [r.gen_range(-3.0..1.0), r.gen_range(-1.0..1.0)];
            let b = [a[0] + r.gen_range(-0.05..0.05), a[1] + r.gen_range(-0.05..0.05)];
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            if pattern(a) == pattern(b) {
                checked += 1;
                assert!((run(a) + run(b) - 2.0 * run(mid)).abs() < 1e-12);
            }
        }
        assert!(checked > 50);
        let _ = s;
    }

    #[test]
    fn json_round_trip() {
        let p = DgmParams::init(5, 2, 3, &mut rng::stream(3, 0)).unwrap();
        let s = scaler();
        let (q, s2) = DgmParams::from_json(&p.to_json(&s)).unwrap();
        assert_eq!(p, q);
        assert_eq!(s, s2);
        let mut bad = p.to_json(&s);
        bad["version"] = serde_json::json!(7);
        assert!(DgmParams::from_json(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gradient_is_linear_in_coefficients(seed in 0u64..1000, scale in -3.0f64..3.0) {
            let p = DgmParams::init(4, 1, 2, &mut rng::stream(seed, 0)).unwrap();
            let s = scaler();
            let a = random_points(seed, 3, 2);
            let b: Vec<_> = a.iter().map(|(t, m, c)| (*t, *m, c.iter().map(|v| v * scale + 0.3).collect::<Vec<f64>>())).collect();
            let sum: Vec<_> = a.iter().zip(&b).map(|((t, m, c1), (_, _, c2))| (*t, *m, c1.iter().zip(c2).map(|(x, y)| x + y).collect::<Vec<f64>>())).collect();
            let ga = p.gradient(&s, &a).unwrap();
            let gb = p.gradient(&s, &b).unwrap();
            let gs = p.gradient(&s, &sum).unwrap();
            for k in 0..ga.len() {
                let want = ga[k] + gb[k];
                prop_assert!((gs[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }

        #[test]
        fn forward_is_deterministic(seed in 0u64..1000, t in 1e-3f64..10.0, m in 1u32..=3) {
            let p = DgmParams::init(6, 1, 2, &mut rng::stream(seed, 0)).unwrap();
            prop_assert_eq!(p.forward(&scaler(), t, m).unwrap(), p.forward(&scaler(), t, m).unwrap());
        }
    }
}
