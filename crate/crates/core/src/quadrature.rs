//! Fixed quadrature grids on `[lower, upper]`.

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Trapezoid in `s` on geometric nodes.
    Trapezoid,
    /// Trapezoid in `ln s` on geometric nodes, i.e. `∫ f(s) s d(ln s)`.
    #[default]
    LogTrapezoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl QuadratureGrid {
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(HawkesError::arg("quadrature needs matching, non-empty node and weight lists"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HawkesError::arg("quadrature nodes must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(HawkesError::arg("quadrature weights must be positive"));
        }
        Ok(Self { nodes, weights, lower, upper })
    }

    /// `q` geometric nodes on `[t_lo, upper]` with trapezoid weights.
    pub fn log_grid(q: usize, t_lo: f64, upper: f64, rule: QuadratureRule) -> Result<Self> {
        if q < 2 {
            return Err(HawkesError::arg("quadrature needs at least 2 nodes"));
        }
        if !(t_lo > 0.0 && t_lo < upper) {
            return Err(HawkesError::arg(format!("need 0 < t_lo < T, got t_lo={t_lo}, T={upper}")));
        }
        let ratio = (upper / t_lo).ln() / (q - 1) as f64;
        let mut nodes: Vec<f64> = (0..q).map(|k| t_lo * (ratio * k as f64).exp()).collect();
        nodes[q - 1] = upper;
        let mut weights = vec![0.0; q];
        match rule {
            QuadratureRule::Trapezoid => {
                for k in 0..q - 1 {
                    let half = 0.5 * (nodes[k + 1] - nodes[k]);
                    weights[k] += half;
                    weights[k + 1] += half;
                }
            }
            QuadratureRule::LogTrapezoid => {
                for k in 0..q {
                    let end = if k == 0 || k == q - 1 { 0.5 } else { 1.0 };
                    weights[k] = end * ratio * nodes[k];
                }
            }
        }
        Ok(Self { nodes, weights, lower: t_lo, upper })
    }

    /// Prepend a node at `0` joined to the first node by a trapezoid panel, so
    /// the grid covers `[0, upper]`.
    pub fn with_origin(&self) -> Self {
        if self.nodes[0] == 0.0 {
            return self.clone();
        }
        let first = self.nodes[0];
        let mut nodes = Vec::with_capacity(self.nodes.len() + 1);
        nodes.push(0.0);
        nodes.extend_from_slice(&self.nodes);
        let mut weights = Vec::with_capacity(nodes.len());
        weights.push(0.5 * first);
        weights.extend_from_slice(&self.weights);
        weights[1] += 0.5 * first;
        Self { nodes, weights, lower: 0.0, upper: self.upper }
    }

    /// Uniform nodes `kδ`, `k = 0..q-1`, `δ = upper/(q-1)`, every weight `δ`.
    pub fn uniform_rectangle(q: usize, upper: f64) -> Result<Self> {
        if q < 2 || !(upper > 0.0) {
            return Err(HawkesError::arg("uniform grid needs q >= 2 and a positive upper bound"));
        }
        let delta = upper / (q - 1) as f64;
        let nodes = (0..q).map(|k| if k == q - 1 { upper } else { k as f64 * delta }).collect();
        Ok(Self { nodes, weights: vec![delta; q], lower: 0.0, upper })
    }

    /// Composite Gauss-Legendre rule over consecutive panels `edges[k]..edges[k+1]`.
    pub fn gauss_legendre_panels(edges: &[f64], order: usize) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HawkesError::arg("panel edges must be strictly increasing"));
        }
        let rule = GaussLegendre::new(order.max(2)).map_err(|e| HawkesError::arg(e.to_string()))?;
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nodes = Vec::with_capacity(pairs.len() * (edges.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            for &(x, wt) in &pairs {
                nodes.push(0.5 * ((b - a) * x + b + a));
                weights.push(0.5 * (b - a) * wt);
            }
        }
        Ok(Self { nodes, weights, lower: edges[0], upper: *edges.last().unwrap() })
    }

    /// An accurate default for kernel norms on `[0, upper]`: Gauss-Legendre
    /// panels with geometric edges from `upper·1e-7`, plus one panel from 0.
    pub fn for_norms(upper: f64, panels: usize) -> Result<Self> {
        Self::gauss_legendre_panels(&geometric_edges(upper * 1e-7, upper, panels, &[])?, 8)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `0`, then `panels` geometric edges from `lo` to `upper`, merged with `extra`.
pub(crate) fn geometric_edges(lo: f64, upper: f64, panels: usize, extra: &[f64]) -> Result<Vec<f64>> {
    if !(upper > 0.0 && lo > 0.0 && lo < upper) || panels < 2 {
        return Err(HawkesError::arg("panel edges need 0 < lo < upper and at least 2 panels"));
    }
    let r = (upper / lo).ln() / (panels - 1) as f64;
    let mut edges = vec![0.0];
    edges.extend((0..panels).map(|k| if k == panels - 1 { upper } else { lo * (r * k as f64).exp() }));
    edges.extend(extra.iter().copied().filter(|&x| x > 0.0 && x < upper));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(b.abs()));
    Ok(edges)
}

/// `q` geometric nodes on `[t_lo, upper]`, trapezoid weights.
pub fn build_quadrature(q: usize, t_lo: f64, upper: f64) -> Result<QuadratureGrid> {
    QuadratureGrid::log_grid(q, t_lo, upper, QuadratureRule::Trapezoid)
}
