//! First- and second-order statistics of an event stream.
//!
//! The conditional excess rate `G^{ij}(t, m)` is estimated on a lin-log grid
//! of lags. Grid point `p_k` is the right edge of bin `(p_{k-1}, p_k]` with
//! `p_{-1} = 0`. Bin values sit at the geometric centre of their bin (the
//! arithmetic centre for the first bin, which touches zero) and are linearly
//! interpolated between centres.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::events::EventStream;
use crate::rng;

/// Lag grid for the second-order statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatGrid {
    /// Switch point between the linear and the geometric part.
    pub h: f64,
    pub n_lin: usize,
    pub n_log: usize,
    /// Largest lag.
    pub horizon: f64,
    pub t_min: f64,
    pub points: Vec<f64>,
}

impl StatGrid {
    /// `[t_min, t_min + (h - t_min)/n_lin, …, h, h (T/h)^{1/n_log}, …, T]`
    /// with `t_min = h / n_lin`.
    pub fn build(h: f64, n_lin: usize, n_log: usize, horizon: f64) -> Result<Self> {
        if !(h > 0.0) || !(h < horizon) || !horizon.is_finite() {
            return Err(HawkesError::arg(format!("need 0 < h < T, got h={h}, T={horizon}")));
        }
        if n_lin == 0 || n_log == 0 {
            return Err(HawkesError::arg("n_lin and n_log must be >= 1"));
        }
        let t_min = h / n_lin as f64;
        let step = (h - t_min) / n_lin as f64;
        let mut points: Vec<f64> = (0..=n_lin).map(|k| if k == n_lin { h } else { t_min + k as f64 * step }).collect();
        points.dedup();
        let ratio = (horizon / h).ln() / n_log as f64;
        points.extend((1..=n_log).map(|k| if k == n_log { horizon } else { h * (ratio * k as f64).exp() }));
        Ok(Self { h, n_lin, n_log, horizon, t_min, points })
    }

    /// `n` equal bins on `(0, T]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(HawkesError::arg("uniform grid needs n >= 1 and T > 0"));
        }
        let points: Vec<f64> = (1..=n).map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 }).collect();
        Ok(Self { h: horizon, n_lin: n, n_log: 0, horizon, t_min: points[0], points })
    }

    /// Short-time scale: `h` for a mixed grid, the first bin edge for a uniform one.
    pub fn short_scale(&self) -> f64 {
        if self.n_log == 0 {
            self.t_min
        } else {
            self.h
        }
    }

    pub fn n_bins(&self) -> usize {
        self.points.len()
    }

    pub fn bin(&self, k: usize) -> (f64, f64) {
        (if k == 0 { 0.0 } else { self.points[k - 1] }, self.points[k])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|k| {
                let (lo, hi) = self.bin(k);
                if lo == 0.0 {
                    0.5 * hi
                } else {
                    (lo * hi).sqrt()
                }
            })
            .collect()
    }

    /// Index of the bin containing `lag`, for `0 < lag <= T`.
    fn locate(&self, lag: f64) -> Option<usize> {
        if !(lag > 0.0) || lag > self.horizon {
            return None;
        }
        Some(self.points.partition_point(|&p| p < lag))
    }
}

pub fn build_grid(h: f64, n_lin: usize, n_log: usize, horizon: f64) -> Result<StatGrid> {
    StatGrid::build(h, n_lin, n_log, horizon)
}

/// Serializable description of a [`StatGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    /// Linear up to `h`, geometric up to `horizon`.
    Mixed { h: f64, n_lin: usize, n_log: usize, horizon: f64 },
    Uniform { n: usize, horizon: f64 },
}

impl GridConfig {
    pub fn build(&self) -> Result<StatGrid> {
        match *self {
            GridConfig::Mixed { h, n_lin, n_log, horizon } => StatGrid::build(h, n_lin, n_log, horizon),
            GridConfig::Uniform { n, horizon } => StatGrid::uniform(n, horizon),
        }
    }

    pub fn horizon(&self) -> f64 {
        match *self {
            GridConfig::Mixed { horizon, .. } | GridConfig::Uniform { horizon, .. } => horizon,
        }
    }
}

/// Event rates per component and empirical mark frequencies.
pub fn estimate_first_order(stream: &EventStream) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = stream.dimension();
    let marks = stream.mark_cardinality() as usize;
    let time = stream.observed_time();
    if !(time > 0.0) {
        return Err(HawkesError::Estimation("stream has no observed time".into()));
    }
    let mut counts = vec![vec![0usize; marks]; d];
    for e in stream.events() {
        counts[e.component][(e.mark - 1) as usize] += 1;
    }
    let mut rates = Vec::with_capacity(d);
    let mut pmfs = Vec::with_capacity(d);
    for (j, c) in counts.iter().enumerate() {
        let n: usize = c.iter().sum();
        if n == 0 {
            return Err(HawkesError::Estimation(format!("component {} has no events", j + 1)));
        }
        rates.push(n as f64 / time);
        pmfs.push(c.iter().map(|&k| k as f64 / n as f64).collect());
    }
    Ok((rates, pmfs))
}

/// Estimated `Λ`, `p^j` and `G^{ij}(bin, m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderStats {
    pub dimension: usize,
    pub mark_cardinality: u32,
    /// Events per second for each component.
    pub rates: Vec<f64>,
    pub mark_pmfs: Vec<Vec<f64>>,
    pub grid: StatGrid,
    /// Flat `[i][j][bin][m-1]` tensor.
    values: Vec<f64>,
    /// Conditioning events per `(j, m)`, flat `[j][m-1]`.
    pub n_conditioning: Vec<usize>,
    /// `(j, m)` cells with no conditioning event; their `G` is zero.
    pub flagged: Vec<(usize, u32)>,
    #[serde(skip)]
    centers: Vec<f64>,
}

impl SecondOrderStats {
    /// Assemble statistics from explicit values, e.g. for synthetic tests.
    pub fn from_parts(
        rates: Vec<f64>,
        mark_pmfs: Vec<Vec<f64>>,
        grid: StatGrid,
        values: Vec<f64>,
        n_conditioning: Vec<usize>,
    ) -> Result<Self> {
        let d = rates.len();
        let marks = mark_pmfs.first().map_or(0, |p| p.len());
        if d == 0 || marks == 0 || mark_pmfs.len() != d || mark_pmfs.iter().any(|p| p.len() != marks) {
            return Err(HawkesError::arg("rates and mark pmfs must describe D >= 1 components and M >= 1 marks"));
        }
        if values.len() != d * d * grid.n_bins() * marks || n_conditioning.len() != d * marks {
            return Err(HawkesError::arg("G tensor or conditioning counts have the wrong length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HawkesError::Numerical("G tensor has non-finite values".into()));
        }
        let flagged = (0..d)
            .flat_map(|j| (1..=marks as u32).map(move |m| (j, m)))
            .filter(|&(j, m)| n_conditioning[j * marks + (m - 1) as usize] == 0)
            .collect();
        let centers = grid.centers();
        Ok(Self {
            dimension: d,
            mark_cardinality: marks as u32,
            rates,
            mark_pmfs,
            grid,
            values,
            n_conditioning,
            flagged,
            centers,
        })
    }

    fn index(&self, i: usize, j: usize, bin: usize, m: u32) -> usize {
        let nb = self.grid.n_bins();
        let mm = self.mark_cardinality as usize;
        ((i * self.dimension + j) * nb + bin) * mm + (m - 1) as usize
    }

    /// Stored value of bin `bin` for conditioning mark `m`.
    pub fn g(&self, i: usize, j: usize, bin: usize, m: u32) -> f64 {
        self.values[self.index(i, j, bin, m)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Rescale all `G` values, keeping rates and marks.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Apply `f(i, j, t_center, m)` to produce a tensor on the same grid.
    pub fn with_values(&self, mut f: impl FnMut(usize, usize, f64, u32) -> f64) -> Result<Self> {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.dimension {
            for j in 0..self.dimension {
                for (b, &c) in self.centers.iter().enumerate() {
                    for m in 1..=self.mark_cardinality {
                        values[self.index(i, j, b, m)] = f(i, j, c, m);
                    }
                }
            }
        }
        Self::from_parts(self.rates.clone(), self.mark_pmfs.clone(), self.grid.clone(), values, self.n_conditioning.clone())
    }

    pub fn conditioning_count(&self, j: usize, m: u32) -> usize {
        self.n_conditioning[j * self.mark_cardinality as usize + (m - 1) as usize]
    }

    /// Refuse solver runs when a cell without data carries material mark mass.
    pub fn check_complete(&self) -> Result<()> {
        for &(j, m) in &self.flagged {
            let p = self.mark_pmfs[j][(m - 1) as usize];
            if p > 0.01 {
                return Err(HawkesError::Refused(format!(
                    "component {} mark {m} has no conditioning events but probability {p:.4}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// Linear interpolation between bin centres; the end values are held
    /// constant inside `(0, T]` and the result is zero outside it.
    pub fn interpolate_g(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
        if !(t > 0.0) || t > self.grid.horizon {
            return 0.0;
        }
        let c = &self.centers;
        let base = self.index(i, j, 0, m);
        let stride = self.mark_cardinality as usize;
        let at = |k: usize| self.values[base + k * stride];
        if t <= c[0] {
            return at(0);
        }
        let last = c.len() - 1;
        if t >= c[last] {
            return at(last);
        }
        let k = c.partition_point(|&x| x <= t);
        let (c0, c1) = (c[k - 1], c[k]);
        let (v0, v1) = (at(k - 1), at(k));
        v0 + (v1 - v0) * (t - c0) / (c1 - c0)
    }

    /// `H^{kj}(t, x, z) = G^{kj}(t, x) 1{t>0} + (Λ^k/Λ^j) G^{jk}(-t, z) 1{t<0}`.
    pub fn h_kernel(&self, k: usize, j: usize, t: f64, x: u32, z: u32) -> f64 {
        if t > 0.0 {
            self.interpolate_g(k, j, t, x)
        } else if t < 0.0 {
            self.rates[k] / self.rates[j] * self.interpolate_g(j, k, -t, z)
        } else {
            0.0
        }
    }

    /// Long-format CSV `i,j,bin_lo,bin_hi,mark,value` (1-based indices).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, provenance: &[(String, String)]) -> Result<()> {
        for (k, v) in provenance {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "i,j,bin_lo,bin_hi,mark,value")?;
        for i in 0..self.dimension {
            for j in 0..self.dimension {
                for b in 0..self.grid.n_bins() {
                    let (lo, hi) = self.grid.bin(b);
                    for m in 1..=self.mark_cardinality {
                        writeln!(w, "{},{},{},{},{},{}", i + 1, j + 1, lo, hi, m, self.g(i, j, b, m))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Sidecar JSON with everything except the tensor.
    pub fn sidecar_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "dimension": self.dimension,
            "mark_cardinality": self.mark_cardinality,
            "rates": self.rates,
            "mark_pmfs": self.mark_pmfs,
            "grid": self.grid,
            "n_conditioning": self.n_conditioning,
            "flagged": self.flagged.iter().map(|&(j, m)| [j + 1, m as usize]).collect::<Vec<_>>(),
        }))
    }

    pub fn read(csv: impl std::io::BufRead, sidecar: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Side {
            rates: Vec<f64>,
            mark_pmfs: Vec<Vec<f64>>,
            grid: StatGrid,
            n_conditioning: Vec<usize>,
        }
        let side: Side = serde_json::from_value(sidecar.clone())?;
        let d = side.rates.len();
        let marks = side.mark_pmfs.first().map_or(0, |p| p.len());
        let nb = side.grid.n_bins();
        let mut values = vec![f64::NAN; d * d * nb * marks];
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv);
        for rec in reader.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).ok_or_else(|| HawkesError::arg("short stats row"));
            let parse_idx = |k: usize| -> Result<usize> {
                field(k)?.trim().parse::<usize>().map_err(|_| HawkesError::arg(format!("bad index in stats row {rec:?}")))
            };
            let (i, j, m) = (parse_idx(0)?, parse_idx(1)?, parse_idx(4)?);
            let hi: f64 = field(3)?.trim().parse().map_err(|_| HawkesError::arg("bad bin_hi"))?;
            let v: f64 = field(5)?.trim().parse().map_err(|_| HawkesError::arg("bad value"))?;
            if i == 0 || j == 0 || m == 0 || i > d || j > d || m > marks {
                return Err(HawkesError::arg(format!("stats row index out of range: {rec:?}")));
            }
            let b = side.grid.points.partition_point(|&p| p < hi);
            if b >= nb || side.grid.points[b] != hi {
                return Err(HawkesError::arg(format!("bin_hi {hi} is not a grid point")));
            }
            values[(((i - 1) * d + (j - 1)) * nb + b) * marks + (m - 1)] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(HawkesError::arg("stats CSV does not cover every (i, j, bin, mark)"));
        }
        Self::from_parts(side.rates, side.mark_pmfs, side.grid, values, side.n_conditioning)
    }
}

/// Per-conditioner-type accumulation: counts `[i][bin][m-1]` plus, optionally,
/// Poisson-weighted copies for the bootstrap.
struct Accumulator {
    counts: Vec<f64>,
    n_cond: Vec<f64>,
    boot_counts: Vec<f64>,
    boot_cond: Vec<f64>,
}

fn accumulate(stream: &EventStream, grid: &StatGrid, j: usize, replicates: usize, seed: u64) -> Accumulator {
    let d = stream.dimension();
    let marks = stream.mark_cardinality() as usize;
    let nb = grid.n_bins();
    let per_i = nb * marks;
    let mut acc = Accumulator {
        counts: vec![0.0; d * per_i],
        n_cond: vec![0.0; marks],
        boot_counts: vec![0.0; replicates * d * per_i],
        boot_cond: vec![0.0; replicates * marks],
    };
    let poisson = Poisson::new(1.0).expect("unit mean");
    let mut rng = rng::stream(seed, rng::BOOTSTRAP + j as u64);
    let mut weights = vec![0.0; replicates];
    let events = stream.events();
    let big_t = grid.horizon;
    let mut hit_bins: Vec<(usize, usize)> = Vec::new();

    let segments = stream.segments();
    for (k, seg) in segments.iter().enumerate() {
        // a segment is half-open when the next one starts at its end
        let shared_end = segments.get(k + 1).is_some_and(|next| next.start == seg.end);
        let lo_idx = events.partition_point(|e| e.time < seg.start);
        let hi_idx = events.partition_point(|e| e.time < seg.end || (!shared_end && e.time == seg.end));
        let seg_events = &events[lo_idx..hi_idx];
        let last_cond = seg.end - big_t;
        let mut cursor = 0usize;
        for (n, e) in seg_events.iter().enumerate() {
            if e.component != j || e.time > last_cond {
                continue;
            }
            let mi = (e.mark - 1) as usize;
            acc.n_cond[mi] += 1.0;
            for w in weights.iter_mut() {
                *w = poisson.sample(&mut rng);
            }
            for (b, w) in weights.iter().enumerate() {
                acc.boot_cond[b * marks + mi] += w;
            }
            // first event strictly after the conditioner
            cursor = cursor.max(n + 1);
            while cursor < seg_events.len() && seg_events[cursor].time <= e.time {
                cursor += 1;
            }
            hit_bins.clear();
            for other in &seg_events[cursor..] {
                let lag = other.time - e.time;
                if lag > big_t {
                    break;
                }
                if let Some(b) = grid.locate(lag) {
                    hit_bins.push((other.component, b));
                }
            }
            for &(i, b) in &hit_bins {
                let idx = i * per_i + b * marks + mi;
                acc.counts[idx] += 1.0;
                for (r, w) in weights.iter().enumerate() {
                    acc.boot_counts[r * d * per_i + idx] += w;
                }
            }
        }
    }
    acc
}

fn assemble(
    stream: &EventStream,
    grid: &StatGrid,
    rates: &[f64],
    per_j: &[(Vec<f64>, Vec<f64>)],
) -> (Vec<f64>, Vec<usize>) {
    let d = stream.dimension();
    let marks = stream.mark_cardinality() as usize;
    let nb = grid.n_bins();
    let mut values = vec![0.0; d * d * nb * marks];
    let mut n_conditioning = vec![0usize; d * marks];
    for (j, (counts, n_cond)) in per_j.iter().enumerate() {
        for m in 0..marks {
            n_conditioning[j * marks + m] = n_cond[m].round() as usize;
        }
        for i in 0..d {
            for b in 0..nb {
                let (lo, hi) = grid.bin(b);
                for m in 0..marks {
                    let n = n_cond[m];
                    let idx = ((i * d + j) * nb + b) * marks + m;
                    values[idx] = if n > 0.0 {
                        counts[i * nb * marks + b * marks + m] / (n * (hi - lo)) - rates[i]
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    (values, n_conditioning)
}

fn check_grid(stream: &EventStream, grid: &StatGrid) -> Result<()> {
    let longest = stream.segments().iter().map(|s| s.end - s.start).fold(0.0, f64::max);
    if !(grid.horizon < longest) {
        return Err(HawkesError::arg(format!(
            "grid horizon {} must be shorter than the longest observed segment {longest}",
            grid.horizon
        )));
    }
    Ok(())
}

/// Empirical `Ĝ` on `grid`; conditioners within `T` of their segment end are dropped.
pub fn estimate_second_order(stream: &EventStream, grid: &StatGrid) -> Result<SecondOrderStats> {
    estimate_with_bootstrap(stream, grid, 0, 0).map(|(s, _)| s)
}

/// [`estimate_second_order`] plus Poisson-weight bootstrap standard errors of
/// every `Ĝ` entry (same layout as [`SecondOrderStats::values`]).
pub fn estimate_with_bootstrap(
    stream: &EventStream,
    grid: &StatGrid,
    replicates: usize,
    seed: u64,
) -> Result<(SecondOrderStats, Vec<f64>)> {
    check_grid(stream, grid)?;
    let (rates, pmfs) = estimate_first_order(stream)?;
    let d = stream.dimension();
    let marks = stream.mark_cardinality() as usize;
    let per_i = grid.n_bins() * marks;
    let accs: Vec<Accumulator> = (0..d)
        .into_par_iter()
        .map(|j| accumulate(stream, grid, j, replicates, seed))
        .collect();
    let main: Vec<(Vec<f64>, Vec<f64>)> = accs.iter().map(|a| (a.counts.clone(), a.n_cond.clone())).collect();
    let (values, n_conditioning) = assemble(stream, grid, &rates, &main);

    let mut se = vec![0.0; values.len()];
    if replicates > 1 {
        let mut sum = vec![0.0; values.len()];
        let mut sum_sq = vec![0.0; values.len()];
        for r in 0..replicates {
            let rep: Vec<(Vec<f64>, Vec<f64>)> = accs
                .iter()
                .map(|a| {
                    (
                        a.boot_counts[r * d * per_i..(r + 1) * d * per_i].to_vec(),
                        a.boot_cond[r * marks..(r + 1) * marks].to_vec(),
                    )
                })
                .collect();
            let (v, _) = assemble(stream, grid, &rates, &rep);
            for (k, x) in v.iter().enumerate() {
                sum[k] += x;
                sum_sq[k] += x * x;
            }
        }
        let n = replicates as f64;
        for k in 0..se.len() {
            let mean = sum[k] / n;
            se[k] = ((sum_sq[k] / n - mean * mean).max(0.0) * n / (n - 1.0)).sqrt();
        }
    }
    let stats = SecondOrderStats::from_parts(rates, pmfs, grid.clone(), values, n_conditioning)?;
    for &(j, m) in &stats.flagged {
        log::warn!("no conditioning events for component {} mark {m}; G set to 0", j + 1);
    }
    Ok((stats, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Event, Segment};
    use crate::kernel::{KernelEntry, KernelFamily, KernelSpec, MarkFactor};
    use crate::simulate::{simulate, SimConfig};

    #[test]
    fn short_scale_stays_below_the_horizon() {
        assert_eq!(build_grid(0.1, 10, 50, 10.0).unwrap().short_scale(), 0.1);
        let u = StatGrid::uniform(75, 1.0).unwrap();
        assert_eq!(u.short_scale(), 1.0 / 75.0);
        assert!(u.short_scale() < u.horizon);
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(0.1, 10, 50, 10.0).unwrap();
        assert_eq!(g.t_min, 0.01);
        assert_eq!(g.points[0], 0.01);
        assert!((g.points[1] - 0.019).abs() < 1e-15);
        assert_eq!(g.points[10], 0.1);
        let r = 100f64.powf(1.0 / 50.0);
        assert!((g.points[11] / g.points[10] - r).abs() < 1e-12);
        assert!((g.points[35] / g.points[34] - r).abs() < 1e-12);
        assert_eq!(*g.points.last().unwrap(), 10.0);
        assert_eq!(g.points.len(), 61);

        let g = build_grid(0.5, 1, 4, 8.0).unwrap();
        assert_eq!(g.points[0], 0.5);
        assert_eq!(g.points.len(), 5);

        // n_lin + 1 linear points (t_min..=h) and n_log geometric ones
        let g = build_grid(1e-3, 25, 75, 100.0).unwrap();
        assert_eq!(g.points.len(), 101);
        assert!(g.points.windows(2).all(|w| w[1] > w[0]));

        assert!(build_grid(10.0, 10, 50, 10.0).unwrap_err().is_argument_error());
    }

    fn stream_of(events: Vec<(f64, usize, u32)>, horizon: f64, d: usize, m: u32) -> EventStream {
        EventStream::new(
            events.into_iter().map(|(time, component, mark)| Event { time, component, mark }).collect(),
            horizon,
            d,
            m,
        )
        .unwrap()
    }

    #[test]
    fn first_order_examples() {
        let s = stream_of(vec![(0.5, 0, 1), (1.0, 1, 2), (2.0, 0, 2), (3.0, 1, 2)], 4.0, 2, 2);
        let (rates, pmfs) = estimate_first_order(&s).unwrap();
        assert_eq!(rates[0], rates[1]);
        assert_eq!(rates[0], 0.5);
        assert_eq!(pmfs[0], vec![0.5, 0.5]);
        assert_eq!(pmfs[1], vec![0.0, 1.0]);
        let empty = stream_of(vec![(0.5, 0, 1)], 4.0, 2, 1);
        match estimate_first_order(&empty) {
            Err(HawkesError::Estimation(msg)) => assert!(msg.contains("component 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_event_hand_count() {
        // events at 1.0 and 1.5, T = 10, horizon 12: both may condition (τ <= 2)
        let grid = StatGrid::uniform(4, 10.0).unwrap(); // bins (0,2.5], (2.5,5], ...
        let s = stream_of(vec![(1.0, 0, 1), (1.5, 0, 1)], 12.0, 1, 1);
        let stats = estimate_second_order(&s, &grid).unwrap();
        let lambda = 2.0 / 12.0;
        // two conditioners, one lag of 0.5 in the first bin
        assert!((stats.g(0, 0, 0, 1) - (1.0 / (2.0 * 2.5) - lambda)).abs() < 1e-15);
        assert!((stats.g(0, 0, 1, 1) + lambda).abs() < 1e-15);
        assert_eq!(stats.conditioning_count(0, 1), 2);
    }

    #[test]
    fn conditioners_near_the_end_are_dropped() {
        let grid = StatGrid::uniform(2, 10.0).unwrap();
        let s = stream_of(vec![(1.0, 0, 1), (5.0, 0, 1), (11.0, 0, 1)], 12.0, 1, 1);
        let stats = estimate_second_order(&s, &grid).unwrap();
        assert_eq!(stats.conditioning_count(0, 1), 1);
    }

    #[test]
    fn zero_count_cells_are_flagged() {
        let grid = StatGrid::uniform(2, 1.0).unwrap();
        let s = stream_of(vec![(0.5, 0, 1), (1.0, 0, 1), (1.5, 0, 1), (2.5, 0, 2)], 5.0, 1, 2);
        let stats = estimate_second_order(&s, &grid).unwrap();
        assert_eq!(stats.flagged, vec![]);
        let s = stream_of(vec![(0.5, 0, 1), (1.0, 0, 1), (4.5, 0, 2)], 5.0, 1, 2);
        let stats = estimate_second_order(&s, &grid).unwrap();
        assert_eq!(stats.flagged, vec![(0, 2)]);
        assert_eq!(stats.g(0, 0, 0, 2), 0.0);
        assert!(matches!(stats.check_complete(), Err(HawkesError::Refused(_))));
    }

    #[test]
    fn segments_never_pair_across_days() {
        let grid = StatGrid::uniform(1, 2.0).unwrap();
        let seg = vec![Segment { start: 0.0, end: 5.0 }, Segment { start: 5.0, end: 10.0 }];
        let events = vec![(2.9, 0, 1), (5.5, 0, 1)]
            .into_iter()
            .map(|(time, component, mark)| Event { time, component, mark })
            .collect();
        let s = EventStream::with_segments(events, 10.0, 1, 1, seg).unwrap();
        let stats = estimate_second_order(&s, &grid).unwrap();
        // both events condition, no pair counted
        assert_eq!(stats.conditioning_count(0, 1), 2);
        assert!((stats.g(0, 0, 0, 1) + 0.2).abs() < 1e-15);
    }

    fn simple_stats() -> SecondOrderStats {
        let grid = StatGrid::uniform(4, 4.0).unwrap(); // centres 0.5, sqrt2, sqrt6, sqrt12
        let values = vec![2.0, 4.0, 1.0, -1.0];
        SecondOrderStats::from_parts(vec![1.0], vec![vec![1.0]], grid, values, vec![10]).unwrap()
    }

    #[test]
    fn interpolation_rules() {
        let s = simple_stats();
        let c = s.centers().to_vec();
        assert_eq!(c[0], 0.5);
        assert!((c[1] - 2f64.sqrt()).abs() < 1e-15);
        for (k, &ck) in c.iter().enumerate() {
            assert_eq!(s.interpolate_g(0, 0, ck, 1), s.g(0, 0, k, 1));
        }
        assert!((s.interpolate_g(0, 0, 0.5 * (c[0] + c[1]), 1) - 3.0).abs() < 1e-12);
        assert_eq!(s.interpolate_g(0, 0, 0.1, 1), 2.0);
        assert_eq!(s.interpolate_g(0, 0, 3.9, 1), -1.0);
        assert_eq!(s.interpolate_g(0, 0, 4.01, 1), 0.0);
        assert_eq!(s.interpolate_g(0, 0, 0.0, 1), 0.0);
        assert_eq!(s.interpolate_g(0, 0, -1.0, 1), 0.0);
    }

    #[test]
    fn h_kernel_rules() {
        let grid = StatGrid::uniform(2, 2.0).unwrap();
        // i,j,bin,m with D=2, M=2
        let values: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let s = SecondOrderStats::from_parts(vec![1.0, 2.0], vec![vec![0.5, 0.5]; 2], grid, values, vec![5; 4]).unwrap();
        assert_eq!(s.h_kernel(0, 1, 0.0, 1, 2), 0.0);
        assert_eq!(s.h_kernel(0, 1, 3.0, 1, 2), 0.0);
        assert_eq!(s.h_kernel(0, 1, -3.0, 1, 2), 0.0);
        assert_eq!(s.h_kernel(0, 1, 0.5, 2, 1), s.interpolate_g(0, 1, 0.5, 2));
        assert_eq!(s.h_kernel(0, 1, -0.5, 2, 1), 0.5 * s.interpolate_g(1, 0, 0.5, 1));
        // diagonal: H(t) + H(-t) = 2 G(t, x) when x = z
        let t = 0.7;
        let sum = s.h_kernel(1, 1, t, 2, 2) + s.h_kernel(1, 1, -t, 2, 2);
        assert!((sum - 2.0 * s.interpolate_g(1, 1, t, 2)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_stats_give_mirror_h() {
        let grid = StatGrid::uniform(3, 3.0).unwrap();
        let s = SecondOrderStats::from_parts(vec![1.0, 1.0], vec![vec![1.0]; 2], grid, vec![0.0; 12], vec![3; 2])
            .unwrap()
            .with_values(|_, _, t, _| (-t).exp())
            .unwrap();
        for t in [0.3, 1.1, 2.7] {
            assert_eq!(s.h_kernel(0, 1, t, 1, 1), s.h_kernel(0, 1, -t, 1, 1));
        }
    }

    #[test]
    fn csv_and_sidecar_round_trip() {
        let grid = build_grid(0.1, 2, 3, 1.0).unwrap();
        let values: Vec<f64> = (0..(4 * grid.n_bins() * 2)).map(|k| (k as f64).sin() * 1e-3).collect();
        let s = SecondOrderStats::from_parts(vec![1.0, 2.0], vec![vec![0.25, 0.75]; 2], grid, values, vec![1, 2, 0, 4]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &[("seed".into(), "1".into())]).unwrap();
        let side = s.sidecar_json().unwrap();
        let back = SecondOrderStats::read(&buf[..], &side).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.flagged, vec![(1, 1)]);
    }

    #[test]
    fn poisson_stream_has_no_excess() {
        let spec = KernelSpec::new(
            vec![1.0, 2.0],
            vec![vec![KernelEntry::new(KernelFamily::Zero, MarkFactor::Constant); 2]; 2],
            2,
        )
        .unwrap();
        let stream = simulate(&SimConfig::new(spec, 2e4, 8)).unwrap();
        let grid = build_grid(0.1, 5, 10, 5.0).unwrap();
        let (stats, se) = estimate_with_bootstrap(&stream, &grid, 40, 1).unwrap();
        let n = stats.values().len() as f64;
        let mean_abs: f64 = stats.values().iter().map(|v| v.abs()).sum::<f64>() / n;
        let mean_se: f64 = se.iter().sum::<f64>() / n;
        assert!(mean_abs < 4.0 * mean_se, "{mean_abs} vs se {mean_se}");
    }

    /// Closed-form `G` of a 1-dim exponential Hawkes process with unit marks:
    /// `G(t) = α(2β - α) / (2(β - α)) e^{-(β-α)t}`.
    fn exp_hawkes_g(alpha: f64, beta: f64, t: f64) -> f64 {
        alpha * (2.0 * beta - alpha) / (2.0 * (beta - alpha)) * (-(beta - alpha) * t).exp()
    }

    #[test]
    fn closed_form_g_solves_the_characterization() {
        // G(t) = φ(t) + ∫_0^∞ φ(s) G(|t-s|) ds for the exponential kernel, by quadrature
        let (alpha, beta) = (1.0, 2.0);
        for t in [0.05, 0.5, 2.0] {
            let n = 200_000;
            let upper = 40.0;
            let h = upper / n as f64;
            let integral: f64 = (0..n)
                .map(|k| {
                    let s = (k as f64 + 0.5) * h;
                    alpha * (-beta * s).exp() * exp_hawkes_g(alpha, beta, (t - s).abs())
                })
                .sum::<f64>()
                * h;
            let lhs = exp_hawkes_g(alpha, beta, t);
            let rhs = alpha * (-beta * t).exp() + integral;
            assert!((lhs - rhs).abs() < 1e-6, "t={t}: {lhs} vs {rhs}");
        }
        assert!((exp_hawkes_g(1.0, 2.0, 0.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn exponential_hawkes_matches_closed_form() {
        let spec = KernelSpec::new(
            vec![0.5],
            vec![vec![KernelEntry::new(KernelFamily::Exponential { alpha: 1.0, beta: 2.0 }, MarkFactor::Constant)]],
            1,
        )
        .unwrap();
        let stream = simulate(&SimConfig::new(spec, 2e5, 17)).unwrap();
        let grid = build_grid(0.1, 5, 20, 5.0).unwrap();
        let (stats, se) = estimate_with_bootstrap(&stream, &grid, 50, 3).unwrap();
        let mut outside = 0;
        for b in 0..grid.n_bins() {
            let (lo, hi) = grid.bin(b);
            // bin average of the closed form
            let avg = (exp_hawkes_g(1.0, 2.0, lo) - exp_hawkes_g(1.0, 2.0, hi)) / ((hi - lo) * 1.0);
            let z = (stats.g(0, 0, b, 1) - avg).abs() / se[b];
            if z > 4.0 {
                outside += 1;
            }
        }
        assert!(outside <= 1, "{outside} bins beyond 4 s.e.");
    }

    #[test]
    fn time_reversal_detailed_balance() {
        // Λ^i G^{ij}(t) for the reversed stream equals Λ^j G^{ji}(t) of the original.
        let spec = KernelSpec::new(
            vec![0.3, 0.3],
            vec![
                vec![
                    KernelEntry::new(KernelFamily::Exponential { alpha: 0.5, beta: 2.0 }, MarkFactor::Constant),
                    KernelEntry::new(KernelFamily::Exponential { alpha: 0.6, beta: 1.5 }, MarkFactor::Constant),
                ],
                vec![
                    KernelEntry::new(KernelFamily::Zero, MarkFactor::Constant),
                    KernelEntry::new(KernelFamily::Exponential { alpha: 0.4, beta: 2.0 }, MarkFactor::Constant),
                ],
            ],
            1,
        )
        .unwrap();
        let stream = simulate(&SimConfig::new(spec, 1e5, 23)).unwrap();
        let grid = build_grid(0.2, 2, 6, 4.0).unwrap();
        let (fwd, se_f) = estimate_with_bootstrap(&stream, &grid, 30, 5).unwrap();
        let (rev, se_r) = estimate_with_bootstrap(&stream.time_reversed(), &grid, 30, 6).unwrap();
        let nb = grid.n_bins();
        for b in 0..nb {
            let a = rev.rates[0] * rev.g(0, 1, b, 1);
            let c = fwd.rates[1] * fwd.g(1, 0, b, 1);
            let tol = 4.0 * (rev.rates[0] * se_r[nb + b] + fwd.rates[1] * se_f[2 * nb + b]) + 1e-3;
            assert!((a - c).abs() < tol, "bin {b}: {a} vs {c} (tol {tol})");
        }
    }

    #[test]
    fn standard_error_halves_when_sample_quadruples() {
        let spec = KernelSpec::new(
            vec![0.5],
            vec![vec![KernelEntry::new(KernelFamily::Exponential { alpha: 1.0, beta: 2.0 }, MarkFactor::Constant)]],
            1,
        )
        .unwrap();
        let grid = build_grid(0.1, 5, 10, 5.0).unwrap();
        let se_of = |horizon: f64| {
            let stream = simulate(&SimConfig::new(spec.clone(), horizon, 31)).unwrap();
            let (_, se) = estimate_with_bootstrap(&stream, &grid, 60, 9).unwrap();
            se.iter().sum::<f64>() / se.len() as f64
        };
        let small = se_of(2.5e4);
        let large = se_of(1e5);
        let ratio = small / large;
        // four times the data halves the error; doubling divides it by √2
        assert!((ratio - 2.0).abs() < 0.3 * 2.0, "ratio {ratio}");
    }
}
