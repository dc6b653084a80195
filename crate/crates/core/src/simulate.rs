//! Ogata thinning for marked multivariate linear Hawkes processes.
//!
//! Exponential entries carry an `O(1)` recursive state. Every other family
//! keeps a window of past events per source component, pruned once the lag
//! exceeds the family's memory (the lag past which less than `1e-6` of the
//! kernel mass remains, capped by [`SimConfig::memory_cap`]).
//!
//! The dominating rate at time `t` is `Σ_i (μ^i + Σ_k sup_{a ≥ t - τ_k} φ^{ik}(a)^+)`,
//! which bounds the intensity on `[t, ∞)` until the next accepted event. It is
//! recomputed after every candidate, accepted or not.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::events::{Event, EventStream};
use crate::kernel::{KernelFamily, KernelMatrix, KernelSpec};
use crate::norms::branching_ratio;
use crate::rng;

/// Relative tail mass below which old events are dropped from a window.
pub const PRUNE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub spec: KernelSpec,
    /// Simulated time span in seconds.
    pub horizon: f64,
    pub seed: u64,
    /// Stop with [`HawkesError::Truncated`] once this many events exist.
    pub max_events: usize,
    /// Lower clamp applied to each intensity when the spec has negative parts.
    pub intensity_floor: f64,
    /// Longest lag kept in a history window, in seconds.
    pub memory_cap: f64,
}

impl SimConfig {
    pub fn new(spec: KernelSpec, horizon: f64, seed: u64) -> Self {
        Self { spec, horizon, seed, max_events: 50_000_000, intensity_floor: 0.0, memory_cap: 1_000.0 }
    }
}

/// Counters collected during one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub candidates: u64,
    pub accepted: u64,
    /// Candidates at which at least one raw intensity was below the floor.
    pub clamped: u64,
    /// Window length used for each source component (0 when not needed).
    pub memory: Vec<f64>,
}

impl SimDiagnostics {
    pub fn clamp_fraction(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.clamped as f64 / self.candidates as f64
        }
    }
}

fn check_history(history: &[Event], t: f64) -> Result<()> {
    let mut last = f64::NEG_INFINITY;
    for e in history {
        if e.time < last {
            return Err(HawkesError::arg("history is not sorted by time"));
        }
        last = e.time;
    }
    if t < last {
        return Err(HawkesError::arg(format!("intensity requested at t={t} before the last event at {last}")));
    }
    Ok(())
}

/// `λ^i(t) = μ^i + Σ_{s < t} φ^{i c(s)}(t - s, ξ_s)`, clamped at zero when the
/// spec can inhibit.
pub fn intensity_at(spec: &KernelSpec, history: &[Event], t: f64) -> Result<Vec<f64>> {
    check_history(history, t)?;
    let clamp = spec.has_negative_parts();
    Ok((0..spec.dimension)
        .map(|i| {
            let raw = spec.baseline[i]
                + history
                    .iter()
                    .filter(|e| e.time < t)
                    .map(|e| spec.value(i, e.component, t - e.time, e.mark))
                    .sum::<f64>();
            if clamp {
                raw.max(0.0)
            } else {
                raw
            }
        })
        .collect())
}

struct ExpEntry {
    /// `α f(m)` per mark.
    jump: Vec<f64>,
    beta: f64,
}

struct Engine<'a> {
    spec: &'a KernelSpec,
    d: usize,
    exp: Vec<Vec<Option<ExpEntry>>>,
    state: Vec<Vec<f64>>,
    windows: Vec<VecDeque<(f64, u32)>>,
    memory: Vec<f64>,
    needs_window: Vec<bool>,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a KernelSpec, memory_cap: f64) -> Self {
        let d = spec.dimension;
        let marks = spec.mark_cardinality;
        let mut exp = Vec::with_capacity(d);
        let mut needs_window = vec![false; d];
        let mut memory = vec![0.0f64; d];
        for i in 0..d {
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                let entry = &spec.kernels[i][j];
                match entry.family {
                    KernelFamily::Exponential { alpha, beta } => row.push(Some(ExpEntry {
                        jump: (1..=marks).map(|m| alpha * entry.mark_factor.value(m, marks)).collect(),
                        beta,
                    })),
                    KernelFamily::Zero => row.push(None),
                    ref fam => {
                        needs_window[j] = true;
                        memory[j] = memory[j].max(fam.memory(PRUNE_TOLERANCE, memory_cap));
                        row.push(None);
                    }
                }
            }
            exp.push(row);
        }
        Self { spec, d, exp, state: vec![vec![0.0; d]; d], windows: vec![VecDeque::new(); d], memory, needs_window }
    }

    fn decay_to(&mut self, dt: f64) {
        if dt == 0.0 {
            return;
        }
        for i in 0..self.d {
            for j in 0..self.d {
                if let Some(e) = &self.exp[i][j] {
                    self.state[i][j] *= (-e.beta * dt).exp();
                }
            }
        }
    }

    fn prune(&mut self, t: f64) {
        for j in 0..self.d {
            let horizon = self.memory[j];
            let w = &mut self.windows[j];
            while let Some(&(s, _)) = w.front() {
                if t - s > horizon {
                    w.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    fn bound(&self, t: f64) -> Result<f64> {
        let marks = self.spec.mark_cardinality;
        let mut total = 0.0;
        for i in 0..self.d {
            let mut b = self.spec.baseline[i];
            for j in 0..self.d {
                if self.exp[i][j].is_some() {
                    b += self.state[i][j].max(0.0);
                } else if self.needs_window[j] {
                    let entry = &self.spec.kernels[i][j];
                    for &(s, m) in &self.windows[j] {
                        let sup = entry.family.positive_sup_from(t - s, m, marks)?;
                        b += sup * entry.mark_factor.value(m, marks).max(0.0);
                    }
                }
            }
            total += b.max(0.0);
        }
        Ok(total)
    }

    /// Raw intensities at `t`; exponential states must already sit at `t`.
    fn intensities(&self, t: f64, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let mut v = self.spec.baseline[i];
            for j in 0..self.d {
                if self.exp[i][j].is_some() {
                    v += self.state[i][j];
                } else if self.needs_window[j] {
                    for &(s, m) in &self.windows[j] {
                        v += self.spec.value(i, j, t - s, m);
                    }
                }
            }
            *slot = v;
        }
    }

    fn push(&mut self, t: f64, j: usize, m: u32) {
        for i in 0..self.d {
            if let Some(e) = &self.exp[i][j] {
                self.state[i][j] += e.jump[(m - 1) as usize];
            }
        }
        if self.needs_window[j] {
            self.windows[j].push_back((t, m));
        }
    }
}

/// Simulate on `[0, horizon]` from an empty history.
pub fn simulate(config: &SimConfig) -> Result<EventStream> {
    simulate_with_diagnostics(config).map(|(s, _)| s)
}

pub fn simulate_with_diagnostics(config: &SimConfig) -> Result<(EventStream, SimDiagnostics)> {
    let spec = &config.spec;
    spec.validate()?;
    if !(config.horizon > 0.0) || !config.horizon.is_finite() {
        return Err(HawkesError::arg(format!("horizon must be positive, got {}", config.horizon)));
    }
    if config.max_events == 0 {
        return Err(HawkesError::arg("max_events must be positive"));
    }
    let ratio = branching_ratio(&spec.l1_norms(config.memory_cap.max(1.0))?)?;
    if ratio >= 1.0 {
        return Err(HawkesError::Stationarity { ratio });
    }
    let marks = spec.mark_cardinality;
    // reject tabulated entries without a usable bound before drawing anything
    for row in &spec.kernels {
        for e in row {
            e.family.positive_sup_from(0.0, 1, marks)?;
        }
    }

    let d = spec.dimension;
    let clamp = spec.has_negative_parts();
    let mut engine = Engine::new(spec, config.memory_cap);
    let mut main = rng::stream(config.seed, 0);
    let mut mark_rngs: Vec<_> = (0..d).map(|j| rng::stream(config.seed, 1 + j as u64)).collect();
    let mark_dists = spec
        .mark_pmfs
        .iter()
        .map(|p| WeightedIndex::new(p).map_err(|e| HawkesError::arg(format!("mark pmf: {e}"))))
        .collect::<Result<Vec<_>>>()?;

    let mut diag = SimDiagnostics { memory: engine.memory.clone(), ..Default::default() };
    let mut events: Vec<Event> = Vec::new();
    let mut lambda = vec![0.0; d];
    let mut t = 0.0f64;
    loop {
        engine.prune(t);
        let bound = engine.bound(t)?;
        if bound <= 0.0 {
            break;
        }
        let wait: f64 = main.sample::<f64, _>(Exp1) / bound;
        let s = t + wait;
        if s > config.horizon {
            break;
        }
        engine.decay_to(s - t);
        t = s;
        engine.intensities(t, &mut lambda);
        diag.candidates += 1;
        if clamp {
            let mut hit = false;
            for v in lambda.iter_mut() {
                if *v < config.intensity_floor {
                    *v = config.intensity_floor;
                    hit = true;
                }
            }
            if hit {
                diag.clamped += 1;
            }
        }
        let total: f64 = lambda.iter().sum();
        if total > bound * (1.0 + 1e-9) + 1e-300 {
            return Err(HawkesError::Numerical(format!(
                "thinning bound {bound} below intensity {total} at t={t}"
            )));
        }
        let u: f64 = main.gen::<f64>() * bound;
        if u >= total {
            continue;
        }
        let mut acc = 0.0;
        let mut comp = d - 1;
        for (i, &v) in lambda.iter().enumerate() {
            acc += v;
            if u < acc {
                comp = i;
                break;
            }
        }
        let mark = mark_dists[comp].sample(&mut mark_rngs[comp]) as u32 + 1;
        if events.last().is_some_and(|e: &Event| e.time == t) {
            // two accepted candidates cannot share a time stamp in exact arithmetic
            continue;
        }
        events.push(Event { time: t, component: comp, mark });
        engine.push(t, comp, mark);
        diag.accepted += 1;
        if events.len() >= config.max_events {
            let stream = EventStream::new(events, t, d, marks)?;
            log::warn!("simulation truncated at {} events", stream.len());
            return Err(HawkesError::Truncated { partial: Box::new(stream) });
        }
    }
    Ok((EventStream::new(events, config.horizon, d, marks)?, diag))
}

/// Simulate roughly `n_events` events: the horizon is `n_events / Σ Λ` with
/// `Λ` the stationary rates of `spec`.
pub fn simulate_events(spec: &KernelSpec, n_events: usize, seed: u64) -> Result<EventStream> {
    let rates = spec.stationary_rates(1_000.0)?;
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Err(HawkesError::arg("spec has zero stationary rate"));
    }
    let mut config = SimConfig::new(spec.clone(), n_events as f64 / total, seed);
    config.max_events = n_events.saturating_mul(10).max(1_000);
    simulate(&config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelEntry, MarkFactor, TabulatedKernel};

    fn exp1(alpha: f64, beta: f64, mu: f64, marks: u32, f: MarkFactor) -> KernelSpec {
        KernelSpec::new(vec![mu], vec![vec![KernelEntry::new(KernelFamily::Exponential { alpha, beta }, f)]], marks).unwrap()
    }

    #[test]
    fn intensity_examples() {
        let s = exp1(1.0, 2.0, 0.5, 1, MarkFactor::Constant);
        assert_eq!(intensity_at(&s, &[], 3.0).unwrap(), vec![0.5]);
        let h = [Event { time: 0.0, component: 0, mark: 1 }];
        let l = intensity_at(&s, &h, 1.0).unwrap();
        assert!((l[0] - (0.5 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((l[0] - 0.6353).abs() < 1e-4);

        let unsorted = [Event { time: 1.0, component: 0, mark: 1 }, Event { time: 0.5, component: 0, mark: 1 }];
        assert!(intensity_at(&s, &unsorted, 2.0).unwrap_err().is_argument_error());
        assert!(intensity_at(&s, &h, -1.0).is_err());

        let inhib = KernelSpec::new(
            vec![0.1],
            vec![vec![KernelEntry::new(
                KernelFamily::InhibitionTwoPhase { alpha_lo: -2.0, beta_lo: 1.0, alpha_hi: 0.5, beta_hi: 1.0, delay: 1.0 },
                MarkFactor::Constant,
            )]],
            1,
        )
        .unwrap();
        assert_eq!(intensity_at(&inhib, &h, 0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn poisson_count() {
        let s = KernelSpec::new(vec![2.0], vec![vec![KernelEntry::new(KernelFamily::Zero, MarkFactor::Constant)]], 1).unwrap();
        let stream = simulate(&SimConfig::new(s, 1e4, 11)).unwrap();
        let n = stream.len() as f64;
        assert!((n - 2e4).abs() < 4.0 * 2e4f64.sqrt(), "{n}");
    }

    #[test]
    fn exponential_rate_matches_first_order() {
        // ‖φ‖ = 0.5, μ = 0.5, Λ = 1; Var N(T) ≈ Λ T / (1 - ‖φ‖)²
        let s = exp1(1.0, 2.0, 0.5, 1, MarkFactor::Constant);
        let horizon = 4e4;
        let stream = simulate(&SimConfig::new(s, horizon, 3)).unwrap();
        let rate = stream.len() as f64 / horizon;
        let se = (1.0 / horizon).sqrt() / 0.5;
        assert!((rate - 1.0).abs() < 4.0 * se, "rate {rate}, se {se}");
    }

    #[test]
    fn deterministic_given_seed() {
        let s = exp1(1.5, 8.0, 0.5, 10, MarkFactor::Linear);
        let a = simulate(&SimConfig::new(s.clone(), 500.0, 5)).unwrap();
        let b = simulate(&SimConfig::new(s.clone(), 500.0, 5)).unwrap();
        let c = simulate(&SimConfig::new(s, 500.0, 6)).unwrap();
        let csv = |x: &EventStream| {
            let mut v = Vec::new();
            x.write_csv(&mut v, &[]).unwrap();
            v
        };
        assert_eq!(csv(&a), csv(&b));
        assert_ne!(csv(&a), csv(&c));
    }

    #[test]
    fn truncation_keeps_partial_stream() {
        let s = exp1(1.0, 2.0, 0.5, 1, MarkFactor::Constant);
        let mut cfg = SimConfig::new(s, 1e5, 1);
        cfg.max_events = 100;
        match simulate(&cfg) {
            Err(HawkesError::Truncated { partial }) => {
                assert_eq!(partial.len(), 100);
                assert!(partial.horizon() < 1e5);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn tabulated_without_maximum_is_refused() {
        let mut tab = TabulatedKernel::new(vec![0.0, 1.0], vec![vec![0.2, 0.0]]).unwrap();
        tab.max = None;
        let s = KernelSpec::new(vec![0.5], vec![vec![KernelEntry::new(KernelFamily::Tabulated(tab), MarkFactor::None)]], 1).unwrap();
        assert!(simulate(&SimConfig::new(s, 10.0, 1)).unwrap_err().is_argument_error());
    }

    #[test]
    fn non_exponential_families_match_their_rates() {
        let fams = [
            KernelFamily::PowerLaw { alpha: 0.012, beta: 1.3, gamma: 0.0005 },
            KernelFamily::DelayedExponential { alpha: 1.25, beta: 5.0, delay: 0.1 },
            KernelFamily::BimodalGaussian { alpha: 0.4, mu_lo: 0.1, sigma_lo: 0.05, mu_hi: 0.5, sigma_hi: 0.1 },
        ];
        for (k, fam) in fams.into_iter().enumerate() {
            let s = KernelSpec::new(vec![0.5], vec![vec![KernelEntry::new(fam, MarkFactor::Quadratic)]], 3).unwrap();
            let norm = s.l1_norms(1_000.0).unwrap().get(0, 0);
            let lambda = 0.5 / (1.0 - norm);
            let horizon = 2e4 / lambda;
            let (stream, diag) = simulate_with_diagnostics(&SimConfig::new(s, horizon, 20 + k as u64)).unwrap();
            let rate = stream.len() as f64 / horizon;
            let se = (lambda / horizon).sqrt() / (1.0 - norm);
            assert!((rate - lambda).abs() < 4.0 * se, "family {k}: rate {rate} vs {lambda} (se {se})");
            assert_eq!(diag.clamped, 0);
        }
    }

    #[test]
    fn inhibition_records_clamping() {
        let s = KernelSpec::new(
            vec![0.5],
            vec![vec![KernelEntry::new(
                KernelFamily::InhibitionTwoPhase { alpha_lo: -3.0, beta_lo: 1.0, alpha_hi: 1.0, beta_hi: 4.0, delay: 0.3 },
                MarkFactor::Constant,
            )]],
            1,
        )
        .unwrap();
        let (_, diag) = simulate_with_diagnostics(&SimConfig::new(s, 2e3, 9)).unwrap();
        assert!(diag.clamp_fraction() > 0.0 && diag.clamp_fraction() < 1.0);
    }

    #[test]
    fn first_waiting_time_follows_survival_function() {
        // 1-dim exponential from an empty history: the first event is a Poisson(μ)
        // arrival, so S(t) = exp(-μ t); checked with the KS statistic at 1%.
        let s = exp1(1.0, 2.0, 0.5, 1, MarkFactor::Constant);
        let n = 2_000;
        let mut firsts: Vec<f64> = (0..n)
            .map(|seed| {
                let st = simulate(&SimConfig::new(s.clone(), 50.0, 1_000 + seed)).unwrap();
                st.events()[0].time
            })
            .collect();
        firsts.sort_by(f64::total_cmp);
        let ks = firsts
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let f = 1.0 - (-0.5 * t).exp();
                ((k + 1) as f64 / n as f64 - f).abs().max((f - k as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / (n as f64).sqrt(), "KS {ks}");
    }

    #[test]
    fn second_waiting_time_follows_survival_function() {
        // Given the first event at τ, the next waiting time w has cumulative hazard
        // μ w + (α/β)(1 - e^{-β w}); integrate numerically and compare by KS.
        let (alpha, beta, mu) = (1.0, 2.0, 0.5);
        let s = exp1(alpha, beta, mu, 1, MarkFactor::Constant);
        let n = 2_000;
        let mut waits: Vec<f64> = (0..n)
            .map(|seed| {
                let st = simulate(&SimConfig::new(s.clone(), 200.0, 5_000 + seed)).unwrap();
                st.events()[1].time - st.events()[0].time
            })
            .collect();
        waits.sort_by(f64::total_cmp);
        let hazard = |w: f64| {
            let steps = 400;
            let h = w / steps as f64;
            (0..steps)
                .map(|k| {
                    let a = k as f64 * h;
                    let lam = |x: f64| mu + alpha * (-beta * x).exp();
                    h / 6.0 * (lam(a) + 4.0 * lam(a + 0.5 * h) + lam(a + h))
                })
                .sum::<f64>()
        };
        let ks = waits
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let f = 1.0 - (-hazard(w)).exp();
                ((k + 1) as f64 / n as f64 - f).abs().max((f - k as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / (n as f64).sqrt(), "KS {ks}");
    }

    #[test]
    fn mark_frequencies_follow_pmf() {
        let mut s = exp1(0.5, 2.0, 1.0, 4, MarkFactor::Linear);
        s.mark_pmfs[0] = vec![0.1, 0.2, 0.3, 0.4];
        let stream = simulate(&SimConfig::new(s.clone(), 2e4, 4)).unwrap();
        let n = stream.len() as f64;
        assert!(n > 1e4);
        let mut counts = [0.0; 4];
        for e in stream.events() {
            counts[(e.mark - 1) as usize] += 1.0;
        }
        let chi2: f64 = counts.iter().zip(&s.mark_pmfs[0]).map(|(c, p)| (c - n * p).powi(2) / (n * p)).sum();
        // 1% critical value with 3 degrees of freedom
        assert!(chi2 < 11.345, "chi2 {chi2}");
    }
}
