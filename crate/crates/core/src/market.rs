//! Trade prints to event streams: same-timestamp aggregation, volume marks,
//! intraday seasonality and daily windows.

use std::io::{Read, Write};

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::events::{Event, EventStream, Segment};
use crate::kernel::KernelSpec;
use crate::rng;
use crate::simulate::simulate_events;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// One row of a `timestamp_us,pair,volume_usd` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub timestamp_us: i64,
    pub pair: String,
    pub volume_usd: f64,
}

pub fn read_trades<R: Read>(r: R) -> Result<Vec<TradeRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp_us", "pair", "volume_usd"] {
        return Err(HawkesError::arg("trade CSV header must be `timestamp_us,pair,volume_usd`"));
    }
    let mut out = Vec::new();
    for (n, row) in reader.deserialize::<TradeRecord>().enumerate() {
        let row = row.map_err(|e| HawkesError::arg(format!("trade row {}: {e}", n + 1)))?;
        if !(row.volume_usd > 0.0) || !row.volume_usd.is_finite() {
            return Err(HawkesError::arg(format!("trade row {}: volume must be positive", n + 1)));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_trades<W: Write>(w: W, trades: &[TradeRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for t in trades {
        writer.serialize(t).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> HawkesError {
    HawkesError::arg(format!("trade CSV: {e}"))
}

/// All trades of one pair sharing a timestamp, merged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTrade {
    pub timestamp_us: i64,
    pub volume_usd: f64,
}

/// Merges same-timestamp trades of a single pair, summing their volumes.
pub fn aggregate_trades(records: &[TradeRecord]) -> Result<Vec<AggregatedTrade>> {
    let mut out: Vec<AggregatedTrade> = Vec::with_capacity(records.len());
    for (n, r) in records.iter().enumerate() {
        if r.pair != records[0].pair {
            return Err(HawkesError::arg(format!("trade {n}: pair {} differs from {}", r.pair, records[0].pair)));
        }
        if !(r.volume_usd > 0.0) {
            return Err(HawkesError::arg(format!("trade {n}: volume must be positive")));
        }
        match out.last_mut() {
            Some(last) if last.timestamp_us == r.timestamp_us => last.volume_usd += r.volume_usd,
            Some(last) if last.timestamp_us > r.timestamp_us => {
                return Err(HawkesError::arg(format!("trade {n}: timestamps not sorted")));
            }
            _ => out.push(AggregatedTrade { timestamp_us: r.timestamp_us, volume_usd: r.volume_usd }),
        }
    }
    Ok(out)
}

/// Mark `m` covers `(edges[m-2], edges[m-1]]`; the first interval starts at 0
/// and the last one is open-ended, so there are `edges.len() + 1` marks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeBinning {
    pub edges: Vec<f64>,
}

impl VolumeBinning {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.iter().any(|e| !(*e > 0.0) || !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HawkesError::arg("volume edges must be positive and strictly increasing"));
        }
        Ok(Self { edges })
    }

    /// Fifteen marks on a rough log grid from 100 to 100,000 USD.
    pub fn usd_log_grid() -> Self {
        Self {
            edges: vec![
                100.0, 170.0, 290.0, 490.0, 840.0, 1_425.0, 2_425.0, 4_125.0, 7_000.0, 12_000.0, 20_300.0, 34_500.0,
                58_750.0, 100_000.0,
            ],
        }
    }

    pub fn marks(&self) -> u32 {
        self.edges.len() as u32 + 1
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let edges: Vec<f64> = serde_json::from_str(s).map_err(|e| HawkesError::arg(format!("binning edges: {e}")))?;
        Self::new(edges)
    }
}

pub fn bin_volume(volume: f64, binning: &VolumeBinning) -> u32 {
    binning.edges.partition_point(|&e| e < volume) as u32 + 1
}

/// Per-component totals of an ingested trade set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub pairs: Vec<String>,
    pub raw_trades: Vec<usize>,
    pub events: Vec<usize>,
    pub volume_usd: Vec<f64>,
    pub session_start_us: i64,
}

/// Builds a stream with one component per entry of `pairs`. Times are seconds
/// from `session_start_us`; the horizon runs to `session_end_us` or, when
/// absent, to the last event.
pub fn trades_to_stream(
    records: &[TradeRecord],
    pairs: &[String],
    binning: &VolumeBinning,
    session_start_us: i64,
    session_end_us: Option<i64>,
) -> Result<(EventStream, IngestSummary)> {
    if pairs.is_empty() {
        return Err(HawkesError::arg("select at least one pair"));
    }
    let mut events = Vec::new();
    let mut summary = IngestSummary {
        pairs: pairs.to_vec(),
        raw_trades: Vec::new(),
        events: Vec::new(),
        volume_usd: Vec::new(),
        session_start_us,
    };
    for (c, pair) in pairs.iter().enumerate() {
        let own: Vec<TradeRecord> = records.iter().filter(|r| &r.pair == pair).cloned().collect();
        let merged = aggregate_trades(&own)?;
        if let Some(first) = merged.first() {
            if first.timestamp_us < session_start_us {
                return Err(HawkesError::arg(format!("{pair}: trade before the session start")));
            }
        }
        summary.raw_trades.push(own.len());
        summary.events.push(merged.len());
        summary.volume_usd.push(merged.iter().map(|t| t.volume_usd).sum());
        events.extend(merged.iter().map(|t| Event {
            time: (t.timestamp_us - session_start_us) as f64 * 1e-6,
            component: c,
            mark: bin_volume(t.volume_usd, binning),
        }));
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.component.cmp(&b.component)));
    let last = events.last().map_or(0.0, |e| e.time);
    let horizon = match session_end_us {
        Some(end) => {
            let h = (end - session_start_us) as f64 * 1e-6;
            if h < last {
                return Err(HawkesError::arg("trade after the session end"));
            }
            h
        }
        None => last,
    };
    Ok((EventStream::new(events, horizon, pairs.len(), binning.marks())?, summary))
}

/// Keeps events whose clock time lies in `[start, end)` seconds of the UTC day
/// and lays the daily windows end to end, one segment per day, so no lag is
/// ever measured across two days. `clock_offset` is the clock time of `t = 0`.
pub fn window_filter(stream: &EventStream, start: f64, end: f64, clock_offset: f64) -> Result<EventStream> {
    if !(0.0 <= start && start < end && end <= SECONDS_PER_DAY) || !(0.0..SECONDS_PER_DAY).contains(&clock_offset) {
        return Err(HawkesError::arg("window needs 0 <= start < end <= 86400 and an offset within one day"));
    }
    let horizon = stream.horizon();
    let events = stream.events();
    let mut kept = Vec::new();
    let mut segments = Vec::new();
    let mut cursor = 0.0;
    let last_day = ((horizon + clock_offset) / SECONDS_PER_DAY).floor() as i64;
    for day in 0..=last_day {
        let base = day as f64 * SECONDS_PER_DAY - clock_offset;
        // intersect the window with every observed segment of that day
        for seg in stream.segments() {
            let lo = (base + start).max(seg.start);
            let hi = (base + end).min(seg.end);
            if hi <= lo {
                continue;
            }
            let from = events.partition_point(|e| e.time < lo);
            let to = events.partition_point(|e| e.time < hi);
            kept.extend(events[from..to].iter().map(|e| Event { time: cursor + (e.time - lo), ..*e }));
            segments.push(Segment { start: cursor, end: cursor + (hi - lo) });
            cursor += hi - lo;
        }
    }
    EventStream::with_segments(kept, cursor, stream.dimension(), stream.mark_cardinality(), segments)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub start_minute: f64,
    /// Events per second, averaged over days.
    pub mean_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntradayProfile {
    pub bin_minutes: f64,
    pub days_used: usize,
    pub bins: Vec<ProfileBin>,
}

/// Mean event rate per clock bin over the complete days of `stream`, with a
/// normal 95% interval across days. Days without events are skipped.
pub fn intraday_profile(stream: &EventStream, bin_minutes: f64, clock_offset: f64) -> Result<IntradayProfile> {
    let per_day = 1440.0 / bin_minutes;
    if !(bin_minutes > 0.0) || (per_day - per_day.round()).abs() > 1e-9 {
        return Err(HawkesError::arg("bin length must divide 24 hours"));
    }
    if !(0.0..SECONDS_PER_DAY).contains(&clock_offset) {
        return Err(HawkesError::arg("clock offset must lie within one day"));
    }
    let n_bins = per_day.round() as usize;
    let width = bin_minutes * 60.0;
    let events = stream.events();
    // first day whose midnight is at or after t = 0
    let first_day = (clock_offset / SECONDS_PER_DAY).ceil() as i64;
    let mut rates: Vec<Vec<f64>> = Vec::new();
    let mut day = first_day;
    loop {
        let base = day as f64 * SECONDS_PER_DAY - clock_offset;
        if base + SECONDS_PER_DAY > stream.horizon() + 1e-9 {
            break;
        }
        let from = events.partition_point(|e| e.time < base);
        let to = events.partition_point(|e| e.time < base + SECONDS_PER_DAY);
        if from == to {
            log::warn!("day {day} has no events; skipped");
        } else {
            let mut counts = vec![0.0; n_bins];
            for e in &events[from..to] {
                let b = (((e.time - base) / width) as usize).min(n_bins - 1);
                counts[b] += 1.0;
            }
            rates.push(counts.into_iter().map(|c| c / width).collect());
        }
        day += 1;
    }
    if rates.is_empty() {
        return Err(HawkesError::arg("the stream covers no complete day with events"));
    }
    let n = rates.len() as f64;
    let bins = (0..n_bins)
        .map(|b| {
            let mean = rates.iter().map(|r| r[b]).sum::<f64>() / n;
            let half = if rates.len() > 1 {
                let var = rates.iter().map(|r| (r[b] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            ProfileBin { start_minute: b as f64 * bin_minutes, mean_rate: mean, ci_low: mean - half, ci_high: mean + half }
        })
        .collect();
    Ok(IntradayProfile { bin_minutes, days_used: rates.len(), bins })
}

/// Trade prints from a simulated process: component `c` becomes `pairs[c]`
/// and volumes are log-normal with the given parameters of `ln(volume)`.
pub fn synthetic_trades(
    spec: &KernelSpec,
    pairs: &[String],
    n_events: usize,
    seed: u64,
    session_start_us: i64,
    log_volume_mean: f64,
    log_volume_sd: f64,
) -> Result<Vec<TradeRecord>> {
    if pairs.len() != spec.dimension {
        return Err(HawkesError::arg("one pair name per component is required"));
    }
    let volumes = LogNormal::new(log_volume_mean, log_volume_sd)
        .map_err(|e| HawkesError::arg(format!("volume distribution: {e}")))?;
    let stream = simulate_events(spec, n_events, seed)?;
    let mut rng = rng::stream(seed, rng::SYNTHETIC_VOLUMES);
    Ok(stream
        .events()
        .iter()
        .map(|e| TradeRecord {
            timestamp_us: session_start_us + (e.time * 1e6).round() as i64,
            pair: pairs[e.component].clone(),
            volume_usd: volumes.sample(&mut rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{estimate_second_order, StatGrid};
    use proptest::prelude::*;
    use rand::Rng;

    fn trade(ts: i64, v: f64) -> TradeRecord {
        TradeRecord { timestamp_us: ts, pair: "BTC-USD".into(), volume_usd: v }
    }

    #[test]
    fn same_timestamp_volumes_are_summed() {
        let a = aggregate_trades(&[trade(5, 10.0), trade(5, 20.0), trade(5, 30.0), trade(9, 1.0)]).unwrap();
        assert_eq!(a, vec![AggregatedTrade { timestamp_us: 5, volume_usd: 60.0 }, AggregatedTrade { timestamp_us: 9, volume_usd: 1.0 }]);
        let distinct = [trade(1, 2.0), trade(2, 3.0)];
        assert_eq!(aggregate_trades(&distinct).unwrap().len(), 2);
        assert!(aggregate_trades(&[trade(2, 1.0), trade(1, 1.0)]).unwrap_err().is_argument_error());
    }

    #[test]
    fn volume_marks() {
        let b = VolumeBinning::usd_log_grid();
        assert_eq!(b.marks(), 15);
        assert_eq!(bin_volume(50.0, &b), 1);
        assert_eq!(bin_volume(100.0, &b), 1);
        assert_eq!(bin_volume(100.01, &b), 2);
        assert_eq!(bin_volume(150_000.0, &b), 15);
        assert_eq!(bin_volume(100_000.0, &b), 14);
        assert!(VolumeBinning::new(vec![10.0, 5.0]).is_err());
        assert_eq!(VolumeBinning::from_json("[100, 1000]").unwrap().marks(), 3);
    }

    #[test]
    fn csv_round_trip_keeps_microseconds() {
        let trades = vec![trade(1_700_000_000_123_456, 12.5), trade(1_700_000_000_123_457, 7.0)];
        let mut buf = Vec::new();
        write_trades(&mut buf, &trades).unwrap();
        assert!(buf.starts_with(b"timestamp_us,pair,volume_usd\n"));
        assert_eq!(read_trades(&buf[..]).unwrap(), trades);
        assert!(read_trades(&b"time,pair,volume\n1,a,2\n"[..]).is_err());
        assert!(read_trades(&b"timestamp_us,pair,volume_usd\n1,a,-2\n"[..]).is_err());
    }

    #[test]
    fn stream_round_trip_recovers_timestamps() {
        let start = 1_700_000_000_000_000;
        let mut rng = rng::stream(3, 0);
        let mut ts = start;
        let trades: Vec<TradeRecord> = (0..500)
            .map(|_| {
                ts += rng.gen_range(1..5_000_000);
                trade(ts, rng.gen_range(1.0..1e5))
            })
            .collect();
        let (stream, summary) =
            trades_to_stream(&trades, &["BTC-USD".into()], &VolumeBinning::usd_log_grid(), start, None).unwrap();
        assert_eq!(summary.events[0], 500);
        let mut buf = Vec::new();
        stream.write_csv(&mut buf, &[]).unwrap();
        let back = EventStream::read_csv(&buf[..]).unwrap();
        for (e, t) in back.events().iter().zip(&trades) {
            assert_eq!(start + (e.time * 1e6).round() as i64, t.timestamp_us);
        }
    }

    fn day_stream(times: Vec<f64>, horizon: f64) -> EventStream {
        let events = times.into_iter().map(|time| Event { time, component: 0, mark: 1 }).collect();
        EventStream::new(events, horizon, 1, 1).unwrap()
    }

    #[test]
    fn full_day_window_is_identity() {
        let s = day_stream(vec![1.0, 100.0, 50_000.0], SECONDS_PER_DAY);
        let w = window_filter(&s, 0.0, SECONDS_PER_DAY, 0.0).unwrap();
        assert_eq!(w.events(), s.events());
        assert_eq!(w.horizon(), s.horizon());
    }

    #[test]
    fn window_is_closed_open_and_segmented() {
        let (start, end) = (7.0 * 3600.0, 12.0 * 3600.0);
        let day2 = SECONDS_PER_DAY;
        let s = day_stream(vec![start, start + 5.0, end, day2 + start + 1.0, day2 + end - 1.0], 2.0 * SECONDS_PER_DAY);
        let w = window_filter(&s, start, end, 0.0).unwrap();
        let times: Vec<f64> = w.events().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![0.0, 5.0, 18_001.0, 35_999.0]);
        assert_eq!(w.horizon(), 36_000.0);
        assert_eq!(w.segments().len(), 2);
    }

    #[test]
    fn windowed_stats_count_no_cross_day_pairs() {
        // the last event of day 1 and the first of day 2 sit 1 s apart once re-based
        let (start, end) = (0.0, 100.0);
        let s = day_stream(vec![10.0, 99.5, SECONDS_PER_DAY + 0.5, SECONDS_PER_DAY + 60.0], 2.0 * SECONDS_PER_DAY);
        let w = window_filter(&s, start, end, 0.0).unwrap();
        let grid = StatGrid::uniform(10, 2.0).unwrap();
        let stats = estimate_second_order(&w, &grid).unwrap();
        let lambda = stats.rates[0];
        // every observed lag pair would push some bin above -Λ
        for b in 0..grid.n_bins() {
            assert_eq!(stats.g(0, 0, b, 1), -lambda, "bin {b}");
        }
    }

    #[test]
    fn profile_has_288_flat_bins_for_constant_rate() {
        let mut rng = rng::stream(11, 0);
        let days = 20.0;
        let mut t = 0.0;
        let mut times = Vec::new();
        loop {
            t += -(1.0 - rng.gen::<f64>()).ln() / 0.5;
            if t >= days * SECONDS_PER_DAY {
                break;
            }
            times.push(t);
        }
        let s = day_stream(times, days * SECONDS_PER_DAY);
        let p = intraday_profile(&s, 5.0, 0.0).unwrap();
        assert_eq!(p.bins.len(), 288);
        assert_eq!(p.days_used, 20);
        let inside = p.bins.iter().filter(|b| b.ci_low <= 0.5 && 0.5 <= b.ci_high).count();
        assert!(inside as f64 >= 0.9 * 288.0, "{inside} of 288 intervals cover the true rate");
        assert!(intraday_profile(&s, 7.0, 0.0).is_err());
    }

    #[test]
    fn profile_detects_a_doubled_block() {
        let mut rng = rng::stream(12, 0);
        let days = 10.0;
        let mut t = 0.0;
        let mut times = Vec::new();
        // thinning with a 4-hour block at twice the rate
        loop {
            t += -(1.0 - rng.gen::<f64>()).ln() / 0.4;
            if t >= days * SECONDS_PER_DAY {
                break;
            }
            let clock = t % SECONDS_PER_DAY;
            let rate = if (8.0 * 3600.0..12.0 * 3600.0).contains(&clock) { 0.4 } else { 0.2 };
            if rng.gen::<f64>() * 0.4 < rate {
                times.push(t);
            }
        }
        let p = intraday_profile(&day_stream(times, days * SECONDS_PER_DAY), 60.0, 0.0).unwrap();
        let block: f64 = p.bins[8..12].iter().map(|b| b.mean_rate).sum::<f64>() / 4.0;
        let rest: f64 = p.bins.iter().enumerate().filter(|(k, _)| !(8..12).contains(k)).map(|(_, b)| b.mean_rate).sum::<f64>() / 20.0;
        assert!((block / rest - 2.0).abs() < 0.1, "ratio {}", block / rest);
    }

    #[test]
    fn empty_days_are_skipped() {
        let s = day_stream(vec![10.0, 2.0 * SECONDS_PER_DAY + 10.0], 3.0 * SECONDS_PER_DAY);
        assert_eq!(intraday_profile(&s, 60.0, 0.0).unwrap().days_used, 2);
    }

    #[test]
    fn synthetic_trades_ingest_back() {
        let spec = crate::presets::benchmark_exponential();
        let pairs: Vec<String> = vec!["BTC-USD".into(), "ETH-USD".into()];
        let trades = synthetic_trades(&spec, &pairs, 2_000, 4, 0, 6.0, 2.0).unwrap();
        assert_eq!(trades, synthetic_trades(&spec, &pairs, 2_000, 4, 0, 6.0, 2.0).unwrap());
        let mut by_pair = trades.clone();
        by_pair.sort_by(|a, b| a.pair.cmp(&b.pair).then(a.timestamp_us.cmp(&b.timestamp_us)));
        let (stream, summary) = trades_to_stream(&by_pair, &pairs, &VolumeBinning::usd_log_grid(), 0, None).unwrap();
        assert_eq!(summary.raw_trades.iter().sum::<usize>(), trades.len());
        assert_eq!(stream.len(), summary.events.iter().sum::<usize>());
        assert_eq!(stream.mark_cardinality(), 15);
    }

    proptest! {
        #[test]
        fn aggregate_then_bin_is_idempotent(
            steps in proptest::collection::vec((0i64..3, 1.0f64..1e6), 1..60),
        ) {
            let mut ts = 0;
            let trades: Vec<TradeRecord> = steps.iter().map(|&(dt, v)| { ts += dt; trade(ts, v) }).collect();
            let once = aggregate_trades(&trades).unwrap();
            let again: Vec<TradeRecord> = once.iter().map(|a| trade(a.timestamp_us, a.volume_usd)).collect();
            let twice = aggregate_trades(&again).unwrap();
            prop_assert_eq!(&once, &twice);
            let b = VolumeBinning::usd_log_grid();
            let marks: Vec<u32> = once.iter().map(|a| bin_volume(a.volume_usd, &b)).collect();
            let marks2: Vec<u32> = twice.iter().map(|a| bin_volume(a.volume_usd, &b)).collect();
            prop_assert_eq!(marks, marks2);
        }

        #[test]
        fn window_keeps_within_day_lags(
            raw in proptest::collection::vec(0.0f64..3.0 * SECONDS_PER_DAY, 2..80),
            start_h in 0u32..20, len_h in 1u32..4,
        ) {
            let mut times = raw.clone();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let (start, end) = (start_h as f64 * 3600.0, (start_h + len_h) as f64 * 3600.0);
            let s = day_stream(times.clone(), 3.0 * SECONDS_PER_DAY);
            let w = window_filter(&s, start, end, 0.0).unwrap();
            for day in 0..3 {
                let base = day as f64 * SECONDS_PER_DAY;
                let orig: Vec<f64> = times.iter().copied().filter(|t| *t >= base + start && *t < base + end).collect();
                let seg = w.segments()[day];
                let new: Vec<f64> = w.events().iter().map(|e| e.time).filter(|t| *t >= seg.start && *t < seg.end).collect();
                prop_assert_eq!(orig.len(), new.len());
                for k in 1..orig.len() {
                    prop_assert!(((orig[k] - orig[k - 1]) - (new[k] - new[k - 1])).abs() < 1e-6);
                }
            }
        }
    }
}
