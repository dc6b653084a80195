//! Marked multivariate event streams and their CSV form.
//!
//! Components are 0-based in the API and 1-based on disk; marks are values in
//! `1..=M` everywhere because kernels are functions of the mark value.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Seconds since the start of the stream.
    pub time: f64,
    pub component: usize,
    pub mark: u32,
}

/// A contiguous observation interval. Lags are never measured across segments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    horizon: f64,
    dimension: usize,
    mark_cardinality: u32,
    segments: Vec<Segment>,
}

impl EventStream {
    pub fn new(events: Vec<Event>, horizon: f64, dimension: usize, mark_cardinality: u32) -> Result<Self> {
        let segments = vec![Segment { start: 0.0, end: horizon }];
        Self::with_segments(events, horizon, dimension, mark_cardinality, segments)
    }

    pub fn with_segments(
        events: Vec<Event>,
        horizon: f64,
        dimension: usize,
        mark_cardinality: u32,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if dimension == 0 || mark_cardinality == 0 {
            return Err(HawkesError::arg("dimension and mark cardinality must be >= 1"));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(HawkesError::arg(format!("invalid horizon {horizon}")));
        }
        let mut last_global = f64::NEG_INFINITY;
        let mut last_per_component = vec![f64::NEG_INFINITY; dimension];
        for (n, e) in events.iter().enumerate() {
            if e.component >= dimension {
                return Err(HawkesError::arg(format!("event {n}: component {} out of range", e.component + 1)));
            }
            if e.mark == 0 || e.mark > mark_cardinality {
                return Err(HawkesError::arg(format!("event {n}: mark {} outside 1..={mark_cardinality}", e.mark)));
            }
            if !(e.time >= 0.0) || e.time > horizon {
                return Err(HawkesError::arg(format!("event {n}: time {} outside [0, {horizon}]", e.time)));
            }
            if e.time < last_global {
                return Err(HawkesError::arg(format!("event {n}: times not sorted")));
            }
            if e.time <= last_per_component[e.component] {
                return Err(HawkesError::arg(format!(
                    "event {n}: times of component {} not strictly increasing",
                    e.component + 1
                )));
            }
            last_global = e.time;
            last_per_component[e.component] = e.time;
        }
        let mut prev_end = 0.0;
        for s in &segments {
            if !(s.start >= prev_end && s.end >= s.start && s.end <= horizon) {
                return Err(HawkesError::arg("segments must be ordered, disjoint and inside the horizon"));
            }
            prev_end = s.end;
        }
        Ok(Self { events, horizon, dimension, mark_cardinality, segments })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn mark_cardinality(&self) -> u32 {
        self.mark_cardinality
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Total observed time, i.e. the summed segment lengths.
    pub fn observed_time(&self) -> f64 {
        self.segments.iter().map(|s| s.end - s.start).sum()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.dimension];
        for e in &self.events {
            c[e.component] += 1;
        }
        c
    }

    /// Event times and marks of one component, in order.
    pub fn component(&self, j: usize) -> Vec<(f64, u32)> {
        self.events.iter().filter(|e| e.component == j).map(|e| (e.time, e.mark)).collect()
    }

    /// Mirror the stream in time: `t -> horizon - t`, segments included.
    pub fn time_reversed(&self) -> Self {
        let h = self.horizon;
        let events = self
            .events
            .iter()
            .rev()
            .map(|e| Event { time: h - e.time, ..*e })
            .collect();
        let segments = self.segments.iter().rev().map(|s| Segment { start: h - s.end, end: h - s.start }).collect();
        Self { events, horizon: h, dimension: self.dimension, mark_cardinality: self.mark_cardinality, segments }
    }

    pub fn write_csv<W: Write>(&self, mut w: W, provenance: &[(String, String)]) -> Result<()> {
        writeln!(w, "# neural-hawkes event stream")?;
        for (k, v) in provenance {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "# horizon={}", self.horizon)?;
        writeln!(w, "# dimension={}", self.dimension)?;
        writeln!(w, "# marks={}", self.mark_cardinality)?;
        if !(self.segments.len() == 1 && self.segments[0].start == 0.0 && self.segments[0].end == self.horizon) {
            let s: Vec<String> = self.segments.iter().map(|s| format!("{}:{}", s.start, s.end)).collect();
            writeln!(w, "# segments={}", s.join(";"))?;
        }
        writeln!(w, "time,component,mark")?;
        for e in &self.events {
            writeln!(w, "{},{},{}", e.time, e.component + 1, e.mark)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut horizon = None;
        let mut dimension = None;
        let mut marks = None;
        let mut segments = None;
        let mut events = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.trim().split_once('=') {
                    let v = v.trim();
                    let bad = || HawkesError::arg(format!("line {}: bad value for {k}", lineno + 1));
                    match k.trim() {
                        "horizon" => horizon = Some(v.parse::<f64>().map_err(|_| bad())?),
                        "dimension" => dimension = Some(v.parse::<usize>().map_err(|_| bad())?),
                        "marks" => marks = Some(v.parse::<u32>().map_err(|_| bad())?),
                        "segments" => segments = Some(parse_segments(v).ok_or_else(bad)?),
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "time,component,mark" {
                    return Err(HawkesError::arg("event CSV header must be `time,component,mark`"));
                }
                saw_header = true;
                continue;
            }
            let mut it = line.split(',');
            let bad = || HawkesError::arg(format!("line {}: malformed event row", lineno + 1));
            let time: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let component: usize = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let mark: u32 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if component == 0 || it.next().is_some() {
                return Err(bad());
            }
            events.push(Event { time, component: component - 1, mark });
        }
        if !saw_header {
            return Err(HawkesError::arg("missing `time,component,mark` header"));
        }
        let horizon = horizon.unwrap_or_else(|| events.last().map_or(0.0, |e| e.time));
        let dimension = dimension.unwrap_or_else(|| events.iter().map(|e| e.component + 1).max().unwrap_or(1));
        let marks = marks.unwrap_or_else(|| events.iter().map(|e| e.mark).max().unwrap_or(1));
        let segments = segments.unwrap_or_else(|| vec![Segment { start: 0.0, end: horizon }]);
        Self::with_segments(events, horizon, dimension, marks, segments)
    }
}

fn parse_segments(v: &str) -> Option<Vec<Segment>> {
    v.split(';')
        .map(|p| {
            let (a, b) = p.split_once(':')?;
            Some(Segment { start: a.trim().parse().ok()?, end: b.trim().parse().ok()? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time: f64, component: usize, mark: u32) -> Event {
        Event { time, component, mark }
    }

    #[test]
    fn rejects_broken_invariants() {
        assert!(EventStream::new(vec![ev(1.0, 0, 1), ev(0.5, 1, 1)], 2.0, 2, 1).is_err());
        assert!(EventStream::new(vec![ev(1.0, 0, 1), ev(1.0, 0, 1)], 2.0, 2, 1).is_err());
        assert!(EventStream::new(vec![ev(1.0, 2, 1)], 2.0, 2, 1).is_err());
        assert!(EventStream::new(vec![ev(1.0, 0, 3)], 2.0, 2, 2).is_err());
        assert!(EventStream::new(vec![ev(3.0, 0, 1)], 2.0, 2, 1).is_err());
        // simultaneous events of different components are fine
        assert!(EventStream::new(vec![ev(1.0, 0, 1), ev(1.0, 1, 1)], 2.0, 2, 1).is_ok());
    }

    #[test]
    fn csv_round_trip_keeps_microseconds() {
        let s = EventStream::with_segments(
            vec![ev(0.000001, 0, 2), ev(1234.567891, 1, 1), ev(86399.999999, 0, 3)],
            86400.0,
            2,
            3,
            vec![Segment { start: 0.0, end: 43200.0 }, Segment { start: 43200.0, end: 86400.0 }],
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &[("seed".into(), "3".into())]).unwrap();
        let back = EventStream::read_csv(&buf[..]).unwrap();
        assert_eq!(back, s);
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2, &[("seed".into(), "3".into())]).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn header_is_required() {
        assert!(EventStream::read_csv(&b"1.0,1,1\n"[..]).is_err());
    }
}
