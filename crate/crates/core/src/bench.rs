//! Throughput measurement over a seeded synthetic stream.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::event::{parse_stream, serialize_stream, Event, EventStream, Polarity, SensorGeometry};
use crate::tore::{ToreConfig, ToreError, ToreState};

/// Random stream with non-decreasing timestamps (mean gap 1 µs).
pub fn synthetic_stream(geometry: SensorGeometry, n: usize, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (geometry.width() as u16, geometry.height() as u16);
    let mut t = 0u64;
    let events = (0..n)
        .map(|_| {
            t += rng.random_range(0..=2);
            let p = if rng.random::<bool>() {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            Event::new(t, rng.random_range(0..w), rng.random_range(0..h), p)
        })
        .collect();
    EventStream::new(geometry, events).expect("generated events are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub events: usize,
    pub parse_s: f64,
    pub parse_events_per_s: f64,
    pub ingest_s: f64,
    pub ingest_events_per_s: f64,
    pub windows: usize,
    pub materialize_s: f64,
    pub windows_per_s: f64,
}

fn rate(count: usize, secs: f64) -> f64 {
    count as f64 / secs
}

fn elapsed(t: Instant) -> f64 {
    // keep rates finite on coarse clocks
    t.elapsed().as_secs_f64().max(1e-9)
}

/// Parse and ingest run on the calling thread; materialization may fan out.
pub fn run_bench(
    events: usize,
    windows: usize,
    seed: u64,
    config: ToreConfig,
) -> Result<BenchReport, ToreError> {
    let geometry = SensorGeometry::DAVIS346;
    let bytes = serialize_stream(&synthetic_stream(geometry, events, seed));

    let t = Instant::now();
    let stream = parse_stream(&bytes).expect("serialized stream parses");
    let parse_s = elapsed(t);

    let mut state = ToreState::new(geometry, config);
    let t = Instant::now();
    state.ingest_all(stream.events())?;
    let ingest_s = elapsed(t);

    let t_end = state.latest().unwrap_or(0);
    let t = Instant::now();
    for i in 0..windows {
        std::hint::black_box(state.materialize(t_end + i as u64)?);
    }
    let materialize_s = elapsed(t);

    Ok(BenchReport {
        seed,
        events: stream.len(),
        parse_s,
        parse_events_per_s: rate(stream.len(), parse_s),
        ingest_s,
        ingest_events_per_s: rate(stream.len(), ingest_s),
        windows,
        materialize_s,
        windows_per_s: rate(windows, materialize_s),
    })
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "events = {}", self.events);
        let _ = writeln!(s, "parse_s = {:?}", self.parse_s);
        let _ = writeln!(s, "parse_events_per_s = {:?}", self.parse_events_per_s);
        let _ = writeln!(s, "ingest_s = {:?}", self.ingest_s);
        let _ = writeln!(s, "ingest_events_per_s = {:?}", self.ingest_events_per_s);
        let _ = writeln!(s, "windows = {}", self.windows);
        let _ = writeln!(s, "materialize_s = {:?}", self.materialize_s);
        let _ = writeln!(s, "windows_per_s = {:?}", self.windows_per_s);
        s
    }

    /// Combined parse + ingest rate.
    pub fn pipeline_events_per_s(&self) -> f64 {
        rate(self.events, self.parse_s + self.ingest_s)
    }
}
