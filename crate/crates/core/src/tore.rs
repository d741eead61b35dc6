//! Modified TORE volumes.
//!
//! Every pixel keeps one FIFO of absolute timestamps per polarity, newest
//! first, capped at `K` entries. Materializing at a query time turns each
//! stored timestamp into a value in `[0, 1]`:
//!
//! ```text
//! Δ  = max(t_query − t, 1 µs)
//! v  = ln Δ
//! v' = clamp(1 − v / ln τ, 0, 0.7) / 0.7
//! ```
//!
//! so the newest events are brightest, anything at least `τ` old is 0, and
//! slots that never saw an event are 0. The volume has `2K` channels laid
//! out as `[positive k=0..K, negative k=0..K]`, each an `H × W` plane.

use rayon::prelude::*;
use thiserror::Error;

use crate::event::{Event, EventStream, SensorGeometry};
use crate::tensor::Tensor3;

pub const DEFAULT_DEPTH: usize = 4;
pub const DEFAULT_TAU_US: u64 = 5_000_000;
/// Values above this fraction of the flipped range are saturated to 1.
pub const SATURATION: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToreError {
    #[error("tau must exceed 1 µs, got {0}")]
    InvalidTau(u64),
    #[error("FIFO depth must be in 1..=255, got {0}")]
    InvalidDepth(usize),
    #[error("event at ({x}, {y}) outside {geometry}")]
    OutOfBounds {
        x: u16,
        y: u16,
        geometry: SensorGeometry,
    },
    #[error("timestamp {t} precedes latest ingested {latest}")]
    TimeRegression { t: u64, latest: u64 },
    #[error("query time {query} precedes latest ingested {latest}")]
    QueryBeforeLatest { query: u64, latest: u64 },
    #[error("geometry mismatch: {expected} vs {actual}")]
    GeometryMismatch {
        expected: SensorGeometry,
        actual: SensorGeometry,
    },
    #[error("volume value {value} at index {index} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },
    #[error("tensor dims do not describe a sensor geometry")]
    InvalidGeometry,
    #[error("volume data length {actual} does not match {expected}")]
    LengthMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToreConfig {
    depth: usize,
    tau_us: u64,
}

impl ToreConfig {
    pub fn new(depth: usize, tau_us: u64) -> Result<Self, ToreError> {
        if depth == 0 || depth > u8::MAX as usize {
            return Err(ToreError::InvalidDepth(depth));
        }
        if tau_us <= 1 {
            return Err(ToreError::InvalidTau(tau_us));
        }
        Ok(Self { depth, tau_us })
    }

    /// FIFO depth `K`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tau_us(&self) -> u64 {
        self.tau_us
    }

    pub fn channels(&self) -> usize {
        2 * self.depth
    }
}

impl Default for ToreConfig {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            tau_us: DEFAULT_TAU_US,
        }
    }
}

/// Value transform for one stored timestamp of age `delta_us`.
#[inline]
pub fn tore_value(delta_us: f64, tau_us: f64) -> f64 {
    let v = delta_us.max(1.0).ln();
    (1.0 - v / tau_us.ln()).clamp(0.0, SATURATION) / SATURATION
}

#[inline]
fn value_at(query: u64, stamp: u64, ln_tau: f64) -> f32 {
    let delta = (query - stamp).max(1) as f64;
    ((1.0 - delta.ln() / ln_tau).clamp(0.0, SATURATION) / SATURATION) as f32
}

/// Per-pixel, per-polarity timestamp FIFOs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToreState {
    geometry: SensorGeometry,
    config: ToreConfig,
    // slot = pixel * 2 + polarity; stamps[slot * K ..][..len[slot]], newest first
    stamps: Vec<u64>,
    lens: Vec<u8>,
    latest: Option<u64>,
}

impl ToreState {
    pub fn new(geometry: SensorGeometry, config: ToreConfig) -> Self {
        let slots = geometry.pixels() * 2;
        Self {
            geometry,
            config,
            stamps: vec![0; slots * config.depth],
            lens: vec![0; slots],
            latest: None,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn config(&self) -> ToreConfig {
        self.config
    }

    pub fn latest(&self) -> Option<u64> {
        self.latest
    }

    #[inline]
    pub fn ingest(&mut self, e: &Event) -> Result<(), ToreError> {
        if !self.geometry.contains(e.x, e.y) {
            return Err(ToreError::OutOfBounds {
                x: e.x,
                y: e.y,
                geometry: self.geometry,
            });
        }
        if let Some(latest) = self.latest {
            if e.t < latest {
                return Err(ToreError::TimeRegression { t: e.t, latest });
            }
        }
        self.latest = Some(e.t);
        let k = self.config.depth;
        let slot = self.geometry.index(e.x, e.y) * 2 + e.polarity.index();
        let fifo = &mut self.stamps[slot * k..(slot + 1) * k];
        let len = self.lens[slot] as usize;
        let keep = len.min(k - 1);
        fifo.copy_within(0..keep, 1);
        fifo[0] = e.t;
        self.lens[slot] = (keep + 1) as u8;
        Ok(())
    }

    pub fn ingest_all<'a, I: IntoIterator<Item = &'a Event>>(
        &mut self,
        events: I,
    ) -> Result<(), ToreError> {
        for e in events {
            self.ingest(e)?;
        }
        Ok(())
    }

    /// Stored timestamps for one pixel and polarity, newest first.
    pub fn fifo(&self, x: u16, y: u16, polarity: crate::event::Polarity) -> &[u64] {
        let k = self.config.depth;
        let slot = self.geometry.index(x, y) * 2 + polarity.index();
        &self.stamps[slot * k..slot * k + self.lens[slot] as usize]
    }

    pub fn materialize(&self, t_query: u64) -> Result<ToreVolume, ToreError> {
        if let Some(latest) = self.latest {
            if t_query < latest {
                return Err(ToreError::QueryBeforeLatest {
                    query: t_query,
                    latest,
                });
            }
        }
        let k = self.config.depth;
        let hw = self.geometry.pixels();
        let ln_tau = (self.config.tau_us as f64).ln();
        let mut data = vec![0f32; 2 * k * hw];
        data.par_chunks_mut(hw)
            .enumerate()
            .for_each(|(channel, plane)| {
                let pol = channel / k;
                let depth = channel % k;
                for (pix, out) in plane.iter_mut().enumerate() {
                    let slot = pix * 2 + pol;
                    if depth < self.lens[slot] as usize {
                        *out = value_at(t_query, self.stamps[slot * k + depth], ln_tau);
                    }
                }
            });
        Ok(ToreVolume {
            geometry: self.geometry,
            channels: 2 * k,
            data,
            query_time_us: t_query,
        })
    }
}

/// Builds a volume from a whole stream in one pass.
pub fn build_tore(
    stream: &EventStream,
    config: ToreConfig,
    t_query: u64,
) -> Result<ToreVolume, ToreError> {
    let mut state = ToreState::new(stream.geometry(), config);
    state.ingest_all(stream.events())?;
    state.materialize(t_query)
}

/// Dense `C × H × W` volume of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToreVolume {
    geometry: SensorGeometry,
    channels: usize,
    data: Vec<f32>,
    query_time_us: u64,
}

impl ToreVolume {
    pub fn zeros(geometry: SensorGeometry, channels: usize, query_time_us: u64) -> Self {
        Self {
            geometry,
            channels,
            data: vec![0.0; channels * geometry.pixels()],
            query_time_us,
        }
    }

    pub fn from_parts(
        geometry: SensorGeometry,
        channels: usize,
        data: Vec<f32>,
        query_time_us: u64,
    ) -> Result<Self, ToreError> {
        let expected = channels * geometry.pixels();
        if data.len() != expected {
            return Err(ToreError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ToreError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            geometry,
            channels,
            data,
            query_time_us,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn query_time_us(&self) -> u64 {
        self.query_time_us
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let hw = self.geometry.pixels();
        &self.data[channel * hw..(channel + 1) * hw]
    }

    #[inline]
    pub fn get(&self, channel: usize, x: u16, y: u16) -> f32 {
        self.data[channel * self.geometry.pixels() + self.geometry.index(x, y)]
    }

    /// Per-pixel maximum over channels.
    pub fn max_activity(&self) -> Vec<f32> {
        let hw = self.geometry.pixels();
        let mut out = vec![0f32; hw];
        for plane in self.data.chunks_exact(hw) {
            for (o, &v) in out.iter_mut().zip(plane) {
                *o = o.max(v);
            }
        }
        out
    }

    /// Applies `f(pixel_index, value)` to every entry; the result is re-validated.
    pub fn map_pixels<F: Fn(usize, f32) -> f32>(&self, f: F) -> Result<ToreVolume, ToreError> {
        let hw = self.geometry.pixels();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % hw, v))
            .collect();
        ToreVolume::from_parts(self.geometry, self.channels, data, self.query_time_us)
    }

    pub fn to_tensor(&self) -> Tensor3 {
        Tensor3::new(
            self.channels,
            self.geometry.height(),
            self.geometry.width(),
            self.data.clone(),
        )
        .expect("volume dims are consistent")
    }

    pub fn from_tensor(t: &Tensor3, query_time_us: u64) -> Result<Self, ToreError> {
        if t.width() > u16::MAX as usize || t.height() > u16::MAX as usize {
            return Err(ToreError::InvalidGeometry);
        }
        let geometry = SensorGeometry::new(t.width() as u16, t.height() as u16)
            .map_err(|_| ToreError::InvalidGeometry)?;
        Self::from_parts(geometry, t.channels(), t.data().to_vec(), query_time_us)
    }
}

/// Result of comparing two materializations of the same state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneWitness {
    pub entries: usize,
    /// Largest `value(t2) − value(t1)` observed; ≤ 0 when decay holds.
    pub max_increase: f32,
}

impl MonotoneWitness {
    pub fn holds(&self) -> bool {
        self.max_increase <= 0.0
    }
}

pub fn check_monotone(state: &ToreState, t1: u64, t2: u64) -> Result<MonotoneWitness, ToreError> {
    assert!(t1 <= t2, "check_monotone requires t1 <= t2");
    let a = state.materialize(t1)?;
    let b = state.materialize(t2)?;
    let max_increase = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| y - x)
        .fold(f32::NEG_INFINITY, f32::max);
    Ok(MonotoneWitness {
        entries: a.data.len(),
        max_increase: if a.data.is_empty() { 0.0 } else { max_increase },
    })
}
