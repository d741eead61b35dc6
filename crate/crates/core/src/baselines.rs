//! Comparison representations: voxel grid, count frame and time surface.

use thiserror::Error;

use crate::event::{EventStream, Polarity, SensorGeometry};

pub const DEFAULT_VOXEL_BINS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("window must be positive")]
    ZeroWindow,
    #[error("bin count must be positive")]
    ZeroBins,
}

/// Half-open time interval `[start_us, start_us + duration_us)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start_us: u64,
    pub duration_us: u64,
}

impl TimeWindow {
    pub fn new(start_us: u64, duration_us: u64) -> Result<Self, BaselineError> {
        if duration_us == 0 {
            return Err(BaselineError::ZeroWindow);
        }
        Ok(Self {
            start_us,
            duration_us,
        })
    }

    pub fn end_us(&self) -> u64 {
        self.start_us + self.duration_us
    }
}

/// `B × H × W` signed per-bin event counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    pub geometry: SensorGeometry,
    pub bins: usize,
    pub data: Vec<i32>,
}

impl VoxelGrid {
    pub fn get(&self, bin: usize, x: u16, y: u16) -> i32 {
        self.data[bin * self.geometry.pixels() + self.geometry.index(x, y)]
    }
}

/// `2 × H × W` per-polarity counts (positive plane first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountFrame {
    pub geometry: SensorGeometry,
    pub data: Vec<u32>,
}

impl CountFrame {
    pub fn total(&self) -> u64 {
        self.data.iter().map(|&c| c as u64).sum()
    }
}

/// `2 × H × W` most recent timestamp per pixel and polarity at or before `query_us`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSurface {
    pub geometry: SensorGeometry,
    pub query_us: u64,
    pub data: Vec<Option<u64>>,
}

impl TimeSurface {
    pub fn get(&self, x: u16, y: u16, polarity: Polarity) -> Option<u64> {
        self.data[polarity.index() * self.geometry.pixels() + self.geometry.index(x, y)]
    }
}

pub fn build_voxel_grid(
    stream: &EventStream,
    window: TimeWindow,
    bins: usize,
) -> Result<VoxelGrid, BaselineError> {
    if bins == 0 {
        return Err(BaselineError::ZeroBins);
    }
    let g = stream.geometry();
    let mut data = vec![0i32; bins * g.pixels()];
    for e in stream.time_range(window.start_us, window.end_us()) {
        let offset = (e.t - window.start_us) as u128;
        let bin = (offset * bins as u128 / window.duration_us as u128) as usize;
        data[bin * g.pixels() + g.index(e.x, e.y)] += e.polarity.as_i8() as i32;
    }
    Ok(VoxelGrid {
        geometry: g,
        bins,
        data,
    })
}

pub fn build_count_frame(stream: &EventStream, window: TimeWindow) -> CountFrame {
    let g = stream.geometry();
    let mut data = vec![0u32; 2 * g.pixels()];
    for e in stream.time_range(window.start_us, window.end_us()) {
        data[e.polarity.index() * g.pixels() + g.index(e.x, e.y)] += 1;
    }
    CountFrame { geometry: g, data }
}

pub fn build_time_surface(stream: &EventStream, query_us: u64) -> TimeSurface {
    let g = stream.geometry();
    let mut data = vec![None; 2 * g.pixels()];
    for e in stream.time_range(0, query_us.saturating_add(1)) {
        data[e.polarity.index() * g.pixels() + g.index(e.x, e.y)] = Some(e.t);
    }
    TimeSurface {
        geometry: g,
        query_us,
        data,
    }
}
