//! Mask application and the early-exit mask reuse scheduler.
//!
//! A backend turns one TORE volume into a [`MaskPlan`]: a mask for the
//! frame it was issued on plus masks for the following frames, each with a
//! quality score (higher is better). The scheduler keeps only the newest
//! plan and reuses its mask for frame `k` while that mask's score is at
//! least `beta`; otherwise it calls the backend again.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::event::SensorGeometry;
use crate::mask::{BinaryMask, SoftMask};
use crate::tore::ToreVolume;

pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatingError {
    #[error("geometry mismatch: expected {expected}, got {got}")]
    GeometryMismatch {
        expected: SensorGeometry,
        got: SensorGeometry,
    },
    #[error("backend returned an empty plan")]
    EmptyPlan,
    #[error("plan has {masks} masks but {scores} scores")]
    PlanLength { masks: usize, scores: usize },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("beta {0} outside [0, 1]")]
    InvalidBeta(f64),
    #[error("no frames to schedule")]
    EmptyInput,
    #[error("backend: {0}")]
    Backend(String),
    #[error("io: {0}")]
    Io(String),
}

/// 1 where `value > threshold`.
pub fn binarize_mask(soft: &SoftMask, threshold: f64) -> BinaryMask {
    // compare at storage precision so 0.1 vs 0.1 stays strict
    let t = threshold as f32;
    let bits = soft.values().iter().map(|&v| v > t).collect();
    BinaryMask::new(soft.geometry(), bits).expect("same geometry")
}

/// Zeroes every channel outside the mask.
pub fn apply_mask(vol: &ToreVolume, mask: &BinaryMask) -> Result<ToreVolume, GatingError> {
    if vol.geometry() != mask.geometry() {
        return Err(GatingError::GeometryMismatch {
            expected: vol.geometry(),
            got: mask.geometry(),
        });
    }
    let bits = mask.bits();
    Ok(vol
        .map_pixels(|pix, v| if bits[pix] { v } else { 0.0 })
        .expect("masking keeps values in range"))
}

/// `1 − MAE` between two binary masks.
pub fn mask_quality_ground_truth(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, GatingError> {
    if pred.geometry() != gt.geometry() {
        return Err(GatingError::GeometryMismatch {
            expected: gt.geometry(),
            got: pred.geometry(),
        });
    }
    let differing = pred
        .bits()
        .iter()
        .zip(gt.bits())
        .filter(|(a, b)| a != b)
        .count();
    Ok(1.0 - differing as f64 / gt.bits().len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    masks: Vec<BinaryMask>,
    scores: Vec<f64>,
    issued_at: usize,
}

impl MaskPlan {
    pub fn new(
        masks: Vec<BinaryMask>,
        scores: Vec<f64>,
        issued_at: usize,
    ) -> Result<Self, GatingError> {
        if masks.is_empty() {
            return Err(GatingError::EmptyPlan);
        }
        if masks.len() != scores.len() {
            return Err(GatingError::PlanLength {
                masks: masks.len(),
                scores: scores.len(),
            });
        }
        if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(GatingError::ScoreOutOfRange(s));
        }
        let g = masks[0].geometry();
        if let Some(m) = masks.iter().find(|m| m.geometry() != g) {
            return Err(GatingError::GeometryMismatch {
                expected: g,
                got: m.geometry(),
            });
        }
        Ok(Self {
            masks,
            scores,
            issued_at,
        })
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn issued_at(&self) -> usize {
        self.issued_at
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Source of mask plans. Must return the same plan for the same input.
pub trait MaskPredictor {
    fn horizon(&self) -> usize;
    fn predict(&self, vol: &ToreVolume, frame: usize) -> Result<MaskPlan, GatingError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleStep {
    pub frame: usize,
    pub recompute: bool,
    pub score_used: f64,
    plan: usize,
    offset: usize,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub steps: Vec<ScheduleStep>,
    pub plans: Vec<MaskPlan>,
    pub backend_time: Duration,
}

impl Schedule {
    pub fn backend_calls(&self) -> usize {
        self.plans.len()
    }

    pub fn mask(&self, frame: usize) -> &BinaryMask {
        let s = &self.steps[frame];
        &self.plans[s.plan].masks[s.offset]
    }

    pub fn recompute_pattern(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.recompute).collect()
    }

    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame,recompute,score_used")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{:?}",
                s.frame,
                u8::from(s.recompute),
                s.score_used
            )?;
        }
        Ok(())
    }
}

pub fn schedule_masks<B: MaskPredictor + ?Sized>(
    frames: &[ToreVolume],
    backend: &B,
    beta: f64,
) -> Result<Schedule, GatingError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(GatingError::InvalidBeta(beta));
    }
    if backend.horizon() == 0 {
        return Err(GatingError::EmptyPlan);
    }
    let mut plans: Vec<MaskPlan> = Vec::new();
    let mut steps = Vec::with_capacity(frames.len());
    let mut backend_time = Duration::ZERO;
    for (k, vol) in frames.iter().enumerate() {
        let reuse = plans.last().and_then(|p| {
            let offset = k - p.issued_at;
            (offset < p.len() && p.scores[offset] >= beta).then_some(offset)
        });
        let (recompute, offset) = match reuse {
            Some(offset) => (false, offset),
            None => {
                let started = Instant::now();
                let mut plan = backend.predict(vol, k)?;
                backend_time += started.elapsed();
                if plan.is_empty() {
                    return Err(GatingError::EmptyPlan);
                }
                if plan.masks[0].geometry() != vol.geometry() {
                    return Err(GatingError::GeometryMismatch {
                        expected: vol.geometry(),
                        got: plan.masks[0].geometry(),
                    });
                }
                plan.issued_at = k;
                plans.push(plan);
                (true, 0)
            }
        };
        let plan = plans.len() - 1;
        steps.push(ScheduleStep {
            frame: k,
            recompute,
            score_used: plans[plan].scores[offset],
            plan,
            offset,
        });
    }
    Ok(Schedule {
        steps,
        plans,
        backend_time,
    })
}

/// Applies the scheduled mask to every frame.
pub fn filter_frames(
    frames: &[ToreVolume],
    schedule: &Schedule,
) -> Result<Vec<ToreVolume>, GatingError> {
    frames
        .iter()
        .enumerate()
        .map(|(k, v)| apply_mask(v, schedule.mask(k)))
        .collect()
}

/// Deterministic non-learned backend.
///
/// Foreground is every pixel whose max channel activity reaches the given
/// percentile of the non-zero activities. A 3×3 closing follows, then only
/// the largest 8-connected component is kept. Future mask `i` is that mask
/// dilated `i` times, scored `max(decay^i, floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMaskBackend {
    pub horizon: usize,
    pub percentile: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for ReferenceMaskBackend {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            percentile: 0.5,
            decay: 0.9,
            floor: 0.0,
        }
    }
}

impl ReferenceMaskBackend {
    pub fn current_mask(&self, vol: &ToreVolume) -> BinaryMask {
        let g = vol.geometry();
        let act = vol.max_activity();
        let mut nonzero: Vec<f32> = act.iter().copied().filter(|&v| v > 0.0).collect();
        if nonzero.is_empty() {
            return BinaryMask::filled(g, false);
        }
        nonzero.sort_by(f32::total_cmp);
        let idx = (self.percentile.clamp(0.0, 1.0) * (nonzero.len() - 1) as f64).floor() as usize;
        let cut = nonzero[idx];
        let fg: Vec<bool> = act.iter().map(|&v| v > 0.0 && v >= cut).collect();
        let closed = erode(&dilate(&fg, g), g);
        let kept = largest_component(&closed, g);
        BinaryMask::new(g, kept).expect("same geometry")
    }
}

impl MaskPredictor for ReferenceMaskBackend {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, vol: &ToreVolume, frame: usize) -> Result<MaskPlan, GatingError> {
        let g = vol.geometry();
        let first = self.current_mask(vol);
        let empty = first.count_ones() == 0;
        let mut masks = Vec::with_capacity(self.horizon);
        let mut scores = Vec::with_capacity(self.horizon);
        let mut bits = first.bits().to_vec();
        for i in 0..self.horizon {
            if i > 0 {
                bits = dilate(&bits, g);
            }
            masks.push(BinaryMask::new(g, bits.clone()).expect("same geometry"));
            let s = if empty {
                self.floor
            } else {
                self.decay.powi(i as i32).max(self.floor)
            };
            scores.push(s);
        }
        MaskPlan::new(masks, scores, frame)
    }
}

/// Serves precomputed per-frame masks; plan `k` covers frames `k..k+N`
/// (clamped to the last mask) with fixed per-offset scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMaskBackend {
    masks: Vec<BinaryMask>,
    scores: Vec<f64>,
}

impl ExternalMaskBackend {
    pub fn new(masks: Vec<BinaryMask>, scores: Vec<f64>) -> Result<Self, GatingError> {
        if masks.is_empty() || scores.is_empty() {
            return Err(GatingError::EmptyPlan);
        }
        if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(GatingError::ScoreOutOfRange(s));
        }
        Ok(Self { masks, scores })
    }

    /// Horizon `n`, scores `max(decay^i, floor)`.
    pub fn with_decay(
        masks: Vec<BinaryMask>,
        n: usize,
        decay: f64,
        floor: f64,
    ) -> Result<Self, GatingError> {
        let scores = (0..n).map(|i| decay.powi(i as i32).max(floor)).collect();
        Self::new(masks, scores)
    }
}

impl MaskPredictor for ExternalMaskBackend {
    fn horizon(&self) -> usize {
        self.scores.len()
    }

    fn predict(&self, _vol: &ToreVolume, frame: usize) -> Result<MaskPlan, GatingError> {
        let last = self.masks.len() - 1;
        let masks = (0..self.scores.len())
            .map(|i| self.masks[(frame + i).min(last)].clone())
            .collect();
        MaskPlan::new(masks, self.scores.clone(), frame)
    }
}

/// Reads per-frame masks from an MSK1 bitset file or a directory of PGM files.
pub fn read_masks(path: &Path) -> Result<Vec<BinaryMask>, GatingError> {
    let io = |e: String| GatingError::Io(format!("{}: {e}", path.display()));
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| io(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| io(e.to_string()))?;
                BinaryMask::from_pgm(&bytes).map_err(|e| io(e.to_string()))
            })
            .collect()
    } else {
        crate::mask::read_bitset_file(path)
            .map(|(_, m)| m)
            .map_err(|e| io(e.to_string()))
    }
}

fn neighbours(g: SensorGeometry, pix: usize) -> impl Iterator<Item = Option<usize>> {
    let (w, h) = (g.width() as isize, g.height() as isize);
    let (x, y) = ((pix as isize) % w, (pix as isize) / w);
    (-1..=1).flat_map(move |dy| {
        (-1..=1).map(move |dx| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < w && ny < h).then(|| (ny * w + nx) as usize)
        })
    })
}

/// 3×3 dilation; outside pixels count as background.
pub fn dilate(bits: &[bool], g: SensorGeometry) -> Vec<bool> {
    (0..bits.len())
        .map(|p| neighbours(g, p).any(|n| n.is_some_and(|n| bits[n])))
        .collect()
}

/// 3×3 erosion; outside pixels count as foreground so borders survive.
pub fn erode(bits: &[bool], g: SensorGeometry) -> Vec<bool> {
    (0..bits.len())
        .map(|p| neighbours(g, p).all(|n| n.is_none_or(|n| bits[n])))
        .collect()
}

/// Keeps the largest 8-connected component; ties go to the first in scan order.
pub fn largest_component(bits: &[bool], g: SensorGeometry) -> Vec<bool> {
    let mut label = vec![0u32; bits.len()];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for n in neighbours(g, p).flatten() {
                if bits[n] && label[n] == 0 {
                    label[n] = next;
                    stack.push(n);
                }
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    label.iter().map(|&l| l != 0 && l == best.0).collect()
}

/// Mean `1 − quality` of scheduled masks against ground truth, if provided.
pub fn schedule_mask_mae(schedule: &Schedule, gt: &[BinaryMask]) -> Result<f64, GatingError> {
    if gt.len() < schedule.steps.len() || schedule.steps.is_empty() {
        return Err(GatingError::EmptyInput);
    }
    let mut total = 0.0;
    for s in &schedule.steps {
        total += 1.0 - mask_quality_ground_truth(schedule.mask(s.frame), &gt[s.frame])?;
    }
    Ok(total / schedule.steps.len() as f64)
}

/// Wall-clock helper for sweeps.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}
