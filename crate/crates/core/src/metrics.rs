//! Pose error metrics, occlusion augmentation and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::SensorGeometry;
use crate::gating::{schedule_mask_mae, schedule_masks, GatingError, MaskPredictor};
use crate::mask::BinaryMask;
use crate::pose::{Pose3D, JOINT_COUNT};
use crate::tore::ToreVolume;

pub const DEFAULT_PCK_ALPHA_MM: f64 = 150.0;
pub const AUC_THRESHOLD_COUNT: usize = 30;
pub const AUC_MAX_MM: f64 = 500.0;
pub const DEFAULT_OCCLUSION_MAX: u16 = 80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("joint count mismatch: predicted {pred}, ground truth {gt}")]
    JointCountMismatch { pred: usize, gt: usize },
    #[error("no input records")]
    EmptyInput,
    #[error("threshold {0} must be non-negative")]
    InvalidAlpha(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error(transparent)]
    Gating(#[from] GatingError),
}

pub fn joint_errors(pred: &Pose3D, gt: &Pose3D) -> Result<Vec<f64>, MetricsError> {
    let (p, g) = (pred.joints(), gt.joints());
    if p.len() != g.len() {
        return Err(MetricsError::JointCountMismatch {
            pred: p.len(),
            gt: g.len(),
        });
    }
    Ok(p.iter()
        .zip(g)
        .map(|(a, b)| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .collect())
}

pub fn mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64, MetricsError> {
    let e = joint_errors(pred, gt)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

fn pck_of(errors: &[f64], alpha: f64) -> f64 {
    errors.iter().filter(|&&e| e < alpha).count() as f64 / errors.len() as f64
}

/// Fraction of joints with error strictly below `alpha_mm`.
pub fn pck(pred: &Pose3D, gt: &Pose3D, alpha_mm: f64) -> Result<f64, MetricsError> {
    if !(alpha_mm >= 0.0) {
        return Err(MetricsError::InvalidAlpha(alpha_mm));
    }
    Ok(pck_of(&joint_errors(pred, gt)?, alpha_mm))
}

/// `500·i/29` for `i` in `0..30`.
pub fn auc_thresholds() -> [f64; AUC_THRESHOLD_COUNT] {
    std::array::from_fn(|i| AUC_MAX_MM * i as f64 / (AUC_THRESHOLD_COUNT - 1) as f64)
}

pub fn auc(pred: &Pose3D, gt: &Pose3D) -> Result<f64, MetricsError> {
    let e = joint_errors(pred, gt)?;
    Ok(auc_thresholds().iter().map(|&a| pck_of(&e, a)).sum::<f64>() / AUC_THRESHOLD_COUNT as f64)
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionParams {
    pub prob: f64,
    pub max_w: u16,
    pub max_h: u16,
}

impl OcclusionParams {
    pub fn new(prob: f64) -> Result<Self, MetricsError> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(MetricsError::InvalidProbability(prob));
        }
        Ok(Self {
            prob,
            max_w: DEFAULT_OCCLUSION_MAX,
            max_h: DEFAULT_OCCLUSION_MAX,
        })
    }
}

/// Draws whether to occlude and, if so, the rectangle. Sides are uniform in
/// `[1, max]` (capped by the frame) and the position is uniform among
/// in-bounds placements.
pub fn sample_occlusion<R: Rng + ?Sized>(
    rng: &mut R,
    g: SensorGeometry,
    p: &OcclusionParams,
) -> Option<Rect> {
    if rng.random::<f64>() >= p.prob {
        return None;
    }
    let w = rng.random_range(1..=(p.max_w as usize).min(g.width()));
    let h = rng.random_range(1..=(p.max_h as usize).min(g.height()));
    let x = rng.random_range(0..=g.width() - w);
    let y = rng.random_range(0..=g.height() - h);
    Some(Rect { x, y, w, h })
}

/// Zeroes one random rectangle across all channels with probability `p.prob`.
pub fn occlude<R: Rng + ?Sized>(
    vol: &ToreVolume,
    p: &OcclusionParams,
    rng: &mut R,
) -> (ToreVolume, Option<Rect>) {
    let g = vol.geometry();
    match sample_occlusion(rng, g, p) {
        None => (vol.clone(), None),
        Some(r) => {
            let w = g.width();
            let out = vol
                .map_pixels(|pix, v| if r.contains(pix % w, pix / w) { 0.0 } else { v })
                .expect("zeroing keeps values in range");
            (out, Some(r))
        }
    }
}

macro_rules! condition_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = MetricsError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s { $($text => Ok($name::$variant),)+ _ => Err(MetricsError::UnknownCondition(s.into())) }
            }
        }
    };
}

condition_enum!(Lighting { High => "high", Medium => "medium", Low => "low" });
condition_enum!(Background { Static => "static", Dynamic => "dynamic" });
condition_enum!(View { Front => "front", Back => "back", Left => "left", Right => "right" });

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    #[serde(default)]
    pub lighting: Option<Lighting>,
    #[serde(default)]
    pub background: Option<Background>,
    #[serde(default)]
    pub view: Option<View>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    Lighting,
    Background,
    View,
}

impl FromStr for Axis {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lighting" => Ok(Axis::Lighting),
            "background" => Ok(Axis::Background),
            "view" => Ok(Axis::View),
            _ => Err(MetricsError::UnknownCondition(s.into())),
        }
    }
}

impl Conditions {
    fn key(&self, axes: &[Axis]) -> String {
        axes.iter()
            .map(|a| match a {
                Axis::Lighting => self.lighting.map_or("-", |v| v.as_str()),
                Axis::Background => self.background.map_or("-", |v| v.as_str()),
                Axis::View => self.view.map_or("-", |v| v.as_str()),
            })
            .collect::<Vec<_>>()
            .join("/")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub frame: String,
    pub pred: Pose3D,
    pub gt: Pose3D,
    pub conditions: Conditions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub count: usize,
    pub mpjpe: f64,
    pub pck: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub alpha_mm: f64,
    pub overall: MetricRow,
    pub groups: Vec<(String, MetricRow)>,
    pub per_joint: Vec<f64>,
}

struct Acc {
    n: usize,
    mpjpe: f64,
    pck: f64,
    auc: f64,
}

impl Acc {
    fn row(&self) -> MetricRow {
        let n = self.n as f64;
        MetricRow {
            count: self.n,
            mpjpe: self.mpjpe / n,
            pck: self.pck / n,
            auc: self.auc / n,
        }
    }
}

/// Record-averaged metrics overall, per condition group and per joint.
pub fn evaluate(
    records: &[EvalRecord],
    group_by: &[Axis],
    alpha_mm: f64,
) -> Result<EvalReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(alpha_mm >= 0.0) {
        return Err(MetricsError::InvalidAlpha(alpha_mm));
    }
    let mut overall = Acc {
        n: 0,
        mpjpe: 0.0,
        pck: 0.0,
        auc: 0.0,
    };
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    let mut per_joint = vec![0.0; JOINT_COUNT];
    for r in records {
        let e = joint_errors(&r.pred, &r.gt)?;
        let m = e.iter().sum::<f64>() / e.len() as f64;
        let p = pck_of(&e, alpha_mm);
        let a = auc_thresholds().iter().map(|&t| pck_of(&e, t)).sum::<f64>()
            / AUC_THRESHOLD_COUNT as f64;
        for acc in [&mut overall].into_iter().chain(if group_by.is_empty() {
            None
        } else {
            Some(groups.entry(r.conditions.key(group_by)).or_insert(Acc {
                n: 0,
                mpjpe: 0.0,
                pck: 0.0,
                auc: 0.0,
            }))
        }) {
            acc.n += 1;
            acc.mpjpe += m;
            acc.pck += p;
            acc.auc += a;
        }
        for (s, v) in per_joint.iter_mut().zip(&e) {
            *s += v;
        }
    }
    let n = records.len() as f64;
    Ok(EvalReport {
        alpha_mm,
        overall: overall.row(),
        groups: groups.into_iter().map(|(k, a)| (k, a.row())).collect(),
        per_joint: per_joint.into_iter().map(|s| s / n).collect(),
    })
}

impl EvalReport {
    /// `scope,group,count,mpjpe_mm,pck,auc`; joint rows leave pck/auc empty.
    pub fn to_csv(&self, joint_names: &[String]) -> String {
        let mut out = String::from("scope,group,count,mpjpe_mm,pck,auc\n");
        let row = |out: &mut String, scope: &str, group: &str, r: &MetricRow| {
            let _ = writeln!(
                out,
                "{scope},{group},{},{:?},{:?},{:?}",
                r.count, r.mpjpe, r.pck, r.auc
            );
        };
        row(&mut out, "overall", "all", &self.overall);
        for (k, r) in &self.groups {
            row(&mut out, "group", k, r);
        }
        for (i, v) in self.per_joint.iter().enumerate() {
            let name = joint_names
                .get(i)
                .map_or_else(|| i.to_string(), Clone::clone);
            let _ = writeln!(out, "joint,{name},{},{v:?},,", self.overall.count);
        }
        out
    }

    pub fn to_table(&self, joint_names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>12} {:>8} {:>8}",
            "group", "n", "MPJPE(mm)", "PCK", "AUC"
        );
        let line = |out: &mut String, k: &str, r: &MetricRow| {
            let _ = writeln!(
                out,
                "{k:<24} {:>6} {:>12.3} {:>8.4} {:>8.4}",
                r.count, r.mpjpe, r.pck, r.auc
            );
        };
        line(&mut out, "overall", &self.overall);
        for (k, r) in &self.groups {
            line(&mut out, k, r);
        }
        let _ = writeln!(out, "\n{:<24} {:>12}", "joint", "MPJPE(mm)");
        for (i, v) in self.per_joint.iter().enumerate() {
            let name = joint_names
                .get(i)
                .map_or_else(|| i.to_string(), Clone::clone);
            let _ = writeln!(out, "{name:<24} {v:>12.3}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub backend_calls: usize,
    pub elapsed_s: f64,
    pub mask_mae: Option<f64>,
}

/// Runs the scheduler once per `beta` over the same frames.
pub fn threshold_sweep<B: MaskPredictor + ?Sized>(
    frames: &[ToreVolume],
    backend: &B,
    betas: &[f64],
    gt_masks: Option<&[BinaryMask]>,
) -> Result<Vec<SweepRow>, MetricsError> {
    if frames.is_empty() || betas.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    betas
        .iter()
        .map(|&beta| {
            let (schedule, elapsed) =
                crate::gating::timed(|| schedule_masks(frames, backend, beta));
            let schedule = schedule?;
            let mask_mae = gt_masks
                .map(|gt| schedule_mask_mae(&schedule, gt))
                .transpose()?;
            Ok(SweepRow {
                beta,
                backend_calls: schedule.backend_calls(),
                elapsed_s: elapsed.as_secs_f64(),
                mask_mae,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,backend_calls,elapsed_s,mask_mae\n");
    for r in rows {
        let mae = r.mask_mae.map(|v| format!("{v:?}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:?},{},{:?},{mae}",
            r.beta, r.backend_calls, r.elapsed_s
        );
    }
    out
}
