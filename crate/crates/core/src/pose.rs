//! Marginal-heatmap triangulation and the training losses.
//!
//! Heatmaps are `R × R` grids stored row-major. For a plane with axes
//! `(a, b)`, columns index `a` and rows index `b`; cell `k` has center
//! `(2k + 1)/R − 1` so a symmetric grid has expectation exactly 0.
//!
//! | plane | column axis | row axis |
//! |-------|-------------|----------|
//! | `xy`  | x           | y        |
//! | `xz`  | x           | z        |
//! | `zy`  | z           | y        |

use thiserror::Error;

use crate::sim::labels::{CameraModel, CubeMapping, LabelError};

pub const JOINT_COUNT: usize = 13;
pub const BCE_CLIP: f64 = 1e-7;
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("heatmap has zero total mass")]
    ZeroMass,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("non-finite value during gradient check")]
    NonFinite,
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    InvalidStep(f64),
    #[error("head depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("expected {JOINT_COUNT} joints, got {0}")]
    JointCount(usize),
    #[error("heatmap must be square with {0} cells")]
    GridSize(usize),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// A 13-joint pose; units are whatever the producer used (cube units or mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    joints: Vec<[f64; 3]>,
}

impl Pose3D {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self, PoseError> {
        if joints.len() != JOINT_COUNT {
            return Err(PoseError::JointCount(joints.len()));
        }
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[[f64; 3]] {
        &self.joints
    }

    pub fn in_cube(&self) -> bool {
        self.joints
            .iter()
            .flatten()
            .all(|v| (-1.0..=1.0).contains(v))
    }
}

#[inline]
pub fn cell_center(k: usize, size: usize) -> f64 {
    (2 * k + 1) as f64 / size as f64 - 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    size: usize,
    data: Vec<f64>,
}

impl Heatmap {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self, PoseError> {
        if size == 0 || data.len() != size * size {
            return Err(PoseError::GridSize(data.len()));
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PoseError::InvalidDistribution(
                "negative or non-finite cell".into(),
            ));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_distribution(&self) -> bool {
        (self.total() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// Mirror across the vertical axis (negates the column coordinate).
    pub fn flip_columns(&self) -> Heatmap {
        let n = self.size;
        let data = (0..n * n)
            .map(|i| self.data[(i / n) * n + (n - 1 - i % n)])
            .collect();
        Heatmap { size: n, data }
    }
}

/// Expected cell-center coordinates `(column, row)` under the normalized grid.
pub fn soft_argmax(h: &Heatmap) -> Result<(f64, f64), PoseError> {
    soft_argmax_raw(h.size, &h.data)
}

fn soft_argmax_raw(size: usize, data: &[f64]) -> Result<(f64, f64), PoseError> {
    let mut total = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for (i, &v) in data.iter().enumerate() {
        total += v;
        sa += v * cell_center(i % size, size);
        sb += v * cell_center(i / size, size);
    }
    if total <= 0.0 {
        return Err(PoseError::ZeroMass);
    }
    Ok((sa / total, sb / total))
}

/// Partial derivatives of both soft-argmax outputs with respect to every
/// (unnormalized) cell: `∂a/∂h_k = (c_k − a) / Σh`.
pub fn soft_argmax_grad(h: &Heatmap) -> Result<(Vec<f64>, Vec<f64>), PoseError> {
    let (a, b) = soft_argmax(h)?;
    let total = h.total();
    let n = h.size;
    let da = (0..n * n)
        .map(|i| (cell_center(i % n, n) - a) / total)
        .collect();
    let db = (0..n * n)
        .map(|i| (cell_center(i / n, n) - b) / total)
        .collect();
    Ok((da, db))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTriplet {
    pub xy: Heatmap,
    pub xz: Heatmap,
    pub zy: Heatmap,
}

impl HeatmapTriplet {
    pub fn planes(&self) -> [&Heatmap; 3] {
        [&self.xy, &self.xz, &self.zy]
    }
}

/// x and y from the `xy` plane, z averaged over `xz` and `zy`.
pub fn fuse_planes(t: &HeatmapTriplet) -> Result<[f64; 3], PoseError> {
    let (x, y) = soft_argmax(&t.xy)?;
    let (_, z_xz) = soft_argmax(&t.xz)?;
    let (z_zy, _) = soft_argmax(&t.zy)?;
    Ok([x, y, 0.5 * (z_xz + z_zy)])
}

pub fn triangulate(triplets: &[HeatmapTriplet]) -> Result<Pose3D, PoseError> {
    Pose3D::new(triplets.iter().map(fuse_planes).collect::<Result<_, _>>()?)
}

fn check_distribution(p: &[f64]) -> Result<(), PoseError> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(PoseError::InvalidDistribution(
            "negative or non-finite entry".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(PoseError::InvalidDistribution(format!("mass {total}")));
    }
    Ok(())
}

#[inline]
fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Jensen–Shannon divergence (natural log) between two distributions.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, PoseError> {
    if p.len() != q.len() {
        return Err(PoseError::LengthMismatch(format!(
            "{} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(jsd_unchecked(p, q))
}

fn jsd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * (xlogy_ratio(a, m) + xlogy_ratio(b, m))
        })
        .sum::<f64>()
        .max(0.0)
}

/// Gradient of the JSD expression with respect to `q` (entries treated as
/// free variables): `½ ln(q_k / m_k)`.
pub fn jsd_grad_q(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if b == 0.0 {
                f64::NEG_INFINITY
            } else {
                0.5 * (b / (0.5 * (a + b))).ln()
            }
        })
        .collect()
}

#[inline]
fn clip(p: f64) -> f64 {
    p.clamp(BCE_CLIP, 1.0 - BCE_CLIP)
}

/// Mean binary cross-entropy of `pred` against `target`, predictions clipped.
pub fn bce(target: &[f64], pred: &[f64]) -> f64 {
    let n = target.len() as f64;
    target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| {
            let p = clip(p);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

pub fn bce_grad(target: &[f64], pred: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| {
            if !(BCE_CLIP..=1.0 - BCE_CLIP).contains(&p) {
                return 0.0;
            }
            -(t / p - (1.0 - t) / (1.0 - p)) / n
        })
        .collect()
}

pub fn mse(target: &[f64], pred: &[f64]) -> f64 {
    let n = target.len() as f64;
    target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

pub fn mse_grad(target: &[f64], pred: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| 2.0 * (p - t) / n)
        .collect()
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Outputs of one refinement block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrediction {
    pub heatmaps: Vec<HeatmapTriplet>,
    pub joints: Pose3D,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HpeLossTerms {
    pub geometric: f64,
    pub jsd_xy: f64,
    pub jsd_xz: f64,
    pub jsd_zy: f64,
}

impl HpeLossTerms {
    pub fn total(&self) -> f64 {
        self.geometric + self.jsd_xy + self.jsd_xz + self.jsd_zy
    }
}

/// Per-block loss terms, each summed over joints.
pub fn hpe_loss_terms(
    blocks: &[BlockPrediction],
    gt_heatmaps: &[HeatmapTriplet],
    gt_joints: &Pose3D,
) -> Result<Vec<HpeLossTerms>, PoseError> {
    if gt_heatmaps.len() != JOINT_COUNT {
        return Err(PoseError::JointCount(gt_heatmaps.len()));
    }
    blocks
        .iter()
        .map(|block| {
            if block.heatmaps.len() != JOINT_COUNT {
                return Err(PoseError::JointCount(block.heatmaps.len()));
            }
            let mut terms = HpeLossTerms::default();
            let joints = block.joints.joints.iter().zip(&gt_joints.joints);
            for ((p, g), (pred, truth)) in joints.zip(block.heatmaps.iter().zip(gt_heatmaps)) {
                terms.geometric +=
                    ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt();
                terms.jsd_xy += jsd(&truth.xy.data, &pred.xy.data)?;
                terms.jsd_xz += jsd(&truth.xz.data, &pred.xz.data)?;
                terms.jsd_zy += jsd(&truth.zy.data, &pred.zy.data)?;
            }
            Ok(terms)
        })
        .collect()
}

pub fn hpe_loss(
    blocks: &[BlockPrediction],
    gt_heatmaps: &[HeatmapTriplet],
    gt_joints: &Pose3D,
) -> Result<f64, PoseError> {
    Ok(hpe_loss_terms(blocks, gt_heatmaps, gt_joints)?
        .iter()
        .map(HpeLossTerms::total)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskLossTerms {
    pub series_bce: f64,
    pub current_bce: f64,
    pub score_mse: f64,
}

impl MaskLossTerms {
    pub fn total(&self) -> f64 {
        self.series_bce + self.current_bce + self.score_mse
    }
}

/// Quality target for one predicted mask: `1 − MAE`.
pub fn score_target(truth: &[f64], pred: &[f64]) -> f64 {
    1.0 - mae(truth, pred)
}

/// Mask-network loss over a predicted series (`pred[0]` is the current frame).
pub fn mask_loss_terms(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    scores: &[f64],
) -> Result<MaskLossTerms, PoseError> {
    if pred.is_empty() || pred.len() != truth.len() || pred.len() != scores.len() {
        return Err(PoseError::LengthMismatch(format!(
            "{} predictions, {} targets, {} scores",
            pred.len(),
            truth.len(),
            scores.len()
        )));
    }
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() || p.is_empty() {
            return Err(PoseError::LengthMismatch(format!(
                "mask of {} vs {} pixels",
                p.len(),
                t.len()
            )));
        }
        if let Some(&v) = p.iter().chain(t.iter()).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PoseError::ProbabilityOutOfRange(v));
        }
    }
    let flat_t: Vec<f64> = truth.iter().flatten().copied().collect();
    let flat_p: Vec<f64> = pred.iter().flatten().copied().collect();
    let targets: Vec<f64> = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| score_target(t, p))
        .collect();
    Ok(MaskLossTerms {
        series_bce: bce(&flat_t, &flat_p),
        current_bce: bce(&truth[0], &pred[0]),
        score_mse: mse(&targets, scores),
    })
}

pub fn mask_loss(pred: &[Vec<f64>], truth: &[Vec<f64>], scores: &[f64]) -> Result<f64, PoseError> {
    Ok(mask_loss_terms(pred, truth, scores)?.total())
}

/// Largest `|analytic − central difference| / (|central difference| + 1e−8)`
/// over all coordinates of `point`.
pub fn gradient_check<F, G>(f: F, grad: G, point: &[f64], step: f64) -> Result<f64, PoseError>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(1e-6..=1e-3).contains(&step) {
        return Err(PoseError::InvalidStep(step));
    }
    let analytic = grad(point);
    if analytic.len() != point.len() {
        return Err(PoseError::LengthMismatch(format!(
            "gradient {} vs point {}",
            analytic.len(),
            point.len()
        )));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        let fd = (up - down) / (2.0 * step);
        if !fd.is_finite() || !analytic[i].is_finite() {
            return Err(PoseError::NonFinite);
        }
        worst = worst.max((analytic[i] - fd).abs() / (fd.abs() + 1e-8));
    }
    Ok(worst)
}

/// Inverse of [`crate::sim::labels::normalize_labels`]: cube coordinates back
/// to millimeters in the world frame.
pub fn denormalize(
    pose: &Pose3D,
    cam: &CameraModel,
    mapping: &CubeMapping,
    head_depth_mm: f64,
) -> Result<Pose3D, PoseError> {
    if !(head_depth_mm > 0.0 && head_depth_mm.is_finite()) {
        return Err(PoseError::InvalidDepth(head_depth_mm));
    }
    let joints = pose
        .joints
        .iter()
        .map(|p| {
            let cam_point = mapping.cube_to_camera(cam, *p, head_depth_mm)?;
            Ok(cam.camera_to_world(cam_point))
        })
        .collect::<Result<Vec<_>, PoseError>>()?;
    Pose3D::new(joints)
}

pub const POSE_CSV_HEADER: &str = "joint,x,y,z";

pub fn write_pose_csv(pose: &Pose3D, names: &[String]) -> String {
    let mut out = format!("{POSE_CSV_HEADER}\n");
    for (name, p) in names.iter().zip(&pose.joints) {
        out.push_str(&format!("{name},{:?},{:?},{:?}\n", p[0], p[1], p[2]));
    }
    out
}

/// Reads `joint,x,y,z` rows; rows may come in any order but every name must appear once.
pub fn read_pose_csv(text: &str, names: &[String]) -> Result<Pose3D, PoseError> {
    let bad = |line: usize, reason: String| LabelError::Csv { line, reason };
    let mut joints = vec![None; names.len()];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == POSE_CSV_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad(i + 1, format!("expected 4 fields, got {}", f.len())).into());
        }
        let j = names
            .iter()
            .position(|n| n == f[0])
            .ok_or_else(|| bad(i + 1, format!("unknown joint {:?}", f[0])))?;
        let mut xyz = [0.0; 3];
        for k in 0..3 {
            xyz[k] = f[k + 1]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad number {:?}", f[k + 1])))?;
        }
        if joints[j].replace(xyz).is_some() {
            return Err(bad(i + 1, format!("joint {:?} repeated", f[0])).into());
        }
    }
    let present = joints.iter().filter(|j| j.is_some()).count();
    let joints: Option<Vec<_>> = joints.into_iter().collect();
    Pose3D::new(joints.ok_or(PoseError::JointCount(present))?)
}
