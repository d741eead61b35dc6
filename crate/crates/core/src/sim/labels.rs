//! Skeleton labels, camera matrices and the label-normalization cube.
//!
//! Normalization maps a joint to `[−1, 1]³`: x and y come from the joint's
//! pixel projection, which equals its projection along the viewing ray onto
//! the plane at the head's depth, measured from the principal point in
//! half-image units; z is the depth offset from the head in units of
//! `half_depth_mm`. With a centered principal point, the frustum box at the
//! head depth maps exactly onto the cube faces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use thiserror::Error;

use crate::pose::{Pose3D, JOINT_COUNT};

pub const DEFAULT_JOINT_NAMES: [&str; JOINT_COUNT] = [
    "head",
    "shoulder_left",
    "shoulder_right",
    "elbow_left",
    "elbow_right",
    "hand_left",
    "hand_right",
    "hip_left",
    "hip_right",
    "knee_left",
    "knee_right",
    "foot_left",
    "foot_right",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("joint {joint} has non-positive camera depth {depth}")]
    BehindCamera { joint: usize, depth: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid cube mapping: {0}")]
    InvalidMapping(String),
    #[error("skeleton csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("joint set: {0}")]
    JointSet(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabelError {
    fn from(e: std::io::Error) -> Self {
        LabelError::Io(e.to_string())
    }
}

/// Ordered joint names; the head joint is the depth reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSet {
    names: Vec<String>,
    head: usize,
}

impl JointSet {
    pub fn new(names: Vec<String>, head: &str) -> Result<Self, LabelError> {
        if names.len() != JOINT_COUNT {
            return Err(LabelError::JointSet(format!(
                "{} names, need {JOINT_COUNT}",
                names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if !names.iter().all(|n| seen.insert(n)) {
            return Err(LabelError::JointSet("duplicate joint name".into()));
        }
        let head = names
            .iter()
            .position(|n| n == head)
            .ok_or_else(|| LabelError::JointSet(format!("head joint {head:?} missing")))?;
        Ok(Self { names, head })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Default for JointSet {
    fn default() -> Self {
        Self {
            names: DEFAULT_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            head: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateFrame {
    World,
    Camera,
}

/// 13 joints in millimeters at one label timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub t_us: u64,
    pub frame: CoordinateFrame,
    pub pose: Pose3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsic: Matrix3<f64>,
    extrinsic: Matrix3x4<f64>,
    intrinsic_inv: Matrix3<f64>,
    rotation_inv: Matrix3<f64>,
}

impl CameraModel {
    pub fn new(intrinsic: Matrix3<f64>, extrinsic: Matrix3x4<f64>) -> Result<Self, LabelError> {
        let k = &intrinsic;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(LabelError::InvalidCamera(
                "intrinsic is not upper-triangular".into(),
            ));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
            return Err(LabelError::InvalidCamera(
                "focal entries must be positive".into(),
            ));
        }
        if intrinsic
            .iter()
            .chain(extrinsic.iter())
            .any(|v| !v.is_finite())
        {
            return Err(LabelError::InvalidCamera("non-finite entry".into()));
        }
        let rotation: Matrix3<f64> = extrinsic.fixed_view::<3, 3>(0, 0).into_owned();
        let rotation_inv = rotation
            .try_inverse()
            .ok_or_else(|| LabelError::InvalidCamera("extrinsic rotation is singular".into()))?;
        let intrinsic_inv = intrinsic
            .try_inverse()
            .expect("upper-triangular with positive diagonal");
        Ok(Self {
            intrinsic,
            extrinsic,
            intrinsic_inv,
            rotation_inv,
        })
    }

    /// Pinhole camera with identity extrinsic.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, LabelError> {
        Self::new(
            Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0),
            Matrix3x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0),
        )
    }

    pub fn intrinsic(&self) -> &Matrix3<f64> {
        &self.intrinsic
    }

    pub fn extrinsic(&self) -> &Matrix3x4<f64> {
        &self.extrinsic
    }

    /// Principal point `(c_x, c_y)` in pixels.
    pub fn principal_point(&self) -> (f64, f64) {
        let k = &self.intrinsic;
        (k[(0, 2)] / k[(2, 2)], k[(1, 2)] / k[(2, 2)])
    }

    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.extrinsic * nalgebra::Vector4::new(p[0], p[1], p[2], 1.0);
        [v.x, v.y, v.z]
    }

    pub fn camera_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let t = self.extrinsic.column(3);
        let v = self.rotation_inv * (Vector3::new(p[0], p[1], p[2]) - t);
        [v.x, v.y, v.z]
    }

    /// Pixel coordinates of a camera-frame point (depth must be positive).
    pub fn project_camera_point(&self, p: [f64; 3]) -> (f64, f64) {
        let v = self.intrinsic * Vector3::new(p[0], p[1], p[2]);
        (v.x / v.z, v.y / v.z)
    }

    /// Camera-frame point at `depth` whose projection is pixel `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        let ray = self.intrinsic_inv * Vector3::new(u, v, 1.0);
        let s = depth / ray.z;
        [ray.x * s, ray.y * s, depth]
    }

    /// 9 intrinsic then 12 extrinsic values, row-major, one matrix row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..3 {
            let row: Vec<String> = (0..3)
                .map(|c| format!("{:?}", self.intrinsic[(r, c)]))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        for r in 0..3 {
            let row: Vec<String> = (0..4)
                .map(|c| format!("{:?}", self.extrinsic[(r, c)]))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LabelError> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| LabelError::InvalidCamera(format!("bad number {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 21 {
            return Err(LabelError::InvalidCamera(format!(
                "expected 21 values, got {}",
                values.len()
            )));
        }
        Self::new(
            Matrix3::from_row_slice(&values[..9]),
            Matrix3x4::from_row_slice(&values[9..]),
        )
    }

    pub fn read_file(path: &Path) -> Result<Self, LabelError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn camera_points(s: &SkeletonFrame, cam: &CameraModel) -> Vec<[f64; 3]> {
    s.pose
        .joints()
        .iter()
        .map(|&p| match s.frame {
            CoordinateFrame::World => cam.world_to_camera(p),
            CoordinateFrame::Camera => p,
        })
        .collect()
}

/// Pinhole projection of all joints to pixel coordinates.
pub fn project_skeleton(
    s: &SkeletonFrame,
    cam: &CameraModel,
) -> Result<Vec<(f64, f64)>, LabelError> {
    camera_points(s, cam)
        .into_iter()
        .enumerate()
        .map(|(joint, p)| {
            if p[2] > 0.0 {
                Ok(cam.project_camera_point(p))
            } else {
                Err(LabelError::BehindCamera { joint, depth: p[2] })
            }
        })
        .collect()
}

/// Image extent and depth span that define the normalization cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeMapping {
    pub width: f64,
    pub height: f64,
    pub half_depth_mm: f64,
}

impl CubeMapping {
    pub const DEFAULT_HALF_DEPTH_MM: f64 = 1000.0;

    pub fn new(width: f64, height: f64, half_depth_mm: f64) -> Result<Self, LabelError> {
        if !(width > 0.0 && height > 0.0 && half_depth_mm > 0.0) {
            return Err(LabelError::InvalidMapping(format!(
                "{width}x{height}, half depth {half_depth_mm}"
            )));
        }
        Ok(Self {
            width,
            height,
            half_depth_mm,
        })
    }

    pub fn camera_to_cube(&self, cam: &CameraModel, p: [f64; 3], head_depth: f64) -> [f64; 3] {
        let (u, v) = cam.project_camera_point(p);
        let (cx, cy) = cam.principal_point();
        [
            (u - cx) * 2.0 / self.width,
            (v - cy) * 2.0 / self.height,
            (p[2] - head_depth) / self.half_depth_mm,
        ]
    }

    pub fn cube_to_camera(
        &self,
        cam: &CameraModel,
        q: [f64; 3],
        head_depth: f64,
    ) -> Result<[f64; 3], LabelError> {
        let (cx, cy) = cam.principal_point();
        let depth = head_depth + q[2] * self.half_depth_mm;
        if depth <= 0.0 {
            return Err(LabelError::BehindCamera { joint: 0, depth });
        }
        Ok(cam.back_project(
            cx + q[0] * self.width / 2.0,
            cy + q[1] * self.height / 2.0,
            depth,
        ))
    }
}

/// Normalized joints plus the head depth needed to invert the mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLabels {
    pub pose: Pose3D,
    pub head_depth_mm: f64,
}

pub fn normalize_labels(
    s: &SkeletonFrame,
    cam: &CameraModel,
    mapping: &CubeMapping,
    joints: &JointSet,
) -> Result<NormalizedLabels, LabelError> {
    let points = camera_points(s, cam);
    let head_depth = points[joints.head()][2];
    if head_depth <= 0.0 {
        return Err(LabelError::BehindCamera {
            joint: joints.head(),
            depth: head_depth,
        });
    }
    let mut out = Vec::with_capacity(JOINT_COUNT);
    for (joint, p) in points.into_iter().enumerate() {
        if p[2] <= 0.0 {
            return Err(LabelError::BehindCamera { joint, depth: p[2] });
        }
        out.push(mapping.camera_to_cube(cam, p, head_depth));
    }
    Ok(NormalizedLabels {
        pose: Pose3D::new(out)
            .map_err(|_| LabelError::InvalidCamera("non-finite projection".into()))?,
        head_depth_mm: head_depth,
    })
}

pub const SKELETON_CSV_HEADER: &str = "t_us,joint_name,x_mm,y_mm,z_mm";

pub fn write_skeleton_csv(frames: &[SkeletonFrame], joints: &JointSet) -> String {
    let mut out = format!("{SKELETON_CSV_HEADER}\n");
    for f in frames {
        for (name, p) in joints.names().iter().zip(f.pose.joints()) {
            writeln!(out, "{},{},{:?},{:?},{:?}", f.t_us, name, p[0], p[1], p[2]).unwrap();
        }
    }
    out
}

/// Parses world-frame skeletons; each timestamp must carry all 13 joints exactly once.
pub fn read_skeleton_csv(text: &str, joints: &JointSet) -> Result<Vec<SkeletonFrame>, LabelError> {
    type Slots = (usize, Vec<Option<[f64; 3]>>);
    let mut by_time: BTreeMap<u64, Slots> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == SKELETON_CSV_HEADER) {
            continue;
        }
        let err = |reason: String| LabelError::Csv {
            line: line_no,
            reason,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", f.len())));
        }
        let t: u64 = f[0].parse().map_err(|_| err("bad timestamp".into()))?;
        let j = joints
            .index_of(f[1])
            .ok_or_else(|| err(format!("unknown joint {:?}", f[1])))?;
        let mut xyz = [0.0; 3];
        for k in 0..3 {
            xyz[k] = f[2 + k].parse().map_err(|_| err("bad coordinate".into()))?;
        }
        let entry = by_time
            .entry(t)
            .or_insert_with(|| (line_no, vec![None; JOINT_COUNT]));
        if entry.1[j].replace(xyz).is_some() {
            return Err(err(format!("joint {:?} repeated at t={t}", f[1])));
        }
    }
    by_time
        .into_iter()
        .map(|(t_us, (line, js))| {
            let js: Option<Vec<[f64; 3]>> = js.into_iter().collect();
            let js = js.ok_or_else(|| LabelError::Csv {
                line,
                reason: format!("timestamp {t_us} lacks some of the {JOINT_COUNT} joints"),
            })?;
            let pose = Pose3D::new(js).map_err(|e| LabelError::Csv {
                line,
                reason: e.to_string(),
            })?;
            Ok(SkeletonFrame {
                t_us,
                frame: CoordinateFrame::World,
                pose,
            })
        })
        .collect()
}

/// Label whose timestamp is closest to `t_us` (earlier label wins ties).
pub fn nearest_label(labels: &[SkeletonFrame], t_us: u64) -> Option<&SkeletonFrame> {
    let idx = labels.partition_point(|l| l.t_us < t_us);
    let after = labels.get(idx);
    let before = idx.checked_sub(1).and_then(|i| labels.get(i));
    match (before, after) {
        (Some(b), Some(a)) => Some(if t_us - b.t_us <= a.t_us - t_us { b } else { a }),
        (b, a) => b.or(a),
    }
}
