//! Ground-truth marginal heatmaps from normalized joints.

use crate::pose::{cell_center, Heatmap, HeatmapTriplet, Pose3D};
use crate::tensor::Tensor3;

use super::SimError;

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_SIGMA_CELLS: f64 = 2.0;

/// Isotropic Gaussian centered at cube coordinates `(a, b)`, normalized to sum 1.
/// `sigma` is in grid cells. Centers are clamped to the cube.
pub fn gaussian_heatmap(a: f64, b: f64, resolution: usize, sigma: f64) -> Heatmap {
    let a = a.clamp(-1.0, 1.0);
    let b = b.clamp(-1.0, 1.0);
    // one cell spans 2/R cube units
    let s = sigma * 2.0 / resolution as f64;
    let denom = 2.0 * s * s;
    let col: Vec<f64> = (0..resolution)
        .map(|k| (-(cell_center(k, resolution) - a).powi(2) / denom).exp())
        .collect();
    let row: Vec<f64> = (0..resolution)
        .map(|k| (-(cell_center(k, resolution) - b).powi(2) / denom).exp())
        .collect();
    let total: f64 = col.iter().sum::<f64>() * row.iter().sum::<f64>();
    let data = row
        .iter()
        .flat_map(|&r| col.iter().map(move |&c| r * c / total))
        .collect();
    Heatmap::new(resolution, data).expect("gaussian cells are finite and non-negative")
}

pub fn make_heatmaps(
    joints: &Pose3D,
    resolution: usize,
    sigma: f64,
) -> Result<Vec<HeatmapTriplet>, SimError> {
    if resolution < 8 {
        return Err(SimError::InvalidParam(format!(
            "heatmap resolution {resolution} < 8"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SimError::InvalidParam(format!("sigma {sigma}")));
    }
    Ok(joints
        .joints()
        .iter()
        .map(|&[x, y, z]| HeatmapTriplet {
            xy: gaussian_heatmap(x, y, resolution, sigma),
            xz: gaussian_heatmap(x, z, resolution, sigma),
            zy: gaussian_heatmap(z, y, resolution, sigma),
        })
        .collect())
}

/// Packs triplets into a `3J × R × R` tensor, planes ordered `xy, xz, zy` per joint.
pub fn heatmaps_to_tensor(triplets: &[HeatmapTriplet]) -> Tensor3 {
    let r = triplets.first().map(|t| t.xy.size()).unwrap_or(0);
    let data = triplets
        .iter()
        .flat_map(|t| t.planes())
        .flat_map(|h| h.data().iter().map(|&v| v as f32))
        .collect();
    Tensor3::new(3 * triplets.len(), r, r, data).expect("consistent heatmap sizes")
}
