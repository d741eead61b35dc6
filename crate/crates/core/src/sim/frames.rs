//! Frame and mask sequences: compositing, linear interpolation and the
//! on-disk directory layout (numbered PGM/PPM images plus `manifest.txt`).

use std::path::{Path, PathBuf};

use crate::config::KeyValues;
use crate::event::SensorGeometry;
use crate::mask::BinaryMask;
use crate::pnm;

use super::SimError;

/// Grayscale video with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    geometry: SensorGeometry,
    fps: f64,
    frames: Vec<Vec<f64>>,
}

impl FrameSequence {
    pub fn new(
        geometry: SensorGeometry,
        fps: f64,
        frames: Vec<Vec<f64>>,
    ) -> Result<Self, SimError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(SimError::InvalidParam(format!("fps {fps}")));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.len() != geometry.pixels() {
                return Err(SimError::GeometryMismatch(format!(
                    "frame {i} has {} pixels, expected {}",
                    f.len(),
                    geometry.pixels()
                )));
            }
            if let Some(v) = f.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(SimError::InvalidParam(format!(
                    "frame {i} intensity {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            geometry,
            fps,
            frames,
        })
    }

    /// `n` copies of a single intensity.
    pub fn constant(
        geometry: SensorGeometry,
        fps: f64,
        n: usize,
        intensity: f64,
    ) -> Result<Self, SimError> {
        Self::new(geometry, fps, vec![vec![intensity; geometry.pixels()]; n])
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame `i` timestamp in microseconds (fractional).
    pub fn frame_time_us(&self, i: usize) -> f64 {
        i as f64 * 1e6 / self.fps
    }

    pub fn read_dir(dir: &Path) -> Result<Self, SimError> {
        let (geometry, fps, images) = read_image_dir(dir)?;
        Self::new(geometry, fps, images)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        write_image_dir(
            dir,
            self.geometry,
            self.fps,
            self.frames.iter().map(|f| f.as_slice()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    geometry: SensorGeometry,
    fps: f64,
    masks: Vec<BinaryMask>,
}

impl MaskSequence {
    pub fn new(
        geometry: SensorGeometry,
        fps: f64,
        masks: Vec<BinaryMask>,
    ) -> Result<Self, SimError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(SimError::InvalidParam(format!("fps {fps}")));
        }
        for m in &masks {
            m.check_geometry(geometry)
                .map_err(|e| SimError::GeometryMismatch(e.to_string()))?;
        }
        Ok(Self {
            geometry,
            fps,
            masks,
        })
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn read_dir(dir: &Path) -> Result<Self, SimError> {
        let (geometry, fps, images) = read_image_dir(dir)?;
        let masks = images
            .into_iter()
            .map(|px| BinaryMask::new(geometry, px.iter().map(|&v| v >= 0.5).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| SimError::GeometryMismatch(e.to_string()))?;
        Self::new(geometry, fps, masks)
    }
}

/// Per-pixel `mask·fg + (1 − mask)·bg`.
pub fn composite(
    fg: &FrameSequence,
    masks: &MaskSequence,
    bg: &FrameSequence,
) -> Result<FrameSequence, SimError> {
    if fg.geometry != bg.geometry || fg.geometry != masks.geometry {
        return Err(SimError::GeometryMismatch(format!(
            "foreground {}, masks {}, background {}",
            fg.geometry, masks.geometry, bg.geometry
        )));
    }
    if fg.fps != bg.fps || fg.fps != masks.fps {
        return Err(SimError::FpsMismatch(format!(
            "{} / {} / {}",
            fg.fps, masks.fps, bg.fps
        )));
    }
    if fg.len() != bg.len() || fg.len() != masks.masks.len() {
        return Err(SimError::LengthMismatch(format!(
            "{} / {} / {} frames",
            fg.len(),
            masks.masks.len(),
            bg.len()
        )));
    }
    let frames = fg
        .frames
        .iter()
        .zip(&masks.masks)
        .zip(&bg.frames)
        .map(|((f, m), b)| {
            f.iter()
                .zip(m.bits())
                .zip(b)
                .map(|((&fv, &keep), &bv)| if keep { fv } else { bv })
                .collect()
        })
        .collect();
    FrameSequence::new(fg.geometry, fg.fps, frames)
}

/// Inserts `factor − 1` linear blends between neighbouring frames.
pub fn interpolate_linear(f: &FrameSequence, factor: usize) -> Result<FrameSequence, SimError> {
    if factor == 0 {
        return Err(SimError::InvalidParam(
            "interpolation factor must be >= 1".into(),
        ));
    }
    if factor == 1 || f.len() < 2 {
        return FrameSequence::new(f.geometry, f.fps * factor as f64, f.frames.clone());
    }
    let mut frames = Vec::with_capacity((f.len() - 1) * factor + 1);
    for pair in f.frames.windows(2) {
        frames.push(pair[0].clone());
        for j in 1..factor {
            let w = j as f64 / factor as f64;
            frames.push(
                pair[0]
                    .iter()
                    .zip(&pair[1])
                    .map(|(a, b)| a + (b - a) * w)
                    .collect(),
            );
        }
    }
    frames.push(f.frames.last().unwrap().clone());
    FrameSequence::new(f.geometry, f.fps * factor as f64, frames)
}

const MANIFEST: &str = "manifest.txt";

fn read_image_dir(dir: &Path) -> Result<(SensorGeometry, f64, Vec<Vec<f64>>), SimError> {
    let manifest_path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| SimError::Io(format!("{}: {e}", manifest_path.display())))?;
    let kv = KeyValues::parse(&text)
        .map_err(|e| SimError::Io(format!("{}: {e}", manifest_path.display())))?;
    let num = |key: &str| -> Result<f64, SimError> {
        kv.get(key)
            .ok_or_else(|| SimError::Io(format!("{}: missing {key}", manifest_path.display())))?
            .parse::<f64>()
            .map_err(|_| SimError::Io(format!("{}: bad {key}", manifest_path.display())))
    };
    let fps = num("fps")?;
    let (w, h) = (num("width")?, num("height")?);
    let geometry = SensorGeometry::new(w as u16, h as u16)
        .map_err(|e| SimError::InvalidParam(e.to_string()))?;

    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|s| s.to_str()), Some("pgm" | "ppm")))
        .collect();
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for p in paths {
        let img = pnm::read(&p).map_err(|e| SimError::Io(format!("{}: {e}", p.display())))?;
        if img.width != geometry.width() || img.height != geometry.height() {
            return Err(SimError::GeometryMismatch(format!(
                "{} is {}x{}, manifest says {geometry}",
                p.display(),
                img.width,
                img.height
            )));
        }
        frames.push(img.pixels);
    }
    Ok((geometry, fps, frames))
}

pub fn write_image_dir<'a, I: Iterator<Item = &'a [f64]>>(
    dir: &Path,
    geometry: SensorGeometry,
    fps: f64,
    images: I,
) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::Io(e.to_string()))?;
    let manifest = format!(
        "fps = {fps:?}\nwidth = {}\nheight = {}\n",
        geometry.width(),
        geometry.height()
    );
    std::fs::write(dir.join(MANIFEST), manifest).map_err(|e| SimError::Io(e.to_string()))?;
    for (i, px) in images.enumerate() {
        let bytes = pnm::encode_pgm(geometry.width(), geometry.height(), px);
        std::fs::write(dir.join(format!("{i:06}.pgm")), bytes)
            .map_err(|e| SimError::Io(e.to_string()))?;
    }
    Ok(())
}
