//! Binary and soft human-body masks plus their file formats.
//!
//! The raw bitset container mirrors the EVT1 header: magic `MSK1`, version
//! u16, width u16, height u16, mask count u64, then each mask packed
//! LSB-first into `ceil(W·H / 8)` bytes.

use std::path::Path;

use thiserror::Error;

use crate::event::SensorGeometry;
use crate::pnm;

pub const MASK_MAGIC: &[u8; 4] = b"MSK1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("mask has {actual} pixels, geometry needs {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("geometry mismatch: {expected} vs {actual}")]
    GeometryMismatch {
        expected: SensorGeometry,
        actual: SensorGeometry,
    },
    #[error("soft mask value {0} outside [0, 1]")]
    ValueOutOfRange(f32),
    #[error("bad mask file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for MaskError {
    fn from(e: std::io::Error) -> Self {
        MaskError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    geometry: SensorGeometry,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geometry: SensorGeometry, bits: Vec<bool>) -> Result<Self, MaskError> {
        if bits.len() != geometry.pixels() {
            return Err(MaskError::LengthMismatch {
                expected: geometry.pixels(),
                actual: bits.len(),
            });
        }
        Ok(Self { geometry, bits })
    }

    pub fn filled(geometry: SensorGeometry, value: bool) -> Self {
        Self {
            geometry,
            bits: vec![value; geometry.pixels()],
        }
    }

    /// Mask with `f(x, y)` at each pixel.
    pub fn from_fn<F: Fn(usize, usize) -> bool>(geometry: SensorGeometry, f: F) -> Self {
        let w = geometry.width();
        let bits = (0..geometry.pixels()).map(|i| f(i % w, i / w)).collect();
        Self { geometry, bits }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.geometry.width() + x]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            geometry: self.geometry,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn check_geometry(&self, other: SensorGeometry) -> Result<(), MaskError> {
        if self.geometry != other {
            return Err(MaskError::GeometryMismatch {
                expected: other,
                actual: self.geometry,
            });
        }
        Ok(())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let px: Vec<f64> = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        pnm::encode_pgm(self.geometry.width(), self.geometry.height(), &px)
    }

    /// Any pixel at or above half intensity is foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, MaskError> {
        let img = pnm::decode(bytes).map_err(|e| MaskError::Format(e.to_string()))?;
        let geometry = geometry_of(img.width, img.height)?;
        Self::new(geometry, img.pixels.iter().map(|&v| v >= 0.5).collect())
    }
}

fn geometry_of(width: usize, height: usize) -> Result<SensorGeometry, MaskError> {
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(MaskError::Format(format!("{width}x{height} too large")));
    }
    SensorGeometry::new(width as u16, height as u16).map_err(|e| MaskError::Format(e.to_string()))
}

/// Real-valued mask prior to binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    geometry: SensorGeometry,
    values: Vec<f32>,
}

impl SoftMask {
    pub fn new(geometry: SensorGeometry, values: Vec<f32>) -> Result<Self, MaskError> {
        if values.len() != geometry.pixels() {
            return Err(MaskError::LengthMismatch {
                expected: geometry.pixels(),
                actual: values.len(),
            });
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MaskError::ValueOutOfRange(v));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

pub fn encode_bitset(geometry: SensorGeometry, masks: &[BinaryMask]) -> Result<Vec<u8>, MaskError> {
    let stride = geometry.pixels().div_ceil(8);
    let mut out = Vec::with_capacity(18 + stride * masks.len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(geometry.width() as u16).to_le_bytes());
    out.extend_from_slice(&(geometry.height() as u16).to_le_bytes());
    out.extend_from_slice(&(masks.len() as u64).to_le_bytes());
    for m in masks {
        m.check_geometry(geometry)?;
        let mut packed = vec![0u8; stride];
        for (i, _) in m.bits.iter().enumerate().filter(|(_, &b)| b) {
            packed[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&packed);
    }
    Ok(out)
}

pub fn decode_bitset(bytes: &[u8]) -> Result<(SensorGeometry, Vec<BinaryMask>), MaskError> {
    if bytes.len() < 18 || &bytes[..4] != MASK_MAGIC {
        return Err(MaskError::Format("bad magic or short header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != 1 {
        return Err(MaskError::Format(format!("version {version}")));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]);
    let height = u16::from_le_bytes([bytes[8], bytes[9]]);
    let geometry = geometry_of(width as usize, height as usize)?;
    let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
    let stride = geometry.pixels().div_ceil(8);
    let payload = &bytes[18..];
    if payload.len() != stride * count {
        return Err(MaskError::Format(format!(
            "payload {} bytes, expected {}",
            payload.len(),
            stride * count
        )));
    }
    let masks = payload
        .chunks_exact(stride.max(1))
        .take(count)
        .map(|chunk| BinaryMask {
            geometry,
            bits: (0..geometry.pixels())
                .map(|i| chunk[i / 8] >> (i % 8) & 1 == 1)
                .collect(),
        })
        .collect();
    Ok((geometry, masks))
}

pub fn read_bitset_file(path: &Path) -> Result<(SensorGeometry, Vec<BinaryMask>), MaskError> {
    decode_bitset(&std::fs::read(path)?)
}
