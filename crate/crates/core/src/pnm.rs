//! Minimal PGM/PPM reader and PGM writer for frame and mask exchange.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PnmError {
    #[error("unsupported image kind {0:?} (expected P2, P5 or P6)")]
    Unsupported(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("pixel data too short")]
    Truncated,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for PnmError {
    fn from(e: std::io::Error) -> Self {
        PnmError::Io(e.to_string())
    }
}

/// Rec.601 luma.
#[inline]
pub fn luma_rec601(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Grayscale image with intensities scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn token(&mut self) -> Result<&'a str, PnmError> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::Header("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| PnmError::Header("non-ascii token".into()))
    }

    fn number(&mut self) -> Result<usize, PnmError> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| PnmError::Header(format!("bad number {t:?}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage, PnmError> {
    let mut c = Cursor { bytes, pos: 0 };
    let kind = c.token()?;
    if !matches!(kind, "P2" | "P5" | "P6") {
        return Err(PnmError::Unsupported(kind.to_string()));
    }
    let width = c.number()?;
    let height = c.number()?;
    let maxval = c.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::Header(format!("maxval {maxval}")));
    }
    let scale = maxval as f64;
    let n = width * height;
    let pixels = match kind {
        "P2" => (0..n)
            .map(|_| c.number().map(|v| v as f64 / scale))
            .collect::<Result<Vec<_>, _>>()?,
        _ => {
            // exactly one whitespace byte separates header and raster
            let start = c.pos + 1;
            let channels = if kind == "P6" { 3 } else { 1 };
            let bps = if maxval < 256 { 1 } else { 2 };
            let raster = bytes
                .get(start..start + n * channels * bps)
                .ok_or(PnmError::Truncated)?;
            let sample = |i: usize| -> f64 {
                let v = if bps == 1 {
                    raster[i] as f64
                } else {
                    u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
                };
                v / scale
            };
            if channels == 1 {
                (0..n).map(sample).collect()
            } else {
                (0..n)
                    .map(|p| luma_rec601(sample(3 * p), sample(3 * p + 1), sample(3 * p + 2)))
                    .collect()
            }
        }
    };
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn read(path: &Path) -> Result<GrayImage, PnmError> {
    decode(&std::fs::read(path)?)
}

/// Encodes 8-bit binary PGM; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_round_trip() {
        let px = vec![0.0, 1.0, 128.0 / 255.0, 1.0 / 255.0];
        let img = decode(&encode_pgm(2, 2, &px)).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.pixels, px);
    }

    #[test]
    fn p2_with_comments_and_p6_luma() {
        let img = decode(b"P2\n# c\n2 1\n10\n0 10\n").unwrap();
        assert_eq!(img.pixels, vec![0.0, 1.0]);
        let img = decode(b"P6 1 1 255\n\xff\x00\x00").unwrap();
        assert!((img.pixels[0] - 0.299).abs() < 1e-12);
        let img = decode(b"P5 1 1 65535\n\xff\xff").unwrap();
        assert_eq!(img.pixels, vec![1.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            decode(b"P3 1 1 1\n0"),
            Err(PnmError::Unsupported(_))
        ));
        assert_eq!(decode(b"P5 2 2 255\n\x00"), Err(PnmError::Truncated));
    }
}
