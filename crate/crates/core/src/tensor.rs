//! `TORE` flat tensor container: magic, `C`, `H`, `W` as little-endian u32,
//! then `C·H·W` little-endian f32 values in row-major order.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const TENSOR_MAGIC: &[u8; 4] = b"TORE";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("not a TORE tensor (bad magic)")]
    BadMagic,
    #[error("tensor payload is {actual} bytes, expected {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("text dump line {line}: {reason}")]
    Text { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, TensorError> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(TensorError::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            dims: [channels, height, width],
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.dims[0]
    }

    pub fn height(&self) -> usize {
        self.dims[1]
    }

    pub fn width(&self) -> usize {
        self.dims[2]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != TENSOR_MAGIC {
            return Err(TensorError::BadMagic);
        }
        let dim =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (c, h, w) = (dim(0), dim(1), dim(2));
        let payload = &bytes[HEADER_LEN..];
        let expected = c * h * w * 4;
        if payload.len() != expected {
            return Err(TensorError::SizeMismatch {
                expected,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(c, h, w, data)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TensorError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self, TensorError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Lossless text dump: a `C H W` line, then one line per row of each
    /// plane. Floats use shortest round-trip formatting.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        for row in self.data.chunks(self.width().max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text(text: &str) -> Result<Self, TensorError> {
        let mut lines = text.lines();
        let err = |line: usize, reason: &str| TensorError::Text {
            line,
            reason: reason.to_string(),
        };
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| err(1, "missing dims"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| err(1, "bad dim")))
            .collect::<Result<_, _>>()?;
        if dims.len() != 3 {
            return Err(err(1, "expected three dims"));
        }
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for (i, line) in lines.enumerate() {
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f32>().map_err(|_| err(i + 2, "bad value"))?);
            }
        }
        Self::new(dims[0], dims[1], dims[2], data)
    }
}
