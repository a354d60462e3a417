//! Binary field files and PGM rasters.
//!
//! `.vf2` layout: magic `VF2D`, then little-endian `u32` version, width and
//! height, then `width * height * 2` samples, row-major from the top-left
//! cell, interleaved `(u, v)`. Version 1 stores `f32` samples. Version 2 is
//! identical except samples are `f64`, for lossless export of computed
//! fields. `.sf2` is the same with magic `SF2D` and one channel.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField, MIN_SIDE};

pub const VECTOR_MAGIC: [u8; 4] = *b"VF2D";
pub const SCALAR_MAGIC: [u8; 4] = *b"SF2D";
const HEADER_LEN: usize = 16;

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}`, expected f32 or f64")),
        }
    }
}

/// Sample width of the payload.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    /// Version 1, `f32` samples.
    #[default]
    F32,
    /// Version 2, `f64` samples.
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    fn version(self) -> u32 {
        match self {
            Precision::F32 => 1,
            Precision::F64 => 2,
        }
    }

    fn sample_bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn from_version(v: u32) -> Result<Self> {
        match v {
            1 => Ok(Precision::F32),
            2 => Ok(Precision::F64),
            other => Err(Error::UnsupportedVersion(other)),
        }
    }
}

fn encode(magic: [u8; 4], width: usize, height: usize, samples: &[f64], p: Precision) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * p.sample_bytes());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&p.version().to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    match p {
        Precision::F32 => {
            for &s in samples {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
        Precision::F64 => {
            for &s in samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Returns `(width, height, precision, samples)`.
fn decode(
    magic: [u8; 4],
    channels: usize,
    bytes: &[u8],
) -> Result<(usize, usize, Precision, Vec<f64>)> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    let precision = Precision::from_version(read_u32(bytes, 4))?;
    let width = read_u32(bytes, 8) as usize;
    let height = read_u32(bytes, 12) as usize;
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::BadDimensions(format!(
            "{width}x{height} is below the {MIN_SIDE}x{MIN_SIDE} minimum"
        )));
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::BadDimensions(format!("{width}x{height} overflows")))?;
    let expected = count
        .checked_mul(precision.sample_bytes())
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::BadDimensions(format!("{width}x{height} overflows")))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::BadDimensions(format!(
            "{} trailing bytes after a {width}x{height} payload",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let samples = match precision {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((width, height, precision, samples))
}

pub fn encode_field(f: &VectorField, precision: Precision) -> Vec<u8> {
    let flat: Vec<f64> = f.data().iter().flat_map(|v| [v[0], v[1]]).collect();
    encode(VECTOR_MAGIC, f.width(), f.height(), &flat, precision)
}

pub fn decode_field(bytes: &[u8]) -> Result<VectorField> {
    decode_field_with_precision(bytes).map(|(f, _)| f)
}

/// Decodes and reports which payload precision the bytes used.
pub fn decode_field_with_precision(bytes: &[u8]) -> Result<(VectorField, Precision)> {
    let (w, h, p, samples) = decode(VECTOR_MAGIC, 2, bytes)?;
    let data = samples.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    Ok((VectorField::new(w, h, data)?, p))
}

pub fn encode_scalar(s: &ScalarField, precision: Precision) -> Vec<u8> {
    encode(SCALAR_MAGIC, s.width(), s.height(), s.data(), precision)
}

pub fn decode_scalar(bytes: &[u8]) -> Result<ScalarField> {
    let (w, h, _, samples) = decode(SCALAR_MAGIC, 1, bytes)?;
    ScalarField::new(w, h, samples)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<VectorField> {
    decode_field(&read_bytes(path.as_ref())?)
}

/// Writes a version-1 (`f32`) file.
pub fn write_field(f: &VectorField, path: impl AsRef<Path>) -> Result<()> {
    write_field_with(f, path, Precision::F32)
}

pub fn write_field_with(f: &VectorField, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    write_bytes(path.as_ref(), &encode_field(f, precision))
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    decode_scalar(&read_bytes(path.as_ref())?)
}

pub fn write_scalar(s: &ScalarField, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    write_bytes(path.as_ref(), &encode_scalar(s, precision))
}

/// 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Binary PGM (`P5`, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |m: &str| Error::Parse {
        line: 0,
        message: format!("pgm: {m}"),
    };
    let mut pos = 0;
    let mut next_token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if next_token()? != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let mut num = || -> Result<usize> {
        next_token()?
            .parse::<usize>()
            .map_err(|_| bad("non-numeric header field"))
    };
    let width = num()?;
    let height = num()?;
    let maxval = num()?;
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let expected = width * height;
    let available = bytes.len().saturating_sub(start);
    if available < expected {
        return Err(Error::TruncatedFile {
            expected: start + expected,
            actual: bytes.len(),
        });
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[start..start + expected].to_vec(),
    })
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(img))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&read_bytes(path.as_ref())?)
}
