//! Binary PGM (P5) masks and the FRAS float raster container.
//!
//! FRAS layout: the ASCII line `FRAS1\n`, the ASCII line `<width> <height>\n`,
//! then `width * height` little-endian IEEE-754 `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::{BinaryMask, Grid, RasterError};

const FRAS_MAGIC: &[u8] = b"FRAS1\n";

pub fn load_mask_pgm(path: impl AsRef<Path>) -> Result<BinaryMask, RasterError> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes)
}

pub fn save_mask_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    fs::write(path, encode_pgm(mask))?;
    Ok(())
}

pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", mask.width(), mask.height());
    let mut out = Vec::with_capacity(header.len() + mask.bits().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0u8 }));
    out
}

/// Parses a binary PGM. Pixels above 127 become `true`.
pub fn decode_pgm(bytes: &[u8]) -> Result<BinaryMask, RasterError> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor
        .token()
        .ok_or_else(|| RasterError::MalformedHeader("missing magic".into()))?;
    match magic {
        b"P5" => {}
        b"P1" | b"P2" | b"P3" | b"P4" | b"P6" => {
            return Err(RasterError::UnsupportedPgm(
                String::from_utf8_lossy(magic).into_owned(),
            ))
        }
        other => {
            return Err(RasterError::MalformedHeader(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    }
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::InvalidDimensions { width, height });
    }
    if maxval != 255 {
        return Err(RasterError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(RasterError::MalformedHeader("missing payload separator".into())),
    }
    let payload = &bytes[cursor.pos..];
    let expected = width * height;
    if payload.len() < expected {
        return Err(RasterError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let bits = payload[..expected].iter().map(|&p| p > 127).collect();
    BinaryMask::from_vec(width, height, bits)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        let tok = self
            .token()
            .ok_or_else(|| RasterError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                RasterError::MalformedHeader(format!(
                    "invalid {what} {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn load_float_raster(path: impl AsRef<Path>) -> Result<Grid, RasterError> {
    let bytes = fs::read(path)?;
    decode_fras(&bytes)
}

pub fn save_float_raster(grid: &Grid, path: impl AsRef<Path>) -> Result<(), RasterError> {
    fs::write(path, encode_fras(grid))?;
    Ok(())
}

/// Values are narrowed to `f32`.
pub fn encode_fras(grid: &Grid) -> Vec<u8> {
    let header = format!("{} {}\n", grid.width(), grid.height());
    let mut out = Vec::with_capacity(FRAS_MAGIC.len() + header.len() + 4 * grid.len());
    out.extend_from_slice(FRAS_MAGIC);
    out.extend_from_slice(header.as_bytes());
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_fras(bytes: &[u8]) -> Result<Grid, RasterError> {
    let rest = bytes.strip_prefix(FRAS_MAGIC).ok_or(RasterError::BadMagic)?;
    let line_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| RasterError::MalformedHeader("missing dimension line".into()))?;
    let line = std::str::from_utf8(&rest[..line_end])
        .map_err(|_| RasterError::MalformedHeader("dimension line is not ASCII".into()))?;
    let mut parts = line.split(' ');
    let mut dim = |what: &str| -> Result<usize, RasterError> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::MalformedHeader(format!("invalid {what} in {line:?}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    if parts.next().is_some() {
        return Err(RasterError::MalformedHeader(format!(
            "trailing fields in {line:?}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(RasterError::InvalidDimensions { width, height });
    }
    let payload = &rest[line_end + 1..];
    let expected = width * height * 4;
    if payload.len() != expected {
        return Err(RasterError::DimensionMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Grid::from_vec(width, height, values)
}
