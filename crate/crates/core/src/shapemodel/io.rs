//! `ESM1` shape model container.
//!
//! ```text
//! ESM1\n
//! <frame> <k> <epsilon> <sigma> <n_samples>\n
//! mean              frame*frame f64 LE
//! modes             k * frame*frame f64 LE
//! eigenvalues       k f64 LE
//! kde samples       n_samples * k f64 LE
//! ```
//! Floats in the header line use the shortest representation that parses
//! back to the same value, so load/save round-trips byte for byte.

use std::fs;
use std::path::Path;

use crate::raster::Grid;

use super::{EigenshapeModel, KdePrior, ShapeModel, ShapeModelError};

const MAGIC: &[u8] = b"ESM1\n";

pub fn encode_model(model: &ShapeModel) -> Vec<u8> {
    let e = &model.eigen;
    let p = &model.prior;
    let header = format!(
        "{} {} {:?} {:?} {}\n",
        e.frame,
        e.k(),
        e.epsilon,
        p.bandwidth(),
        p.samples().len()
    );
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(header.as_bytes());
    let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    e.mean.values().iter().for_each(|&v| put(v));
    e.modes.iter().flat_map(|m| m.values()).for_each(|&v| put(v));
    e.eigenvalues.iter().for_each(|&v| put(v));
    p.samples().iter().flatten().for_each(|&v| put(v));
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ShapeModel, ShapeModelError> {
    let bad = |msg: String| ShapeModelError::Format(msg);
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad("missing ESM1 magic".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not ASCII".into()))?;
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 5 {
        return Err(bad(format!("expected 5 header fields, got {line:?}")));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer {s:?}")));
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad float {s:?}")));
    let frame = int(fields[0])?;
    let k = int(fields[1])?;
    let epsilon = float(fields[2])?;
    let sigma = float(fields[3])?;
    let n = int(fields[4])?;
    if frame == 0 {
        return Err(bad("frame must be positive".into()));
    }

    let d = frame * frame;
    let expected = 8 * (d + k * d + k + n * k);
    let payload = &rest[nl + 1..];
    if payload.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |count: usize| -> Vec<f64> { values.by_ref().take(count).collect() };

    let grid = |v: Vec<f64>| Grid::from_vec(frame, frame, v).map_err(|e| bad(e.to_string()));
    let mean = grid(take(d))?;
    let modes = (0..k).map(|_| grid(take(d))).collect::<Result<Vec<_>, _>>()?;
    let eigenvalues = take(k);
    let samples: Vec<Vec<f64>> = (0..n).map(|_| take(k)).collect();

    Ok(ShapeModel {
        eigen: EigenshapeModel {
            frame,
            mean,
            modes,
            eigenvalues,
            epsilon,
        },
        prior: KdePrior::new(samples, sigma)?,
    })
}

pub fn save_model(model: &ShapeModel, path: impl AsRef<Path>) -> Result<(), ShapeModelError> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ShapeModel, ShapeModelError> {
    decode_model(&fs::read(path)?)
}
