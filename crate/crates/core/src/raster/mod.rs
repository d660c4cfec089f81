//! Scalar grids, binary masks, their file formats and the handful of image
//! operations the rest of the pipeline builds on.
//!
//! Pixel centers sit on integer coordinates: pixel `(x, y)` covers
//! `[x - 0.5, x + 0.5] × [y - 0.5, y + 0.5]`.

mod distance;
mod grid;
mod io;
mod ops;
mod place;

use thiserror::Error;

pub use distance::squared_distance_to;
pub use grid::{BinaryMask, Grid, ProbabilityMap, P_MIN};
pub use io::{
    decode_fras, decode_pgm, encode_fras, encode_pgm, load_float_raster, load_mask_pgm,
    save_float_raster, save_mask_pgm,
};
pub use ops::{
    centroid, connected_components, dilate, erode, gaussian_blur, gaussian_kernel, morph,
};
pub use place::{bilinear_place, bilinear_place_partials, Placed, PlacedWindow};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PGM variant {0:?} (only binary P5 is supported)")]
    UnsupportedPgm(String),
    #[error("unsupported PGM maxval {0} (expected 255)")]
    UnsupportedMaxval(usize),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("bad magic: not a FRAS1 raster")]
    BadMagic,
    #[error("dimension mismatch: expected {expected} values, found {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("empty mask has no centroid")]
    EmptyMask,
    #[error("blur sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
}
