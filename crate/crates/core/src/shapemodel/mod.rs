//! Statistical shape model: centroid-aligned signed distance fields, their
//! principal modes of variation, and a kernel density prior over mode
//! coefficients.

mod align;
mod eigen;
mod io;
mod kde;
mod sdf;

use thiserror::Error;

use crate::raster::{BinaryMask, RasterError};

pub use align::{align_mask, augment, flip_horizontal, frame_center, rotate90, AlignedShapeSet};
pub use eigen::{
    learn_eigenshape_model, smooth_heaviside, smooth_heaviside_derivative, EigenshapeModel,
    GeneratedShape, ShapeCoefficients, DEFAULT_EPSILON, DEFAULT_FRAME, DEFAULT_MODES,
};
pub use io::{decode_model, encode_model, load_model, save_model};
pub use kde::{kde_log_prior, KdePrior, MIN_BANDWIDTH};
pub use sdf::mask_to_sdf;

#[derive(Debug, Error)]
pub enum ShapeModelError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("mask covers the whole raster")]
    FullMask,
    #[error("object with bounding box {bbox:?} does not fit a {frame}x{frame} frame")]
    ObjectTooLarge {
        bbox: (usize, usize, usize, usize),
        frame: usize,
    },
    #[error("need more samples than modes: k = {k}, samples = {samples}")]
    TooFewSamples { k: usize, samples: usize },
    #[error("degenerate shape set: all shapes are identical")]
    Degenerate,
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// An eigenshape model together with its coefficient prior; the unit that is
/// learned, saved and loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeModel {
    pub eigen: EigenshapeModel,
    pub prior: KdePrior,
}

/// Full training protocol: align every mask in a `frame` window, convert to
/// signed distance, add the eight dihedral copies, keep `k` modes, and fit
/// the prior on the projected training shapes.
pub fn fit_shape_model(
    masks: &[BinaryMask],
    frame: usize,
    k: usize,
    epsilon: f64,
) -> Result<ShapeModel, ShapeModelError> {
    let set = augment(&AlignedShapeSet::from_masks(masks, frame)?);
    fit_from_set(&set, k, epsilon)
}

/// Learns the model and prior from an already prepared set.
pub fn fit_from_set(
    set: &AlignedShapeSet,
    k: usize,
    epsilon: f64,
) -> Result<ShapeModel, ShapeModelError> {
    let eigen = learn_eigenshape_model(set, k, epsilon)?;
    let samples = set
        .sdfs
        .iter()
        .map(|sdf| eigen.project(sdf).map(|a| a.0))
        .collect::<Result<Vec<_>, _>>()?;
    let prior = KdePrior::from_samples(samples)?;
    Ok(ShapeModel { eigen, prior })
}
