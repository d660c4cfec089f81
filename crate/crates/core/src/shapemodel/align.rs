use crate::raster::{centroid, BinaryMask, Grid};

use super::{mask_to_sdf, ShapeModelError};

/// Frame coordinate of the alignment anchor, `(frame - 1) / 2`.
#[inline]
pub fn frame_center(frame: usize) -> f64 {
    (frame as f64 - 1.0) / 2.0
}

/// Ties go toward zero, so an already aligned mask is never moved.
fn round_half_toward_zero(d: f64) -> i64 {
    ((d.abs() - 0.5).ceil().max(0.0) * d.signum()) as i64
}

/// Translates a mask into a `frame`×`frame` raster so its centroid lands
/// as close to the frame center as an integer shift allows.
pub fn align_mask(mask: &BinaryMask, frame: usize) -> Result<BinaryMask, ShapeModelError> {
    let bbox = mask.bbox().ok_or(ShapeModelError::EmptyMask)?;
    let (cx, cy) = centroid(mask)?;
    let c = frame_center(frame);
    let dx = round_half_toward_zero(c - cx);
    let dy = round_half_toward_zero(c - cy);
    let (x0, y0, x1, y1) = bbox;
    let fits = |lo: usize, hi: usize, d: i64| lo as i64 + d >= 0 && hi as i64 + d < frame as i64;
    if !fits(x0, x1, dx) || !fits(y0, y1, dy) {
        return Err(ShapeModelError::ObjectTooLarge { bbox, frame });
    }
    Ok(mask.translated(dx, dy, frame, frame))
}

/// Centroid-aligned signed distance fields of a training shape collection.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedShapeSet {
    pub frame: usize,
    pub sdfs: Vec<Grid>,
    /// Number of source masks before augmentation.
    pub source_count: usize,
}

impl AlignedShapeSet {
    pub fn from_masks<'a>(
        masks: impl IntoIterator<Item = &'a BinaryMask>,
        frame: usize,
    ) -> Result<Self, ShapeModelError> {
        let sdfs = masks
            .into_iter()
            .map(|m| align_mask(m, frame).and_then(|a| mask_to_sdf(&a)))
            .collect::<Result<Vec<_>, _>>()?;
        let source_count = sdfs.len();
        Ok(Self {
            frame,
            sdfs,
            source_count,
        })
    }

    pub fn len(&self) -> usize {
        self.sdfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sdfs.is_empty()
    }
}

/// 90° rotation of a square grid about its center.
pub fn rotate90(grid: &Grid) -> Grid {
    let n = grid.width();
    debug_assert_eq!(n, grid.height());
    Grid::from_fn(n, n, |x, y| grid.get(y, n - 1 - x))
}

/// Mirror about the vertical center line.
pub fn flip_horizontal(grid: &Grid) -> Grid {
    let n = grid.width();
    Grid::from_fn(n, grid.height(), |x, y| grid.get(n - 1 - x, y))
}

/// The eight dihedral copies of every shape: four rotations of the original
/// and of its mirror image. Copies that are bit-identical to an earlier copy
/// of the same shape are dropped.
pub fn augment(set: &AlignedShapeSet) -> AlignedShapeSet {
    let mut sdfs = Vec::with_capacity(set.sdfs.len() * 8);
    for sdf in &set.sdfs {
        let mut orbit: Vec<Grid> = Vec::with_capacity(8);
        for start in [sdf.clone(), flip_horizontal(sdf)] {
            let mut g = start;
            for _ in 0..4 {
                let next = rotate90(&g);
                if !orbit.contains(&g) {
                    orbit.push(g);
                }
                g = next;
            }
        }
        sdfs.extend(orbit);
    }
    AlignedShapeSet {
        frame: set.frame,
        sdfs,
        source_count: set.source_count,
    }
}
