use crate::raster::{squared_distance_to, BinaryMask, Grid};

use super::ShapeModelError;

/// Euclidean signed distance field of a mask: negative inside, positive
/// outside, with the zero crossing halfway between a boundary pixel and its
/// outside neighbor. Pixels beyond the raster border count as outside.
/// Values are clamped to ±max(width, height).
pub fn mask_to_sdf(mask: &BinaryMask) -> Result<Grid, ShapeModelError> {
    if mask.is_empty() {
        return Err(ShapeModelError::EmptyMask);
    }
    if mask.is_full() {
        return Err(ShapeModelError::FullMask);
    }
    let (w, h) = mask.dims();
    let (pw, ph) = (w + 2, h + 2);
    let padded = BinaryMask::from_fn(pw, ph, |x, y| {
        x >= 1 && y >= 1 && x <= w && y <= h && mask.get(x - 1, y - 1)
    });
    let to_inside = squared_distance_to(&padded, true);
    let to_outside = squared_distance_to(&padded, false);
    let limit = w.max(h) as f64;
    Ok(Grid::from_fn(w, h, |x, y| {
        let i = (y + 1) * pw + x + 1;
        let d = if mask.get(x, y) {
            -(to_outside[i].sqrt() - 0.5)
        } else {
            to_inside[i].sqrt() - 0.5
        };
        d.clamp(-limit, limit)
    }))
}
