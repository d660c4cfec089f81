use super::distance::squared_distance_to;
use super::{BinaryMask, Grid, RasterError};

/// Mean of true-pixel coordinates; pixel centers sit on integer coordinates.
pub fn centroid(mask: &BinaryMask) -> Result<(f64, f64), RasterError> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in mask.iter_true() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(RasterError::EmptyMask);
    }
    Ok((sx / n as f64, sy / n as f64))
}

/// 4-connected components, ordered by the scanline position of each
/// component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = mask.dims();
    let mut parent: Vec<usize> = Vec::new();
    let mut labels = vec![usize::MAX; w * h];

    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let left = (x > 0).then(|| labels[y * w + x - 1]).filter(|&l| l != usize::MAX);
            let up = (y > 0).then(|| labels[(y - 1) * w + x]).filter(|&l| l != usize::MAX);
            let label = match (left, up) {
                (None, None) => {
                    parent.push(parent.len());
                    parent.len() - 1
                }
                (Some(a), None) | (None, Some(a)) => a,
                (Some(a), Some(b)) => {
                    let ra = find(&mut parent, a);
                    let rb = find(&mut parent, b);
                    // Keep the older root so component order follows first pixels.
                    let (keep, drop) = if ra <= rb { (ra, rb) } else { (rb, ra) };
                    parent[drop] = keep;
                    keep
                }
            };
            labels[y * w + x] = label;
        }
    }

    // Roots, in order of first appearance, become output slots.
    let mut slot_of_root = vec![usize::MAX; parent.len()];
    let mut out: Vec<BinaryMask> = Vec::new();
    for i in 0..w * h {
        if labels[i] == usize::MAX {
            continue;
        }
        let root = find(&mut parent, labels[i]);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = out.len();
            out.push(BinaryMask::new(w, h));
        }
        out[slot_of_root[root]].set(i % w, i / w, true);
    }
    out
}

/// Normalized 1-D Gaussian taps truncated at 3σ.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(grid: &Grid, sigma: f64) -> Result<Grid, RasterError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(RasterError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(grid.clone());
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let (w, h) = grid.dims();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut tmp = Grid::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * grid.get(clamp(x as i64 + k as i64 - radius, w), y);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Grid::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp.get(x, clamp(y as i64 + k as i64 - radius, h));
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Pixels within Euclidean distance `radius` of the mask.
pub fn dilate(mask: &BinaryMask, radius: f64) -> BinaryMask {
    if mask.is_empty() || radius <= 0.0 {
        return mask.clone();
    }
    let d2 = squared_distance_to(mask, true);
    let r2 = radius * radius;
    BinaryMask::from_vec(
        mask.width(),
        mask.height(),
        d2.iter().map(|&d| d <= r2).collect(),
    )
    .expect("same dimensions")
}

/// Pixels of the mask farther than `radius` from its complement. Pixels
/// outside the raster count as background.
pub fn erode(mask: &BinaryMask, radius: f64) -> BinaryMask {
    if radius <= 0.0 {
        return mask.clone();
    }
    // Pad by one pixel so the raster border acts as background.
    let (w, h) = mask.dims();
    let padded = BinaryMask::from_fn(w + 2, h + 2, |x, y| {
        x >= 1 && y >= 1 && x <= w && y <= h && !mask.get(x - 1, y - 1)
    });
    let d2 = squared_distance_to(&padded, true);
    let r2 = radius * radius;
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y) && d2[(y + 1) * (w + 2) + x + 1] > r2
    })
}

/// Erodes for negative `amount`, dilates for positive.
pub fn morph(mask: &BinaryMask, amount: f64) -> BinaryMask {
    if amount < 0.0 {
        erode(mask, -amount)
    } else {
        dilate(mask, amount)
    }
}
