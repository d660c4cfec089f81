//! The energy terms evaluated on dense scene-sized fields. These are the
//! reference definitions; [`super::evaluate`] computes the same quantities
//! on the windows the contours actually touch.

use crate::raster::{Grid, ProbabilityMap};
use crate::shapemodel::KdePrior;

use super::ContourState;

/// Binary cross-entropy between the union field and the posterior, summed
/// over pixels, with its pixelwise partial `-(log p - log(1 - p))`.
pub fn image_term(union: &Grid, posterior: &ProbabilityMap) -> (f64, Grid) {
    assert_eq!(union.dims(), posterior.dims(), "union and posterior differ in size");
    let p = posterior.grid();
    let mut value = 0.0;
    let mut partial = Grid::new(union.width(), union.height());
    for ((u, &pv), d) in union
        .values()
        .iter()
        .zip(p.values())
        .zip(partial.values_mut())
    {
        let (lp, lq) = (pv.ln(), (1.0 - pv).ln());
        value -= u * lp + (1.0 - u) * lq;
        *d = -(lp - lq);
    }
    (value, partial)
}

/// Total pairwise overlap `sum_{i<j} sum_px G_i G_j` and `d/dG_i = sum_{j != i} G_j`.
pub fn overlap_term(fields: &[Grid]) -> (f64, Vec<Grid>) {
    assert!(!fields.is_empty(), "overlap of zero fields");
    let (w, h) = fields[0].dims();
    let mut total = Grid::new(w, h);
    for f in fields {
        for (t, v) in total.values_mut().iter_mut().zip(f.values()) {
            *t += v;
        }
    }
    let mut value = 0.0;
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            value += fields[i].dot(&fields[j]);
        }
    }
    let partials = fields
        .iter()
        .map(|f| {
            let mut g = total.clone();
            for (gv, v) in g.values_mut().iter_mut().zip(f.values()) {
                *gv -= v;
            }
            g
        })
        .collect();
    (value, partials)
}

/// `-sum_i log P(alpha_i)` and its gradient per contour.
pub fn shape_term(prior: &KdePrior, state: &ContourState) -> (f64, Vec<Vec<f64>>) {
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(state.len());
    for c in &state.contours {
        let (lp, g) = prior.log_density(c.alpha.as_slice());
        value -= lp;
        grads.push(g.into_iter().map(|v| -v).collect());
    }
    (value, grads)
}
