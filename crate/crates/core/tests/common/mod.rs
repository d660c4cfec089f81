//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use crownrefine::raster::BinaryMask;
use crownrefine::shapemodel::{fit_shape_model, ShapeModel, DEFAULT_EPSILON, DEFAULT_FRAME, DEFAULT_MODES};
use crownrefine::synth::{training_crowns, SceneSpec};

/// Small scenes with small crowns, for fast optimizer and energy tests.
pub fn small_spec() -> SceneSpec {
    SceneSpec {
        width: 96,
        height: 96,
        crowns: (2, 4),
        radius: (5.0, 8.0),
        ..SceneSpec::default()
    }
}

pub const SMALL_FRAME: usize = 40;
pub const SMALL_MODES: usize = 8;

/// Eight modes over a 40 px frame, learned from 24 small crowns.
pub fn small_model() -> &'static ShapeModel {
    static MODEL: OnceLock<ShapeModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let masks = training_crowns(&small_spec(), 24).unwrap();
        fit_shape_model(&masks, SMALL_FRAME, SMALL_MODES, DEFAULT_EPSILON).unwrap()
    })
}

/// The default model: 32 modes over a 92 px frame, learned from 60 crowns.
pub fn default_model() -> &'static ShapeModel {
    static MODEL: OnceLock<ShapeModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let masks = training_crowns(&SceneSpec::default(), 60).unwrap();
        fit_shape_model(&masks, DEFAULT_FRAME, DEFAULT_MODES, DEFAULT_EPSILON).unwrap()
    })
}

/// Filled disk of `radius` around `(cx, cy)` on a `w`×`h` raster.
pub fn disk(w: usize, h: usize, cx: f64, cy: f64, radius: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| (x as f64 - cx).hypot(y as f64 - cy) <= radius)
}

/// Axis-aligned filled rectangle `[x0, x1) × [y0, y1)`.
pub fn block(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
}

/// A scene whose posterior is the mask of one placed model shape, so the
/// optimum is known: `truth` is the shape's offset and `mask` its
/// thresholded field.
pub struct KnownOptimum {
    pub posterior: crownrefine::raster::ProbabilityMap,
    pub truth: (f64, f64),
    pub seed: (f64, f64),
    pub alpha: Vec<f64>,
    pub mask: BinaryMask,
}

/// The shape is a training sample of the prior, blurred by `blur`, and the
/// seed is off by up to `seed_error` pixels per axis.
/// Posterior built from a placed model shape. `mean` uses the mean shape,
/// otherwise a training shape is drawn.
pub fn known_optimum(model: &ShapeModel, stream: u64, size: usize, blur: f64, seed_error: f64, mean: bool) -> KnownOptimum {
    use crownrefine::raster::{bilinear_place, gaussian_blur, ProbabilityMap};
    use crownrefine::shapemodel::{frame_center, ShapeCoefficients};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let samples = model.prior.samples();
    let drawn = samples[rng.random_range(0..samples.len())].clone();
    let alpha = if mean { vec![0.0; drawn.len()] } else { drawn };
    let margin = model.eigen.frame as f64 / 2.0 + seed_error + 1.0;
    let truth = (
        rng.random_range(margin..size as f64 - margin),
        rng.random_range(margin..size as f64 - margin),
    );
    let seed = (
        truth.0 + rng.random_range(-seed_error..=seed_error),
        truth.1 + rng.random_range(-seed_error..=seed_error),
    );
    let anchor = frame_center(model.eigen.frame);
    let local = model.eigen.generate(&ShapeCoefficients(alpha.clone()));
    let field = bilinear_place(&local, (truth.0 - anchor, truth.1 - anchor), size, size).field;
    let mask = field.threshold(0.5);
    let posterior = ProbabilityMap::from_grid(gaussian_blur(&mask.to_grid(), blur).unwrap());
    KnownOptimum { posterior, truth, seed, alpha, mask }
}
