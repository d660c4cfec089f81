//! Multi-contour energy and its analytic gradient.
//!
//! For contours with shape coefficients `alpha_k` and offsets `T_k`,
//!
//! ```text
//! E = -g_shp * sum_k log P(alpha_k)
//!     + g_img * sum_px CE(U_tau(G_1..G_M), P_sem)
//!     + g_ovp * sum_{i<j} sum_px G_i G_j
//! ```
//!
//! where `G_k` is the eigenshape indicator of contour `k` placed with its
//! frame center at `T_k`, `U_tau` is the smooth pixelwise maximum and `CE`
//! the binary cross-entropy. The location prior is a hard box constraint
//! `|T_k - seed_k|_inf <= delta` and adds nothing to the value.

mod evaluate;
mod terms;
mod union;

use thiserror::Error;

use crate::raster::{Grid, ProbabilityMap};
use crate::shapemodel::{frame_center, ShapeCoefficients, ShapeModel};

pub use evaluate::{
    central_difference, energy_gradient, evaluate, finite_difference_gradient, place_shapes,
    total_energy,
};
pub use terms::{image_term, overlap_term, shape_term};
pub use union::{smooth_max, smooth_union, smooth_union_partials};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
    #[error("state has {actual} contours but the scene has {expected} seeds")]
    ContourCount { expected: usize, actual: usize },
    #[error("contour {contour} has {actual} coefficients, model has {expected} modes")]
    CoefficientCount {
        contour: usize,
        expected: usize,
        actual: usize,
    },
    #[error(
        "contour {contour} offset ({:.4}, {:.4}) leaves the box of half-width {delta} around seed ({:.4}, {:.4})",
        offset.0, offset.1, seed.0, seed.1
    )]
    Infeasible {
        contour: usize,
        offset: (f64, f64),
        seed: (f64, f64),
        delta: f64,
    },
}

/// Relative slack on the box test, absorbing rounding in `seed ± delta`.
const BOX_SLACK: f64 = 1e-9;

/// Energy weights and smooth-max sharpness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyWeights {
    pub gamma_shp: f64,
    pub gamma_img: f64,
    pub gamma_ovp: f64,
    pub tau: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            gamma_shp: 1.0,
            gamma_img: 1.0,
            gamma_ovp: 5.0,
            tau: 20.0,
        }
    }
}

/// Default half-width of the offset box, in pixels.
pub const DEFAULT_DELTA: f64 = 10.0;

/// One refinement problem: posterior, seeds, weights and the shape model.
#[derive(Clone, Debug)]
pub struct SceneConfig<'m> {
    posterior: ProbabilityMap,
    seeds: Vec<(f64, f64)>,
    delta: f64,
    weights: EnergyWeights,
    model: &'m ShapeModel,
    /// `log((1 - p) / p)`, the image-term slope per unit of union.
    excess: Grid,
    /// Image term of the empty union, `-sum log(1 - p)`.
    background: f64,
}

impl<'m> SceneConfig<'m> {
    pub fn new(
        posterior: ProbabilityMap,
        seeds: Vec<(f64, f64)>,
        delta: f64,
        weights: EnergyWeights,
        model: &'m ShapeModel,
    ) -> Result<Self, EnergyError> {
        let bad = |m: String| Err(EnergyError::InvalidConfig(m));
        if seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return bad(format!("delta must be positive, got {delta}"));
        }
        if !(weights.tau > 0.0) || !weights.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", weights.tau));
        }
        let gammas = [weights.gamma_shp, weights.gamma_img, weights.gamma_ovp];
        if gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad(format!("weights must be non-negative, got {gammas:?}"));
        }
        if gammas.iter().all(|&g| g == 0.0) {
            return bad("all energy weights are zero".into());
        }
        if model.prior.dim() != model.eigen.k() {
            return bad("prior dimension differs from mode count".into());
        }
        let (w, h) = posterior.dims();
        for (i, &(x, y)) in seeds.iter().enumerate() {
            let inside = x >= -0.5 && y >= -0.5 && x <= w as f64 - 0.5 && y <= h as f64 - 0.5;
            if !inside || !x.is_finite() || !y.is_finite() {
                return bad(format!("seed {i} at ({x}, {y}) lies outside the {w}x{h} raster"));
            }
        }
        let mut background = 0.0;
        let excess = Grid::from_fn(w, h, |x, y| {
            let p = posterior.grid().get(x, y);
            background -= (1.0 - p).ln();
            (1.0 - p).ln() - p.ln()
        });
        Ok(Self {
            posterior,
            seeds,
            delta,
            weights,
            model,
            excess,
            background,
        })
    }

    pub fn posterior(&self) -> &ProbabilityMap {
        &self.posterior
    }

    pub fn seeds(&self) -> &[(f64, f64)] {
        &self.seeds
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn weights(&self) -> EnergyWeights {
        self.weights
    }

    pub fn model(&self) -> &'m ShapeModel {
        self.model
    }

    pub fn contour_count(&self) -> usize {
        self.seeds.len()
    }

    /// Scene position of the shape frame's center, relative to the frame origin.
    pub fn anchor(&self) -> f64 {
        frame_center(self.model.eigen.frame)
    }

    /// Same scene with different weights.
    pub fn with_weights(&self, weights: EnergyWeights) -> Result<Self, EnergyError> {
        Self::new(
            self.posterior.clone(),
            self.seeds.clone(),
            self.delta,
            weights,
            self.model,
        )
    }

    /// Same scene with the seeds reordered by `perm` (new seed `i` is old seed `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, EnergyError> {
        let seeds = perm.iter().map(|&i| self.seeds[i]).collect();
        Self::new(
            self.posterior.clone(),
            seeds,
            self.delta,
            self.weights,
            self.model,
        )
    }

    /// Lower and upper box bounds of contour `k`'s offset.
    pub fn bounds(&self, k: usize) -> ((f64, f64), (f64, f64)) {
        let (sx, sy) = self.seeds[k];
        ((sx - self.delta, sy - self.delta), (sx + self.delta, sy + self.delta))
    }

    pub(crate) fn excess(&self) -> &Grid {
        &self.excess
    }

    pub(crate) fn background(&self) -> f64 {
        self.background
    }
}

/// Shape coefficients and offset of one contour.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub alpha: ShapeCoefficients,
    /// Scene position of the shape frame's center.
    pub offset: (f64, f64),
}

/// All optimization variables of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourState {
    pub contours: Vec<Contour>,
}

impl ContourState {
    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    /// Flat layout `[alpha_1.., tx_1, ty_1, alpha_2.., tx_2, ty_2, ..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for c in &self.contours {
            v.extend_from_slice(c.alpha.as_slice());
            v.push(c.offset.0);
            v.push(c.offset.1);
        }
        v
    }

    /// Inverse of [`ContourState::to_vec`] for `k` modes per contour.
    pub fn from_slice(values: &[f64], k: usize) -> Self {
        assert_eq!(values.len() % (k + 2), 0, "flat state length must be a multiple of k + 2");
        Self {
            contours: values
                .chunks_exact(k + 2)
                .map(|c| Contour {
                    alpha: ShapeCoefficients(c[..k].to_vec()),
                    offset: (c[k], c[k + 1]),
                })
                .collect(),
        }
    }

    /// Checks contour count, coefficient counts and the offset boxes.
    pub fn validate(&self, config: &SceneConfig<'_>) -> Result<(), EnergyError> {
        if self.len() != config.contour_count() {
            return Err(EnergyError::ContourCount {
                expected: config.contour_count(),
                actual: self.len(),
            });
        }
        let k = config.model().eigen.k();
        let slack = BOX_SLACK * config.delta().max(1.0);
        for (i, (c, &seed)) in self.contours.iter().zip(config.seeds()).enumerate() {
            if c.alpha.len() != k {
                return Err(EnergyError::CoefficientCount {
                    contour: i,
                    expected: k,
                    actual: c.alpha.len(),
                });
            }
            let dx = (c.offset.0 - seed.0).abs();
            let dy = (c.offset.1 - seed.1).abs();
            let finite = c.offset.0.is_finite() && c.offset.1.is_finite();
            if !finite || dx > config.delta() + slack || dy > config.delta() + slack {
                return Err(EnergyError::Infeasible {
                    contour: i,
                    offset: c.offset,
                    seed,
                    delta: config.delta(),
                });
            }
        }
        Ok(())
    }
}

/// Unweighted terms of one energy evaluation and their weighted total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub shape_term: f64,
    pub image_term: f64,
    pub overlap_term: f64,
    /// `g_shp * shape + g_img * image + g_ovp * overlap`.
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn combine(weights: &EnergyWeights, shape: f64, image: f64, overlap: f64) -> Self {
        Self {
            shape_term: shape,
            image_term: image,
            overlap_term: overlap,
            total: weights.gamma_shp * shape
                + weights.gamma_img * image
                + weights.gamma_ovp * overlap,
        }
    }
}
