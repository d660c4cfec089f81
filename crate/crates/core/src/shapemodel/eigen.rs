//! Linear eigenshape model over signed distance fields.
//!
//! A shape with coefficients `alpha` has the level-set field
//! `phi = mean + sum_j alpha_j * mode_j` and the soft interior indicator
//! `H_eps(-phi)`, where `H_eps(z) = 1/2 * (1 + 2/pi * atan(z / eps))`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::raster::Grid;

use super::{AlignedShapeSet, ShapeModelError};

/// Default number of retained modes.
pub const DEFAULT_MODES: usize = 32;
/// Default alignment frame edge in pixels.
pub const DEFAULT_FRAME: usize = 92;
/// Default smooth Heaviside width in pixels.
pub const DEFAULT_EPSILON: f64 = 1.0;

#[inline]
pub fn smooth_heaviside(z: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (z / epsilon).atan())
}

#[inline]
pub fn smooth_heaviside_derivative(z: f64, epsilon: f64) -> f64 {
    epsilon / (PI * (epsilon * epsilon + z * z))
}

/// Mode weights of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCoefficients(pub Vec<f64>);

impl ShapeCoefficients {
    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ShapeCoefficients {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenshapeModel {
    pub frame: usize,
    pub mean: Grid,
    /// Orthonormal under the pixelwise inner product.
    pub modes: Vec<Grid>,
    /// Variance captured by each mode, descending.
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
}

/// Output of [`EigenshapeModel::generate_with_slope`].
#[derive(Clone, Debug)]
pub struct GeneratedShape {
    /// `H_eps(-phi)`, values strictly inside (0, 1).
    pub indicator: Grid,
    /// `H'_eps(-phi)`; the partial with respect to `alpha_j` is `-slope * mode_j`.
    pub slope: Grid,
}

impl EigenshapeModel {
    pub fn k(&self) -> usize {
        self.modes.len()
    }

    /// Level-set field `mean + sum_j alpha_j mode_j`.
    pub fn level_set(&self, alpha: &ShapeCoefficients) -> Grid {
        assert_eq!(alpha.len(), self.k(), "coefficient count must equal mode count");
        let mut phi = self.mean.clone();
        for (a, mode) in alpha.0.iter().zip(&self.modes) {
            if *a == 0.0 {
                continue;
            }
            for (p, m) in phi.values_mut().iter_mut().zip(mode.values()) {
                *p += a * m;
            }
        }
        phi
    }

    /// Smooth interior indicator of the shape in standard position.
    pub fn generate(&self, alpha: &ShapeCoefficients) -> Grid {
        let mut phi = self.level_set(alpha);
        for v in phi.values_mut() {
            *v = smooth_heaviside(-*v, self.epsilon);
        }
        phi
    }

    pub fn generate_with_slope(&self, alpha: &ShapeCoefficients) -> GeneratedShape {
        let phi = self.level_set(alpha);
        let mut indicator = phi.clone();
        let mut slope = phi;
        for (g, s) in indicator.values_mut().iter_mut().zip(slope.values_mut()) {
            let z = -*g;
            *g = smooth_heaviside(z, self.epsilon);
            *s = smooth_heaviside_derivative(z, self.epsilon);
        }
        GeneratedShape { indicator, slope }
    }

    /// `alpha_j = <sdf - mean, mode_j>`.
    pub fn project(&self, sdf: &Grid) -> Result<ShapeCoefficients, ShapeModelError> {
        if sdf.dims() != self.mean.dims() {
            return Err(ShapeModelError::DimensionMismatch {
                expected: self.mean.dims(),
                actual: sdf.dims(),
            });
        }
        let centered: Vec<f64> = sdf
            .values()
            .iter()
            .zip(self.mean.values())
            .map(|(s, m)| s - m)
            .collect();
        Ok(ShapeCoefficients(
            self.modes
                .iter()
                .map(|mode| mode.values().iter().zip(&centered).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    /// Largest deviation of the mode Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.k() {
            for j in i..self.k() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.modes[i].dot(&self.modes[j]) - target).abs());
            }
        }
        worst
    }
}

/// Principal component analysis of the centered SDFs, keeping `k` modes.
///
/// Works on the `N`×`N` Gram matrix of the samples rather than the pixel
/// covariance. Eigenvalues are variances with a `1/N` normalization. Modes
/// are re-orthonormalized and signed so that each mode's entry of largest
/// magnitude is positive. Modes beyond the numerical rank of the data are
/// completed deterministically with zero eigenvalue.
pub fn learn_eigenshape_model(
    set: &AlignedShapeSet,
    k: usize,
    epsilon: f64,
) -> Result<EigenshapeModel, ShapeModelError> {
    let n = set.sdfs.len();
    if k == 0 || k >= n {
        return Err(ShapeModelError::TooFewSamples { k, samples: n });
    }
    let dims = (set.frame, set.frame);
    if let Some(bad) = set.sdfs.iter().find(|g| g.dims() != dims) {
        return Err(ShapeModelError::DimensionMismatch {
            expected: dims,
            actual: bad.dims(),
        });
    }
    let d = set.frame * set.frame;

    let mut mean = vec![0.0; d];
    for sdf in &set.sdfs {
        for (m, v) in mean.iter_mut().zip(sdf.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered: Vec<Vec<f64>> = set
        .sdfs
        .iter()
        .map(|g| g.values().iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let spread = centered
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let magnitude = mean.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if spread <= 1e-12 * magnitude.max(1.0) {
        return Err(ShapeModelError::Degenerate);
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| dot(&centered[i], &centered[j])).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| if j <= i { rows[i][j] } else { rows[j][i] });
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank_floor = top * 1e-12;
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mu = eig.eigenvalues[idx];
        if mu <= rank_floor {
            break;
        }
        let v = eig.eigenvectors.column(idx);
        let mut mode = vec![0.0; d];
        for (i, c) in centered.iter().enumerate() {
            let w = v[i];
            for (m, x) in mode.iter_mut().zip(c) {
                *m += w * x;
            }
        }
        let scale = 1.0 / mu.sqrt();
        mode.iter_mut().for_each(|m| *m *= scale);
        modes.push(mode);
        eigenvalues.push(mu / n as f64);
    }

    // Re-orthonormalize (two passes of modified Gram-Schmidt).
    for _ in 0..2 {
        for i in 0..modes.len() {
            let (done, rest) = modes.split_at_mut(i);
            let current = &mut rest[0];
            for prev in done.iter() {
                let c = dot(prev, current);
                current.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
            }
            let norm = dot(current, current).sqrt();
            current.iter_mut().for_each(|x| *x /= norm);
        }
    }

    // Complete rank-deficient bases with canonical directions.
    let mut basis = 0usize;
    while modes.len() < k {
        let mut cand = vec![0.0; d];
        cand[basis] = 1.0;
        basis += 1;
        for _ in 0..2 {
            for prev in &modes {
                let c = dot(prev, &cand);
                cand.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if norm < 1e-6 {
            continue;
        }
        cand.iter_mut().for_each(|x| *x /= norm);
        modes.push(cand);
        eigenvalues.push(0.0);
    }

    for mode in &mut modes {
        let lead = mode
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, &v)| {
                if v.abs() > best.1.abs() {
                    (i, v)
                } else {
                    best
                }
            })
            .1;
        if lead < 0.0 {
            mode.iter_mut().for_each(|m| *m = -*m);
        }
    }

    let frame = set.frame;
    Ok(EigenshapeModel {
        frame,
        mean: Grid::from_vec(frame, frame, mean).expect("frame-sized mean"),
        modes: modes
            .into_iter()
            .map(|m| Grid::from_vec(frame, frame, m).expect("frame-sized mode"))
            .collect(),
        eigenvalues,
        epsilon,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
