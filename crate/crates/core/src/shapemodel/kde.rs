use super::{ShapeCoefficients, ShapeModelError};

/// Smallest admissible bandwidth derived from data.
pub const MIN_BANDWIDTH: f64 = 1e-3;

/// Isotropic Gaussian kernel density over training coefficient vectors.
///
/// The normalization constant of the kernel is dropped, so log-densities are
/// only meaningful up to an additive constant.
#[derive(Clone, Debug, PartialEq)]
pub struct KdePrior {
    samples: Vec<Vec<f64>>,
    bandwidth: f64,
}

impl KdePrior {
    pub fn new(samples: Vec<Vec<f64>>, bandwidth: f64) -> Result<Self, ShapeModelError> {
        if samples.len() < 2 {
            return Err(ShapeModelError::InvalidPrior(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(ShapeModelError::InvalidPrior(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let k = samples[0].len();
        if samples.iter().any(|s| s.len() != k) {
            return Err(ShapeModelError::InvalidPrior(
                "samples have differing lengths".into(),
            ));
        }
        Ok(Self { samples, bandwidth })
    }

    /// Bandwidth set to the mean nearest-neighbor distance among the samples,
    /// floored at [`MIN_BANDWIDTH`].
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Result<Self, ShapeModelError> {
        if samples.len() < 2 {
            return Self::new(samples, 1.0);
        }
        let bandwidth = mean_nearest_neighbor_distance(&samples).max(MIN_BANDWIDTH);
        Self::new(samples, bandwidth)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// `log( (1/N) sum_i exp(-|alpha - s_i|^2 / (2 sigma^2)) )` and its gradient.
    pub fn log_density(&self, alpha: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(alpha.len(), self.dim(), "coefficient count must match prior");
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let exponents: Vec<f64> = self
            .samples
            .iter()
            .map(|s| -squared_distance(alpha, s) * inv)
            .collect();
        let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = exponents.iter().map(|e| (e - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let value = top + total.ln() - (self.samples.len() as f64).ln();

        let scale = 1.0 / (self.bandwidth * self.bandwidth * total);
        let mut grad = vec![0.0; alpha.len()];
        for (s, w) in self.samples.iter().zip(&weights) {
            if *w == 0.0 {
                continue;
            }
            for ((g, si), a) in grad.iter_mut().zip(s).zip(alpha) {
                *g += w * (si - a) * scale;
            }
        }
        (value, grad)
    }
}

pub fn kde_log_prior(prior: &KdePrior, alpha: &ShapeCoefficients) -> (f64, Vec<f64>) {
    prior.log_density(alpha.as_slice())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_nearest_neighbor_distance(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len();
    let total: f64 = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_distance(&samples[i], &samples[j]))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / n as f64
}
