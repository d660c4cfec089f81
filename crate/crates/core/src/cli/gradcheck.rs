//! Analytic gradient against central differences on random scenes and
//! states.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::energy::{
    energy_gradient, finite_difference_gradient, Contour, ContourState, EnergyError, EnergyWeights,
    SceneConfig,
};
use crate::shapemodel::{frame_center, ShapeCoefficients, ShapeModel};
use crate::synth::{render_scene, scene_rng, SceneSpec, SynthError};

/// Contour counts cycled through by successive trials.
pub const CONTOUR_COUNTS: [usize; 3] = [1, 3, 8];
/// Default pass threshold on the maximum relative error.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Streams used by trials start here, clear of corpus scene indices.
const STREAM_BASE: u64 = 1 << 40;
/// Offsets stay this far from the box faces and from bilinear kinks.
const BOX_MARGIN: f64 = 0.5;
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum GradcheckError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Relative error `|a - f| / max(|a|, |f|, 1)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub contours: usize,
    /// Flat index of the worst coordinate.
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub trials: Vec<TrialOutcome>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&TrialOutcome> {
        self.trials.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |t| t.rel_error)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn summary(&self, k: usize) -> String {
        let mut s = String::new();
        for t in &self.trials {
            s.push_str(&format!(
                "trial {:>3}  M={}  max rel err {:.3e}\n",
                t.trial, t.contours, t.rel_error
            ));
        }
        if let Some(w) = self.worst() {
            let (contour, slot) = (w.coordinate / (k + 2), w.coordinate % (k + 2));
            let name = match slot {
                s if s < k => format!("alpha[{s}]"),
                s if s == k => "tx".to_string(),
                _ => "ty".to_string(),
            };
            s.push_str(&format!(
                "worst: trial {} coordinate {} (contour {contour} {name}) analytic {:.12e} numeric {:.12e} rel err {:.3e}\n",
                w.trial, w.coordinate, w.analytic, w.numeric, w.rel_error
            ));
        }
        s.push_str(&format!(
            "{} (tolerance {:e})\n",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tolerance
        ));
        s
    }
}

/// A random scene with `m` crowns and a random feasible state on it, drawn
/// from stream `trial` of `spec.rng_seed`.
pub fn random_problem<'m>(
    spec: &SceneSpec,
    model: &'m ShapeModel,
    delta: f64,
    trial: usize,
    m: usize,
) -> Result<(SceneConfig<'m>, ContourState), GradcheckError> {
    let mut rng = scene_rng(spec.rng_seed, STREAM_BASE + trial as u64);
    let spec = SceneSpec {
        crowns: (m, m),
        baseline_miss_rate: 0.0,
        false_positive_rate: 0.0,
        ..spec.clone()
    };
    let scene = render_scene(&spec, &mut rng)?;
    let weights = EnergyWeights {
        gamma_shp: rng.random_range(0.5..2.0),
        gamma_img: rng.random_range(0.5..2.0),
        gamma_ovp: rng.random_range(1.0..10.0),
        tau: rng.random_range(5.0..50.0),
    };
    let config = SceneConfig::new(scene.posterior, scene.seeds.clone(), delta, weights, model)?;
    let anchor = frame_center(model.eigen.frame);
    let reach = (delta - BOX_MARGIN).max(0.0);
    let offset = |seed: f64, rng: &mut rand_chacha::ChaCha8Rng| loop {
        let v = seed + rng.random_range(-reach..=reach);
        let frac = (v - anchor).rem_euclid(1.0);
        if frac > KINK_MARGIN && frac < 1.0 - KINK_MARGIN {
            return v;
        }
    };
    let contours = scene
        .seeds
        .iter()
        .map(|&(sx, sy)| {
            let alpha = model
                .eigen
                .eigenvalues
                .iter()
                .map(|l| 0.5 * l.max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Contour {
                alpha: ShapeCoefficients(alpha),
                offset: (offset(sx, &mut rng), offset(sy, &mut rng)),
            }
        })
        .collect();
    Ok((config, ContourState { contours }))
}

/// Runs `trials` random draws with contour counts cycling through
/// [`CONTOUR_COUNTS`]. `mutate` is applied to each analytic gradient before
/// comparison, for checking that the check itself catches errors.
pub fn gradcheck(
    spec: &SceneSpec,
    model: &ShapeModel,
    delta: f64,
    fd_step: f64,
    trials: usize,
    mutate: Option<&(dyn Fn(&mut [f64]) + Sync)>,
) -> Result<GradcheckReport, GradcheckError> {
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let m = CONTOUR_COUNTS[t % CONTOUR_COUNTS.len()];
            let (config, state) = random_problem(spec, model, delta, t, m)?;
            let mut analytic = energy_gradient(&state, &config)?;
            if let Some(f) = mutate {
                f(&mut analytic);
            }
            let numeric = finite_difference_gradient(&state, &config, fd_step)?;
            let (coordinate, rel_error) = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, f)| relative_error(*a, *f))
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one coordinate");
            Ok(TrialOutcome {
                trial: t,
                contours: m,
                coordinate,
                analytic: analytic[coordinate],
                numeric: numeric[coordinate],
                rel_error,
            })
        })
        .collect::<Result<Vec<_>, GradcheckError>>()?;
    Ok(GradcheckReport {
        trials: outcomes,
        tolerance: DEFAULT_TOLERANCE,
    })
}
