//! Joint minimization of the scene energy over all contours with projected
//! L-BFGS, followed by pruning of contours that collapsed to nothing.

mod lbfgs;
mod output;

use thiserror::Error;

use crate::energy::{Contour, ContourState, EnergyBreakdown, EnergyError, SceneConfig};
use crate::raster::{centroid, BinaryMask, PlacedWindow};
use crate::shapemodel::ShapeCoefficients;

pub use lbfgs::refine;
pub use output::{read_detection_index, write_detections, IndexEntry, DETECTION_INDEX};

/// Default area below which a contour counts as empty, in pixels.
pub const DEFAULT_AREA_MIN: f64 = 20.0;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
    #[error("non-finite energy at iteration {iteration}; state: {state:?}")]
    NonFinite { iteration: usize, state: Vec<f64> },
    #[error("contour {0} has an empty mask")]
    EmptyDetection(usize),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}

/// Backtracking Armijo parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    pub c: f64,
    pub shrink: f64,
    pub max_trials: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c: 1e-4,
            shrink: 0.5,
            max_trials: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSettings {
    pub memory: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub line_search: LineSearch,
    /// Contours whose placed mask has fewer pixels than this are pruned.
    pub area_min: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 500,
            rel_tol: 1e-6,
            grad_tol: 1e-5,
            line_search: LineSearch::default(),
            area_min: DEFAULT_AREA_MIN,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidSettings(m));
        if self.memory == 0 {
            return bad("memory must be positive".into());
        }
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("grad_tol", self.grad_tol),
            ("line_search.c", self.line_search.c),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.line_search.c >= 1.0 {
            return bad(format!("line_search.c must be below 1, got {}", self.line_search.c));
        }
        if !(self.line_search.shrink > 0.0 && self.line_search.shrink < 1.0) {
            return bad(format!("line_search.shrink must lie in (0, 1), got {}", self.line_search.shrink));
        }
        if self.line_search.max_trials == 0 {
            return bad("line_search.max_trials must be positive".into());
        }
        if !(self.area_min >= 0.0) || !self.area_min.is_finite() {
            return bad(format!("area_min must be non-negative, got {}", self.area_min));
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    RelativeDecrease,
    ProjectedGradient,
    MaxIterations,
    /// The line search found no decrease along the steepest-descent path.
    LineSearchFailed,
}

/// A kept contour materialized in scene coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedDetection {
    pub contour: usize,
    pub mask: BinaryMask,
    pub centroid: (f64, f64),
}

/// One accepted iterate's record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub energy: EnergyBreakdown,
    pub projected_grad_norm: f64,
    pub step: f64,
    /// Largest `|offset - seed|_inf - delta` over contours; at most 0 when
    /// the iterate is feasible.
    pub box_excess: f64,
}

#[derive(Clone, Debug)]
pub struct RefinementResult {
    pub initial_state: ContourState,
    pub final_state: ContourState,
    /// Entry 0 is the initialization.
    pub energy_trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub kept: Vec<usize>,
    pub pruned: Vec<usize>,
    /// Placed area of every contour, kept or not.
    pub areas: Vec<usize>,
    pub detections: Vec<RefinedDetection>,
}

impl RefinementResult {
    /// Every total is at most its predecessor.
    pub fn is_monotone(&self) -> bool {
        self.energy_trace.windows(2).all(|w| w[1].energy.total <= w[0].energy.total)
    }

    /// Every recorded iterate lies inside its boxes, up to rounding in
    /// `seed ± delta`.
    pub fn is_feasible(&self) -> bool {
        self.energy_trace.iter().all(|t| t.box_excess <= 1e-9)
    }

    pub fn final_energy(&self) -> EnergyBreakdown {
        self.energy_trace.last().expect("trace holds the initialization").energy
    }

    /// One line per iterate: `iter total shape image overlap grad_norm step`.
    pub fn log(&self) -> String {
        let mut s = String::from("# iter total shape image overlap grad_norm step\n");
        for (i, t) in self.energy_trace.iter().enumerate() {
            let e = t.energy;
            s.push_str(&format!(
                "{i} {:.9e} {:.9e} {:.9e} {:.9e} {:.6e} {:.6e}\n",
                e.total, e.shape_term, e.image_term, e.overlap_term, t.projected_grad_norm, t.step
            ));
        }
        s.push_str(&format!(
            "# stop {:?} after {} iterations; kept {:?} pruned {:?}\n",
            self.stop_reason, self.iterations, self.kept, self.pruned
        ));
        s
    }
}

/// Largest `|offset - seed|_inf - delta` over all contours.
pub fn box_excess(state: &ContourState, config: &SceneConfig<'_>) -> f64 {
    state
        .contours
        .iter()
        .zip(config.seeds())
        .map(|(c, s)| (c.offset.0 - s.0).abs().max((c.offset.1 - s.1).abs()) - config.delta())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean shape at every seed.
pub fn initialize_states(config: &SceneConfig<'_>) -> ContourState {
    let k = config.model().eigen.k();
    ContourState {
        contours: config
            .seeds()
            .iter()
            .map(|&seed| Contour {
                alpha: ShapeCoefficients::zeros(k),
                offset: seed,
            })
            .collect(),
    }
}

fn placed_mask(contour: &Contour, config: &SceneConfig<'_>) -> BinaryMask {
    let local = config.model().eigen.generate(&contour.alpha);
    let anchor = config.anchor();
    let origin = (contour.offset.0 - anchor, contour.offset.1 - anchor);
    let (w, h) = config.posterior().dims();
    PlacedWindow::place(&local, origin, w, h).to_grid(w, h).threshold(0.5)
}

/// Scene mask of one contour: its placed field at or above 0.5.
pub fn extract_detection(
    state: &ContourState,
    index: usize,
    config: &SceneConfig<'_>,
) -> Result<RefinedDetection, OptimizerError> {
    let mask = placed_mask(&state.contours[index], config);
    let centroid = centroid(&mask).map_err(|_| OptimizerError::EmptyDetection(index))?;
    Ok(RefinedDetection {
        contour: index,
        mask,
        centroid,
    })
}

/// Splits contours into kept and pruned; a contour is pruned iff its placed
/// mask has area strictly below `area_min` or is empty. Also returns every
/// area.
pub fn prune_empty(
    state: &ContourState,
    config: &SceneConfig<'_>,
    area_min: f64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let areas: Vec<usize> = state
        .contours
        .iter()
        .map(|c| placed_mask(c, config).count())
        .collect();
    let (kept, pruned) = (0..state.len()).partition(|&i| areas[i] > 0 && areas[i] as f64 >= area_min);
    (kept, pruned, areas)
}
