use std::collections::VecDeque;

use crate::energy::{evaluate, ContourState, EnergyBreakdown, SceneConfig};

use super::{
    box_excess, extract_detection, initialize_states, prune_empty, OptimizerError, OptimizerSettings,
    RefinementResult, StopReason, TraceEntry,
};

/// Curvature pairs with `s.y` at or below this are skipped.
const CURVATURE_EPS: f64 = 1e-10;
/// Floor on the per-coordinate scale of shape coefficients.
const MIN_SCALE: f64 = 1e-3;

/// The problem in whitened coordinates `z = x / scale`: shape coefficients
/// are divided by their mode's standard deviation, offsets stay in pixels.
struct Problem<'a, 'm> {
    config: &'a SceneConfig<'m>,
    k: usize,
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Problem<'_, '_> {
    fn new<'a, 'm>(config: &'a SceneConfig<'m>) -> Problem<'a, 'm> {
        let eigen = &config.model().eigen;
        let k = eigen.k();
        let m = config.contour_count();
        let mut scale = Vec::with_capacity(m * (k + 2));
        let mut lower = Vec::with_capacity(m * (k + 2));
        let mut upper = Vec::with_capacity(m * (k + 2));
        for c in 0..m {
            for &lambda in &eigen.eigenvalues {
                scale.push(lambda.max(0.0).sqrt().max(MIN_SCALE));
                lower.push(f64::NEG_INFINITY);
                upper.push(f64::INFINITY);
            }
            let (lo, hi) = config.bounds(c);
            scale.extend([1.0, 1.0]);
            lower.extend([lo.0, lo.1]);
            upper.extend([hi.0, hi.1]);
        }
        Problem {
            config,
            k,
            scale,
            lower,
            upper,
        }
    }

    fn to_state(&self, z: &[f64]) -> ContourState {
        let x: Vec<f64> = z.iter().zip(&self.scale).map(|(z, s)| z * s).collect();
        ContourState::from_slice(&x, self.k)
    }

    fn to_z(&self, state: &ContourState) -> Vec<f64> {
        state.to_vec().iter().zip(&self.scale).map(|(x, s)| x / s).collect()
    }

    fn eval(&self, z: &[f64], iteration: usize) -> Result<(EnergyBreakdown, Vec<f64>), OptimizerError> {
        let state = self.to_state(z);
        let (e, g) = evaluate(&state, self.config)?;
        if !e.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(OptimizerError::NonFinite {
                iteration,
                state: state.to_vec(),
            });
        }
        Ok((e, g.iter().zip(&self.scale).map(|(g, s)| g * s).collect()))
    }

    /// Clamps onto the boxes; reports whether any coordinate was clipped.
    fn project(&self, z: &mut [f64]) -> bool {
        let mut clipped = false;
        for ((v, lo), hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            let c = v.clamp(*lo, *hi);
            clipped |= c != *v;
            *v = c;
        }
        clipped
    }

    /// Norm of `z - P(z - g)`.
    fn projected_grad_norm(&self, z: &[f64], g: &[f64]) -> f64 {
        z.iter()
            .zip(g)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((z, g), (lo, hi))| (z - (z - g).clamp(*lo, *hi)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Two-loop recursion: `-H g` from the stored pairs.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Step {
    z: Vec<f64>,
    energy: EnergyBreakdown,
    grad: Vec<f64>,
    length: f64,
    clipped: bool,
}

/// Backtracking along the projected path `P(z + t d)` until
/// `f(z_t) <= f + c g.(z_t - z)`.
fn line_search(
    problem: &Problem<'_, '_>,
    settings: &OptimizerSettings,
    z: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    iteration: usize,
) -> Result<Option<Step>, OptimizerError> {
    let ls = settings.line_search;
    let mut t = 1.0;
    for _ in 0..ls.max_trials {
        let mut trial: Vec<f64> = z.iter().zip(d).map(|(z, d)| z + t * d).collect();
        let clipped = problem.project(&mut trial);
        let moved: Vec<f64> = trial.iter().zip(z).map(|(a, b)| a - b).collect();
        let decrease = dot(g, &moved);
        if decrease >= 0.0 {
            // The projected path no longer descends; shrinking cannot help.
            return Ok(None);
        }
        let (energy, grad) = problem.eval(&trial, iteration)?;
        if energy.total <= f + ls.c * decrease && energy.total < f {
            return Ok(Some(Step {
                z: trial,
                energy,
                grad,
                length: t,
                clipped,
            }));
        }
        t *= ls.shrink;
    }
    Ok(None)
}

/// Minimizes the scene energy from the seed initialization.
///
/// Projected L-BFGS in whitened coordinates. After each accepted step the
/// offsets are clamped into their boxes; the curvature pair is discarded
/// whenever that clamp was active or `s.y` is not safely positive. A search
/// direction that fails to descend resets the history to steepest descent.
pub fn refine(config: &SceneConfig<'_>, settings: &OptimizerSettings) -> Result<RefinementResult, OptimizerError> {
    settings.validate()?;
    let problem = Problem::new(config);
    let initial_state = initialize_states(config);
    let mut z = problem.to_z(&initial_state);
    let (mut energy, mut g) = problem.eval(&z, 0)?;
    let mut trace = vec![TraceEntry {
        energy,
        projected_grad_norm: problem.projected_grad_norm(&z, &g),
        step: 0.0,
        box_excess: box_excess(&initial_state, config),
    }];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        if trace.last().unwrap().projected_grad_norm < settings.grad_tol {
            stop = StopReason::ProjectedGradient;
            break;
        }
        let mut d = direction(&g, &history);
        if history.is_empty() || dot(&g, &d) >= 0.0 {
            history.clear();
            let norm = dot(&g, &g).sqrt();
            d = g.iter().map(|v| -v / norm).collect();
        }
        let mut step = line_search(&problem, settings, &z, energy.total, &g, &d, iterations + 1)?;
        if step.is_none() && !history.is_empty() {
            history.clear();
            let norm = dot(&g, &g).sqrt();
            d = g.iter().map(|v| -v / norm).collect();
            step = line_search(&problem, settings, &z, energy.total, &g, &d, iterations + 1)?;
        }
        let Some(step) = step else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = step.z.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if !step.clipped && sy > CURVATURE_EPS {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let previous = energy.total;
        z = step.z;
        g = step.grad;
        energy = step.energy;
        trace.push(TraceEntry {
            energy,
            projected_grad_norm: problem.projected_grad_norm(&z, &g),
            step: step.length,
            box_excess: box_excess(&problem.to_state(&z), config),
        });
        if previous - energy.total < settings.rel_tol * previous.abs().max(1.0) {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    if stop == StopReason::MaxIterations && trace.last().unwrap().projected_grad_norm < settings.grad_tol {
        stop = StopReason::ProjectedGradient;
    }

    let final_state = problem.to_state(&z);
    // Offsets carry no rescaling, but round-tripping through z can still move
    // shape coefficients by an ulp; the initialization is returned untouched.
    let final_state = if iterations == 0 { initial_state.clone() } else { final_state };
    let (kept, pruned, areas) = prune_empty(&final_state, config, settings.area_min);
    let detections = kept
        .iter()
        .map(|&i| extract_detection(&final_state, i, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RefinementResult {
        initial_state,
        final_state,
        energy_trace: trace,
        iterations,
        converged: matches!(stop, StopReason::RelativeDecrease | StopReason::ProjectedGradient),
        stop_reason: stop,
        kept,
        pruned,
        areas,
        detections,
    })
}
