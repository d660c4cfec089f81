use rayon::prelude::*;

use crate::raster::{Grid, PlacedWindow};
use crate::shapemodel::GeneratedShape;

use super::{ContourState, EnergyBreakdown, EnergyError, SceneConfig};

struct PlacedContour {
    shape: GeneratedShape,
    window: PlacedWindow,
}

fn place_all(state: &ContourState, config: &SceneConfig<'_>, with_slope: bool) -> Vec<PlacedContour> {
    let eigen = &config.model().eigen;
    let anchor = config.anchor();
    let (w, h) = config.posterior().dims();
    state
        .contours
        .par_iter()
        .map(|c| {
            let shape = if with_slope {
                eigen.generate_with_slope(&c.alpha)
            } else {
                GeneratedShape {
                    indicator: eigen.generate(&c.alpha),
                    slope: Grid::new(1, 1),
                }
            };
            let origin = (c.offset.0 - anchor, c.offset.1 - anchor);
            let window = PlacedWindow::place(&shape.indicator, origin, w, h);
            PlacedContour { shape, window }
        })
        .collect()
}

/// Scene-sized placed indicator of every contour.
pub fn place_shapes(state: &ContourState, config: &SceneConfig<'_>) -> Result<Vec<Grid>, EnergyError> {
    state.validate(config)?;
    let (w, h) = config.posterior().dims();
    Ok(place_all(state, config, false)
        .into_iter()
        .map(|p| p.window.to_grid(w, h))
        .collect())
}

pub fn total_energy(state: &ContourState, config: &SceneConfig<'_>) -> Result<EnergyBreakdown, EnergyError> {
    state.validate(config)?;
    Ok(run(state, config, false).0)
}

/// Analytic gradient in the flat layout of [`ContourState::to_vec`].
pub fn energy_gradient(state: &ContourState, config: &SceneConfig<'_>) -> Result<Vec<f64>, EnergyError> {
    state.validate(config)?;
    Ok(run(state, config, true).1.expect("gradient requested"))
}

/// Energy and gradient in one pass.
pub fn evaluate(
    state: &ContourState,
    config: &SceneConfig<'_>,
) -> Result<(EnergyBreakdown, Vec<f64>), EnergyError> {
    state.validate(config)?;
    let (e, g) = run(state, config, true);
    Ok((e, g.expect("gradient requested")))
}

fn run(state: &ContourState, config: &SceneConfig<'_>, want_grad: bool) -> (EnergyBreakdown, Option<Vec<f64>>) {
    let weights = config.weights();
    let tau = weights.tau;
    let m = state.len();
    let k = config.model().eigen.k();
    let placed = place_all(state, config, want_grad);

    // Shape term.
    let mut shape_value = 0.0;
    let mut shape_grads = Vec::with_capacity(m);
    for c in &state.contours {
        let (lp, g) = config.model().prior.log_density(c.alpha.as_slice());
        shape_value -= lp;
        shape_grads.push(g);
    }

    // Union, image and overlap terms over the pixels any window touches.
    let excess = config.excess();
    let mut image_value = config.background();
    let mut overlap_value = 0.0;
    let mut upstream: Vec<Vec<f64>> = if want_grad {
        placed.iter().map(|p| vec![0.0; p.window.values.len()]).collect()
    } else {
        Vec::new()
    };

    let nonempty: Vec<&PlacedWindow> = placed
        .iter()
        .map(|p| &p.window)
        .filter(|w| w.width > 0)
        .collect();
    if !nonempty.is_empty() {
        let x_lo = nonempty.iter().map(|w| w.x0).min().unwrap();
        let y_lo = nonempty.iter().map(|w| w.y0).min().unwrap();
        let x_hi = nonempty.iter().map(|w| w.x0 + w.width).max().unwrap();
        let y_hi = nonempty.iter().map(|w| w.y0 + w.height).max().unwrap();

        let mut idx = Vec::with_capacity(m);
        let mut vals = Vec::with_capacity(m);
        for y in y_lo..y_hi {
            let rows: Vec<usize> = (0..m)
                .filter(|&i| {
                    let w = &placed[i].window;
                    w.width > 0 && y >= w.y0 && y < w.y0 + w.height
                })
                .collect();
            if rows.is_empty() {
                continue;
            }
            for x in x_lo..x_hi {
                idx.clear();
                vals.clear();
                for &i in &rows {
                    let w = &placed[i].window;
                    if x >= w.x0 && x < w.x0 + w.width {
                        idx.push(i);
                        vals.push(w.values[(y - w.y0) * w.width + (x - w.x0)]);
                    }
                }
                if idx.is_empty() {
                    continue;
                }
                let zeros = (m - idx.len()) as f64;
                let mut top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if zeros > 0.0 {
                    top = top.max(0.0);
                }
                let mut num = 0.0;
                let mut den = zeros * (-tau * top).exp();
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for &v in &vals {
                    let e = (tau * (v - top)).exp();
                    num += v * e;
                    den += e;
                    sum += v;
                    sum_sq += v * v;
                }
                let u = num / den;
                let slope = excess.get(x, y);
                image_value += u * slope;
                overlap_value += 0.5 * (sum * sum - sum_sq);

                if want_grad {
                    for (&i, &v) in idx.iter().zip(&vals) {
                        let wgt = (tau * (v - top)).exp() / den;
                        let du = wgt * (1.0 + tau * (v - u));
                        let w = &placed[i].window;
                        upstream[i][(y - w.y0) * w.width + (x - w.x0)] =
                            weights.gamma_img * slope * du + weights.gamma_ovp * (sum - v);
                    }
                }
            }
        }
    }

    let breakdown = EnergyBreakdown::combine(&weights, shape_value, image_value, overlap_value);
    if !want_grad {
        return (breakdown, None);
    }

    let eigen = &config.model().eigen;
    let per_contour: Vec<Vec<f64>> = placed
        .par_iter()
        .zip(upstream.par_iter())
        .zip(shape_grads.par_iter())
        .map(|((p, up), sg)| {
            let mut g = vec![0.0; k + 2];
            let (dlocal, gx, gy) = p.window.adjoint(&p.shape.indicator, up);
            let dphi: Vec<f64> = dlocal
                .values()
                .iter()
                .zip(p.shape.slope.values())
                .map(|(d, s)| -d * s)
                .collect();
            for (j, mode) in eigen.modes.iter().enumerate() {
                let img: f64 = mode.values().iter().zip(&dphi).map(|(a, b)| a * b).sum();
                g[j] = img - weights.gamma_shp * sg[j];
            }
            g[k] = gx;
            g[k + 1] = gy;
            g
        })
        .collect();
    (breakdown, Some(per_contour.concat()))
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference<E>(
    mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, E> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference gradient of [`total_energy`], same layout as
/// [`energy_gradient`]. Every probe must stay inside the offset boxes.
pub fn finite_difference_gradient(
    state: &ContourState,
    config: &SceneConfig<'_>,
    h: f64,
) -> Result<Vec<f64>, EnergyError> {
    if !(h > 0.0) {
        return Err(EnergyError::InvalidConfig(format!("step must be positive, got {h}")));
    }
    state.validate(config)?;
    let k = config.model().eigen.k();
    let x = state.to_vec();
    central_difference(
        |v| total_energy(&ContourState::from_slice(v, k), config).map(|e| e.total),
        &x,
        h,
    )
}
