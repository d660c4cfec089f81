use crate::raster::Grid;

/// Smooth maximum `sum_i x_i e^{tau x_i} / sum_i e^{tau x_i}` of one pixel.
///
/// Writes `dU/dx_i = w_i (1 + tau (x_i - U))` into `partials` when given,
/// where `w_i` are the softmax weights.
pub fn smooth_max(values: &[f64], tau: f64, partials: Option<&mut [f64]>) -> f64 {
    debug_assert!(!values.is_empty());
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    // Accumulate the weighted gap below the maximum so rounding can never
    // push the result outside [min, max].
    let mut gap = 0.0;
    let mut den = 0.0;
    for &x in values {
        let w = (tau * (x - top)).exp();
        gap += (top - x) * w;
        den += w;
    }
    let u = (top - gap / den).max(low);
    if let Some(partials) = partials {
        for (p, &x) in partials.iter_mut().zip(values) {
            let w = (tau * (x - top)).exp() / den;
            *p = w * (1.0 + tau * (x - u));
        }
    }
    u
}

/// Pixelwise smooth maximum of equally sized fields.
pub fn smooth_union(fields: &[Grid], tau: f64) -> Grid {
    assert!(!fields.is_empty(), "smooth union of zero fields");
    let (w, h) = fields[0].dims();
    assert!(fields.iter().all(|f| f.dims() == (w, h)), "field dimensions differ");
    let mut buf = vec![0.0; fields.len()];
    Grid::from_fn(w, h, |x, y| {
        for (b, f) in buf.iter_mut().zip(fields) {
            *b = f.get(x, y);
        }
        smooth_max(&buf, tau, None)
    })
}

/// `dU/dfield_i` for every field, pixelwise.
pub fn smooth_union_partials(fields: &[Grid], tau: f64) -> Vec<Grid> {
    assert!(!fields.is_empty(), "smooth union of zero fields");
    let (w, h) = fields[0].dims();
    let m = fields.len();
    let mut out = vec![Grid::new(w, h); m];
    let mut vals = vec![0.0; m];
    let mut parts = vec![0.0; m];
    for y in 0..h {
        for x in 0..w {
            for (v, f) in vals.iter_mut().zip(fields) {
                *v = f.get(x, y);
            }
            smooth_max(&vals, tau, Some(&mut parts));
            for (o, p) in out.iter_mut().zip(&parts) {
                o.set(x, y, *p);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_is_identity() {
        assert_eq!(smooth_max(&[0.37], 20.0, None), 0.37);
    }

    #[test]
    fn two_values_sharp_tau() {
        let u = smooth_max(&[0.9, 0.1], 100.0, None);
        assert!((u - 0.9).abs() < 1e-3);
    }

    #[test]
    fn large_tau_does_not_overflow() {
        let u = smooth_max(&[1.0, 0.0, 0.0], 5000.0, None);
        assert!((u - 1.0).abs() < 1e-12);
    }
}
