//! Exact squared Euclidean distance transform (Felzenszwalb & Huttenlocher).

use super::BinaryMask;

const FAR: f64 = 1e20;

/// Squared distance from every pixel to the nearest pixel whose mask value
/// equals `target`. Pixels have distance 0 to themselves. If no pixel
/// matches, every entry is a large sentinel (1e20).
pub fn squared_distance_to(mask: &BinaryMask, target: bool) -> Vec<f64> {
    let (w, h) = mask.dims();
    let mut d: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b == target { 0.0 } else { FAR })
        .collect();

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = d[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            d[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&d[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        d[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

/// Lower envelope of parabolas rooted at `(q, f[q])`.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if f.iter().all(|&x| x >= FAR) {
        out.copy_from_slice(f);
        return;
    }
    let mut k = 0usize;
    // Start from the first finite parabola so sentinels never enter the envelope.
    let first = f.iter().position(|&x| x < FAR).unwrap();
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if f[q] >= FAR {
            continue;
        }
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this never underflows k.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *o = (qf - p) * (qf - p) + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(mask: &BinaryMask, target: bool) -> Vec<f64> {
        let (w, h) = mask.dims();
        let pts: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y) == target)
            .collect();
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                pts.iter()
                    .map(|&(px, py)| {
                        let dx = x as f64 - px as f64;
                        let dy = y as f64 - py as f64;
                        dx * dx + dy * dy
                    })
                    .fold(FAR, f64::min)
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_pseudo_random_masks() {
        let mut state = 0x2545F4914F6CDD1Du64;
        for trial in 0..20 {
            let (w, h) = (5 + trial % 7, 4 + trial % 5);
            let mask = BinaryMask::from_fn(w, h, |_, _| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                state % 5 == 0
            });
            for target in [true, false] {
                assert_eq!(squared_distance_to(&mask, target), brute(&mask, target));
            }
        }
    }

    #[test]
    fn no_target_pixels_gives_sentinel() {
        let mask = BinaryMask::new(3, 2);
        assert!(squared_distance_to(&mask, true).iter().all(|&d| d >= FAR));
    }
}
