//! Sub-pixel placement of a local raster into a scene by bilinear splatting.
//!
//! Local pixel `(i, j)` lands at the continuous scene position
//! `(i + ox, j + oy)`. The scene value at `(x, y)` is the local raster
//! bilinearly sampled at `(x - ox, y - oy)`, with zero outside the local
//! raster. Integer offsets reproduce an exact shifted copy.

use super::Grid;

/// A placed local raster restricted to the scene window it touches.
#[derive(Clone, Debug)]
pub struct PlacedWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Local mass that fell outside the scene.
    pub clipped_mass: f64,
    ix: i64,
    iy: i64,
    fx: f64,
    fy: f64,
}

impl PlacedWindow {
    pub fn place(local: &Grid, origin: (f64, f64), scene_w: usize, scene_h: usize) -> Self {
        let ix = origin.0.floor() as i64;
        let iy = origin.1.floor() as i64;
        let fx = origin.0 - ix as f64;
        let fy = origin.1 - iy as f64;
        let (lw, lh) = local.dims();

        let xs = ix.max(0);
        let xe = (ix + lw as i64).min(scene_w as i64 - 1);
        let ys = iy.max(0);
        let ye = (iy + lh as i64).min(scene_h as i64 - 1);
        let (width, height) = if xe < xs || ye < ys {
            (0, 0)
        } else {
            ((xe - xs + 1) as usize, (ye - ys + 1) as usize)
        };

        let mut window = Self {
            x0: xs.max(0) as usize,
            y0: ys.max(0) as usize,
            width,
            height,
            values: vec![0.0; width * height],
            clipped_mass: 0.0,
            ix,
            iy,
            fx,
            fy,
        };
        let wx = [1.0 - fx, fx];
        let wy = [1.0 - fy, fy];
        for wyi in 0..height {
            let ly = (window.y0 + wyi) as i64 - iy;
            for wxi in 0..width {
                let lx = (window.x0 + wxi) as i64 - ix;
                let mut acc = 0.0;
                for (b, &wb) in wy.iter().enumerate() {
                    for (a, &wa) in wx.iter().enumerate() {
                        acc += wa * wb * sample(local, lx - a as i64, ly - b as i64);
                    }
                }
                window.values[wyi * width + wxi] = acc;
            }
        }
        window.clipped_mass = local.sum() - window.values.iter().sum::<f64>();
        window
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.width && y < self.y0 + self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        if self.contains(x, y) {
            self.values[(y - self.y0) * self.width + (x - self.x0)]
        } else {
            0.0
        }
    }

    /// Partial derivatives of every window value with respect to the two
    /// origin coordinates (right derivative at integer origins).
    pub fn offset_partials(&self, local: &Grid) -> (Vec<f64>, Vec<f64>) {
        let mut dx = vec![0.0; self.values.len()];
        let mut dy = vec![0.0; self.values.len()];
        let wx = [1.0 - self.fx, self.fx];
        let wy = [1.0 - self.fy, self.fy];
        for wyi in 0..self.height {
            let ly = (self.y0 + wyi) as i64 - self.iy;
            for wxi in 0..self.width {
                let lx = (self.x0 + wxi) as i64 - self.ix;
                let s00 = sample(local, lx, ly);
                let s10 = sample(local, lx - 1, ly);
                let s01 = sample(local, lx, ly - 1);
                let s11 = sample(local, lx - 1, ly - 1);
                let i = wyi * self.width + wxi;
                dx[i] = wy[0] * (s10 - s00) + wy[1] * (s11 - s01);
                dy[i] = wx[0] * (s01 - s00) + wx[1] * (s11 - s10);
            }
        }
        (dx, dy)
    }

    /// Pulls a gradient over the window back to the local raster and the origin.
    /// Returns `(d/dlocal, d/dox, d/doy)`.
    pub fn adjoint(&self, local: &Grid, upstream: &[f64]) -> (Grid, f64, f64) {
        debug_assert_eq!(upstream.len(), self.values.len());
        let (lw, lh) = local.dims();
        let mut dlocal = Grid::new(lw, lh);
        let wx = [1.0 - self.fx, self.fx];
        let wy = [1.0 - self.fy, self.fy];
        let (mut gx, mut gy) = (0.0, 0.0);
        for wyi in 0..self.height {
            let ly = (self.y0 + wyi) as i64 - self.iy;
            for wxi in 0..self.width {
                let u = upstream[wyi * self.width + wxi];
                if u == 0.0 {
                    continue;
                }
                let lx = (self.x0 + wxi) as i64 - self.ix;
                let s00 = sample(local, lx, ly);
                let s10 = sample(local, lx - 1, ly);
                let s01 = sample(local, lx, ly - 1);
                let s11 = sample(local, lx - 1, ly - 1);
                gx += u * (wy[0] * (s10 - s00) + wy[1] * (s11 - s01));
                gy += u * (wx[0] * (s01 - s00) + wx[1] * (s11 - s10));
                for (b, &wb) in wy.iter().enumerate() {
                    let sy = ly - b as i64;
                    if sy < 0 || sy >= lh as i64 {
                        continue;
                    }
                    for (a, &wa) in wx.iter().enumerate() {
                        let sx = lx - a as i64;
                        if sx < 0 || sx >= lw as i64 {
                            continue;
                        }
                        let cell = dlocal.get(sx as usize, sy as usize);
                        dlocal.set(sx as usize, sy as usize, cell + u * wa * wb);
                    }
                }
            }
        }
        (dlocal, gx, gy)
    }

    pub fn to_grid(&self, scene_w: usize, scene_h: usize) -> Grid {
        let mut g = Grid::new(scene_w, scene_h);
        for wyi in 0..self.height {
            for wxi in 0..self.width {
                g.set(self.x0 + wxi, self.y0 + wyi, self.values[wyi * self.width + wxi]);
            }
        }
        g
    }
}

#[inline]
fn sample(local: &Grid, x: i64, y: i64) -> f64 {
    if x < 0 || y < 0 || x >= local.width() as i64 || y >= local.height() as i64 {
        0.0
    } else {
        local.get(x as usize, y as usize)
    }
}

/// Scene-sized result of [`bilinear_place`].
#[derive(Clone, Debug)]
pub struct Placed {
    pub field: Grid,
    pub clipped_mass: f64,
}

/// Places `local` with its pixel `(0, 0)` at scene position `offset`.
pub fn bilinear_place(local: &Grid, offset: (f64, f64), scene_w: usize, scene_h: usize) -> Placed {
    let window = PlacedWindow::place(local, offset, scene_w, scene_h);
    Placed {
        field: window.to_grid(scene_w, scene_h),
        clipped_mass: window.clipped_mass,
    }
}

/// Analytic partials of [`bilinear_place`] with respect to the offset, as
/// scene-sized grids.
pub fn bilinear_place_partials(
    local: &Grid,
    offset: (f64, f64),
    scene_w: usize,
    scene_h: usize,
) -> (Grid, Grid) {
    let window = PlacedWindow::place(local, offset, scene_w, scene_h);
    let (dx, dy) = window.offset_partials(local);
    let scatter = |vals: Vec<f64>| {
        let mut g = Grid::new(scene_w, scene_h);
        for wyi in 0..window.height {
            for wxi in 0..window.width {
                g.set(window.x0 + wxi, window.y0 + wyi, vals[wyi * window.width + wxi]);
            }
        }
        g
    };
    (scatter(dx), scatter(dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_pixel_splits_impulse() {
        let mut local = Grid::new(3, 3);
        local.set(1, 1, 1.0);
        let placed = bilinear_place(&local, (2.5, 2.0), 8, 8);
        assert_eq!(placed.field.get(3, 3), 0.5);
        assert_eq!(placed.field.get(4, 3), 0.5);
        assert_eq!(placed.field.sum(), 1.0);
    }

    #[test]
    fn clipping_is_counted() {
        let local = Grid::filled(4, 4, 1.0);
        let placed = bilinear_place(&local, (-2.0, 0.0), 8, 8);
        assert_eq!(placed.field.sum(), 8.0);
        assert_eq!(placed.clipped_mass, 8.0);
    }

    #[test]
    fn fully_outside_placement_is_empty() {
        let local = Grid::filled(2, 2, 1.0);
        let placed = bilinear_place(&local, (20.0, 20.0), 8, 8);
        assert_eq!(placed.field.sum(), 0.0);
        assert_eq!(placed.clipped_mass, 4.0);
    }
}
