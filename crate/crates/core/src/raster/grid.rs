use super::RasterError;

/// Lower clamp applied to every posterior probability.
pub const P_MIN: f64 = 1e-6;

/// Dense row-major scalar raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be positive");
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(RasterError::DimensionMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut grid = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                grid.values[y * width + x] = f(x, y);
            }
        }
        grid
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.values[y * self.width + x] = value;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pixelwise inner product.
    pub fn dot(&self, other: &Grid) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Pixels with value at or above `level`.
    pub fn threshold(&self, level: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v >= level).collect(),
        }
    }

    /// Pixels with value at or below `level` (interior of a level-set field).
    pub fn below(&self, level: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v <= level).collect(),
        }
    }
}

/// Row-major boolean raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if bits.len() != width * height {
            return Err(RasterError::DimensionMismatch {
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                mask.bits[y * width + x] = f(x, y);
            }
        }
        mask
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Bounds-checked read; anything outside the raster is `false`.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// Coordinates of true pixels in scanline order.
    pub fn iter_true(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Inclusive bounding box `(x_min, y_min, x_max, y_max)` of the true set.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.iter_true();
        let (x, y) = it.next()?;
        let init = (x, y, x, y);
        Some(it.fold(init, |(x0, y0, x1, y1), (x, y)| {
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        }))
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a || b)
            .count()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// 1.0 for true pixels, 0.0 elsewhere.
    pub fn to_grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Copy translated by an integer shift into a `width`×`height` raster.
    /// Pixels leaving the target are dropped.
    pub fn translated(&self, dx: i64, dy: i64, width: usize, height: usize) -> BinaryMask {
        let mut out = BinaryMask::new(width, height);
        for (x, y) in self.iter_true() {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                out.set(nx as usize, ny as usize, true);
            }
        }
        out
    }
}

/// Posterior probability raster with values clamped to `[P_MIN, 1 - P_MIN]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    grid: Grid,
}

impl ProbabilityMap {
    /// Clamps every value into the admissible range.
    pub fn from_grid(mut grid: Grid) -> Self {
        for v in grid.values_mut() {
            *v = v.clamp(P_MIN, 1.0 - P_MIN);
        }
        Self { grid }
    }

    pub fn uniform(width: usize, height: usize, p: f64) -> Self {
        Self::from_grid(Grid::filled(width, height, p))
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }
}
