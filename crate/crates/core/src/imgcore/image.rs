use super::Grid;
use crate::error::{Error, Result};

/// Single-channel intensity image with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage(Grid);

impl GrayImage {
    pub fn new(grid: Grid) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!(
                "image intensity {v} outside [0, 1]"
            )));
        }
        Ok(GrayImage(grid))
    }

    /// Builds an image, clamping every value into `[0, 1]`. NaN maps to 0.
    pub fn from_grid_clamped(grid: Grid) -> Self {
        GrayImage(grid.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Grid::filled(height, width, value))
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0.get(r, c)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    /// Copy with one pixel replaced; the value must stay in `[0, 1]`.
    pub fn with_pixel(&self, r: usize, c: usize, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!(
                "image intensity {v} outside [0, 1]"
            )));
        }
        let mut g = self.0.clone();
        g.set(r, c, v);
        Ok(GrayImage(g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Continuous,
    Binary,
}

/// Patch mask. Continuous masks live in `[0, 1]`, binary masks in `{0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    grid: Grid,
    kind: MaskKind,
}

impl Mask {
    pub fn continuous(grid: Grid) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Mask {
            grid,
            kind: MaskKind::Continuous,
        })
    }

    pub fn binary(grid: Grid) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parameter(format!(
                "binary mask value {v} not in {{0, 1}}"
            )));
        }
        Ok(Mask {
            grid,
            kind: MaskKind::Binary,
        })
    }

    /// Continuous mask from an arbitrary grid, clamped into `[0, 1]`.
    pub fn continuous_clamped(grid: Grid) -> Self {
        Mask {
            grid: grid.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }),
            kind: MaskKind::Continuous,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Mask {
            grid: Grid::zeros(height, width),
            kind: MaskKind::Binary,
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Mask {
            grid: Grid::filled(height, width, 1.0),
            kind: MaskKind::Binary,
        }
    }

    pub fn binary_from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        Mask {
            grid: Grid::from_fn(height, width, |r, c| if f(r, c) { 1.0 } else { 0.0 }),
            kind: MaskKind::Binary,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    #[inline]
    pub fn is_binary(&self) -> bool {
        self.kind == MaskKind::Binary
    }

    /// Re-tags a continuous mask as binary if every value is 0 or 1.
    pub fn to_binary(&self) -> Result<Mask> {
        Mask::binary(self.grid.clone())
    }

    /// View as a continuous mask (always valid).
    pub fn as_continuous(&self) -> Mask {
        Mask {
            grid: self.grid.clone(),
            kind: MaskKind::Continuous,
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.grid.get(r, c)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.sum()
    }

    /// Number of pixels equal to 1.
    pub fn count_ones(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// Constant-valued cover image, the appearance of the patch material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverSpec {
    pub value: f64,
}

impl CoverSpec {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Parameter(format!(
                "cover value {value} outside [0, 1]"
            )));
        }
        Ok(CoverSpec { value })
    }

    pub fn image(&self, height: usize, width: usize) -> GrayImage {
        GrayImage(Grid::filled(height, width, self.value))
    }
}

/// `x * (1 - m) + cover * m`, per pixel.
pub fn compose_adversarial(x: &GrayImage, cover: CoverSpec, m: &Mask) -> Result<GrayImage> {
    let blended = x
        .grid()
        .zip_map(m.grid(), |xv, mv| xv * (1.0 - mv) + cover.value * mv)?;
    // convex combination of values in [0, 1]; clamp only absorbs rounding
    Ok(GrayImage::from_grid_clamped(blended))
}
