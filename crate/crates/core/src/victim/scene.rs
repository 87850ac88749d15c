//! Synthetic thermal scenes: a warm elliptical target on a cool, slightly
//! noisy background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BoxRect;
use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, Grid, Mask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub center_row: f64,
    pub center_col: f64,
    pub semi_axis_rows: f64,
    pub semi_axis_cols: f64,
    pub intensity: f64,
}

impl Blob {
    #[inline]
    pub fn contains(&self, r: usize, c: usize) -> bool {
        let dr = (r as f64 - self.center_row) / self.semi_axis_rows;
        let dc = (c as f64 - self.center_col) / self.semi_axis_cols;
        dr * dr + dc * dc <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub background: f64,
    pub blob: Option<Blob>,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Calibrated 64x64 scene: a centered warm target clearly detected by
    /// [`super::fixture_detector`].
    pub fn fixture(seed: u64) -> Self {
        SceneSpec {
            height: 64,
            width: 64,
            background: 0.2,
            blob: Some(Blob {
                center_row: 31.5,
                center_col: 31.5,
                semi_axis_rows: 14.0,
                semi_axis_cols: 7.0,
                intensity: 0.8,
            }),
            noise_amplitude: 0.02,
            seed,
        }
    }

    /// Member `seed` of the default evaluation suite built on the fixture.
    pub fn suite(seed: u64) -> Self {
        SuiteSpec::default().member(&SceneSpec::fixture(seed), seed)
    }

    /// Same scene with the target removed.
    pub fn without_blob(&self) -> Self {
        SceneSpec {
            blob: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Parameter("scene must be non-empty".into()));
        }
        let in_unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} {v} outside [0, 1]")))
            }
        };
        in_unit("background", self.background)?;
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise amplitude must be non-negative, got {}",
                self.noise_amplitude
            )));
        }
        if let Some(b) = &self.blob {
            in_unit("blob intensity", b.intensity)?;
            if b.intensity <= self.background {
                return Err(Error::Parameter(format!(
                    "blob intensity {} must exceed background {}",
                    b.intensity, self.background
                )));
            }
            if !(b.semi_axis_rows > 0.0 && b.semi_axis_cols > 0.0) {
                return Err(Error::Parameter("blob axes must be positive".into()));
            }
            let inside = b.center_row - b.semi_axis_rows >= 0.0
                && b.center_col - b.semi_axis_cols >= 0.0
                && b.center_row + b.semi_axis_rows <= (self.height - 1) as f64
                && b.center_col + b.semi_axis_cols <= (self.width - 1) as f64;
            if !inside {
                return Err(Error::Parameter(format!(
                    "blob centered at ({}, {}) extends outside the {}x{} frame",
                    b.center_row, b.center_col, self.height, self.width
                )));
            }
        }
        Ok(())
    }

    /// Tight bounding box of the blob pixels.
    pub fn blob_box(&self) -> Option<BoxRect> {
        let b = self.blob?;
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for r in 0..self.height {
            for c in 0..self.width {
                if b.contains(r, c) {
                    r0 = r0.min(r);
                    c0 = c0.min(c);
                    r1 = r1.max(r);
                    c1 = c1.max(c);
                }
            }
        }
        (r0 != usize::MAX).then(|| BoxRect {
            row: r0,
            col: c0,
            height: r1 - r0 + 1,
            width: c1 - c0 + 1,
        })
    }
}

/// Per-scene variation of an evaluation suite: the target is shifted by an
/// even offset of up to `2 * max_shift` pixels per axis (keeping it aligned
/// with stride-2 detectors) and its intensity is drawn uniformly from
/// `[intensity_min, intensity_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteSpec {
    pub max_shift: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            max_shift: 1,
            intensity_min: 0.65,
            intensity_max: 0.85,
        }
    }
}

impl SuiteSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.intensity_min)
            && (0.0..=1.0).contains(&self.intensity_max)
            && self.intensity_min <= self.intensity_max;
        if !ok {
            return Err(Error::Parameter(format!(
                "suite intensity range [{}, {}] must be an ordered subrange of [0, 1]",
                self.intensity_min, self.intensity_max
            )));
        }
        Ok(())
    }

    /// `base` with its seed replaced by `seed` and the target perturbed.
    /// Scenes without a target only get the new seed.
    pub fn member(&self, base: &SceneSpec, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c7);
        let k = self.max_shift as i64;
        let jr = 2 * rng.gen_range(-k..=k);
        let jc = 2 * rng.gen_range(-k..=k);
        let intensity = rng.gen_range(self.intensity_min..=self.intensity_max);
        let mut spec = SceneSpec {
            seed,
            ..base.clone()
        };
        if let Some(b) = spec.blob.as_mut() {
            b.center_row += jr as f64;
            b.center_col += jc as f64;
            b.intensity = intensity;
        }
        spec
    }
}

/// Renders the scene and its object mask (1 exactly on blob pixels).
/// Uniform noise in `[-a, a]` is added everywhere and clamped to `[0, 1]`.
pub fn generate_scene(spec: &SceneSpec) -> Result<(GrayImage, Mask)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = spec.noise_amplitude;
    let object = Mask::binary_from_fn(spec.height, spec.width, |r, c| {
        spec.blob.is_some_and(|b| b.contains(r, c))
    });
    let img = Grid::from_fn(spec.height, spec.width, |r, c| {
        let base = if object.get(r, c) == 1.0 {
            spec.blob.map_or(spec.background, |b| b.intensity)
        } else {
            spec.background
        };
        // draw unconditionally so the noise field does not depend on the blob
        let n: f64 = rng.gen_range(-1.0..=1.0);
        if a > 0.0 {
            base + a * n
        } else {
            base
        }
    });
    Ok((GrayImage::from_grid_clamped(img), object))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_background_is_exact() {
        let spec = SceneSpec {
            noise_amplitude: 0.0,
            ..SceneSpec::fixture(3)
        };
        let (img, obj) = generate_scene(&spec).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                if obj.get(r, c) == 0.0 {
                    assert_eq!(img.get(r, c), 0.2);
                } else {
                    assert_eq!(img.get(r, c), 0.8);
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_scene(&SceneSpec::fixture(11)).unwrap();
        let b = generate_scene(&SceneSpec::fixture(11)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec::fixture(12)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn object_mask_counts_blob_pixels() {
        let spec = SceneSpec::fixture(0);
        let (_, obj) = generate_scene(&spec).unwrap();
        let b = spec.blob.unwrap();
        let count = (0..64)
            .flat_map(|r| (0..64).map(move |c| (r, c)))
            .filter(|&(r, c)| b.contains(r, c))
            .count();
        assert_eq!(obj.l1_norm(), count as f64);
        assert!(count > 250 && count < 350);
    }

    #[test]
    fn suite_shifts_by_even_offsets() {
        for seed in 0..40 {
            let b = SceneSpec::suite(seed).blob.unwrap();
            for d in [b.center_row - 31.5, b.center_col - 31.5] {
                assert!([-2.0, 0.0, 2.0].contains(&d), "offset {d}");
            }
            assert!((0.65..=0.85).contains(&b.intensity));
        }
    }

    #[test]
    fn blob_outside_frame_rejected() {
        let mut spec = SceneSpec::fixture(0);
        spec.blob.as_mut().unwrap().center_row = 5.0;
        assert!(matches!(generate_scene(&spec), Err(Error::Parameter(_))));
        let mut spec = SceneSpec::fixture(0);
        spec.blob.as_mut().unwrap().intensity = 0.1;
        assert!(generate_scene(&spec).is_err());
    }

    #[test]
    fn blob_box_is_tight() {
        let spec = SceneSpec::fixture(0);
        let bx = spec.blob_box().unwrap();
        let (_, obj) = generate_scene(&spec).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                if obj.get(r, c) == 1.0 {
                    assert!(r >= bx.row && r < bx.row + bx.height);
                    assert!(c >= bx.col && c < bx.col + bx.width);
                }
            }
        }
        assert!(spec.without_blob().blob_box().is_none());
    }
}
