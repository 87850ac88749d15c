//! Gradients for black-box scorers by central differences on a pixel
//! support.

use rayon::prelude::*;

use super::{DetectionSet, Scorer, VictimModel};
use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, Grid, Mask};

pub struct FiniteDifferenceModel<S> {
    scorer: S,
    step: f64,
    support: Mask,
}

/// Wraps `scorer` so its top-1 score can be differentiated on the pixels
/// where `support` is nonzero. Gradients are zero elsewhere.
pub fn finite_difference_adapter<S: Scorer>(
    scorer: S,
    step: f64,
    support: Mask,
) -> Result<FiniteDifferenceModel<S>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Parameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    Ok(FiniteDifferenceModel {
        scorer,
        step,
        support,
    })
}

impl<S: Scorer> FiniteDifferenceModel<S> {
    pub fn inner(&self) -> &S {
        &self.scorer
    }
}

impl<S: Scorer> Scorer for FiniteDifferenceModel<S> {
    fn score(&self, image: &GrayImage) -> Result<DetectionSet> {
        self.scorer.score(image)
    }
}

impl<S: Scorer> VictimModel for FiniteDifferenceModel<S> {
    fn grad_top1(&self, image: &GrayImage) -> Result<Grid> {
        image.grid().check_same_shape(self.support.grid())?;
        let (h, w) = image.shape();
        let active: Vec<usize> = self
            .support
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        // Near the ends of [0, 1] the stencil is truncated to stay a valid
        // image; the quotient uses the actual spacing.
        let partials: Vec<Result<(usize, f64)>> = active
            .par_iter()
            .map(|&i| {
                let (r, c) = (i / w, i % w);
                let v = image.get(r, c);
                let hi = (v + self.step).min(1.0);
                let lo = (v - self.step).max(0.0);
                let sp = self
                    .scorer
                    .score(&image.with_pixel(r, c, hi)?)?
                    .top1_score();
                let sm = self
                    .scorer
                    .score(&image.with_pixel(r, c, lo)?)?
                    .top1_score();
                Ok((i, (sp - sm) / (hi - lo)))
            })
            .collect();
        let mut grad = Grid::zeros(h, w);
        for p in partials {
            let (i, d) = p?;
            grad.data_mut()[i] = d;
        }
        Ok(grad)
    }
}
