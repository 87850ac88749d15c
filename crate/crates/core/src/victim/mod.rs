//! Victim detectors: the scoring contract the optimizer attacks, the
//! max-confidence attack loss, and the detectors and scenes used to
//! exercise it.

mod command;
mod fd;
mod scene;
mod template;

pub use command::{parse_score_lines, CommandScorer};
pub use fd::{finite_difference_adapter, FiniteDifferenceModel};
pub use scene::{generate_scene, Blob, SceneSpec, SuiteSpec};
pub use template::{fixture_detector, TemplateDetector, TemplateSpec};

use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, Grid};

/// Axis-aligned box in pixels: top-left corner plus extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl BoxRect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn fits_in(&self, height: usize, width: usize) -> bool {
        self.row + self.height <= height && self.col + self.width <= width
    }

    pub fn iou(&self, other: &BoxRect) -> f64 {
        let r0 = self.row.max(other.row);
        let c0 = self.col.max(other.col);
        let r1 = (self.row + self.height).min(other.row + other.height);
        let c1 = (self.col + self.width).min(other.col + other.width);
        let inter = r1.saturating_sub(r0) * c1.saturating_sub(c0);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoxRect,
    pub score: f64,
}

/// Every candidate window with its confidence, plus the index of the
/// top-1 candidate (first maximum in list order).
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionSet {
    detections: Vec<Detection>,
    top1: usize,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        if detections.is_empty() {
            return Err(Error::Contract("detector returned no candidates".into()));
        }
        let mut top1 = 0;
        for (i, d) in detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::Contract(format!(
                    "candidate {i} has score {} outside [0, 1]",
                    d.score
                )));
            }
            if d.score > detections[top1].score {
                top1 = i;
            }
        }
        Ok(DetectionSet { detections, top1 })
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn top1_index(&self) -> usize {
        self.top1
    }

    pub fn top1(&self) -> &Detection {
        &self.detections[self.top1]
    }

    pub fn top1_score(&self) -> f64 {
        self.detections[self.top1].score
    }
}

/// Anything that scores an image into candidate detections.
pub trait Scorer: Send + Sync {
    fn score(&self, image: &GrayImage) -> Result<DetectionSet>;
}

impl<F> Scorer for F
where
    F: Fn(&GrayImage) -> Result<DetectionSet> + Send + Sync,
{
    fn score(&self, image: &GrayImage) -> Result<DetectionSet> {
        self(image)
    }
}

/// A scorer that also yields the gradient of its top-1 score with respect
/// to every pixel.
///
/// Implementations must agree with central finite differences of the top-1
/// score to a relative error of 1e-3 away from argmax ties.
pub trait VictimModel: Scorer {
    fn grad_top1(&self, image: &GrayImage) -> Result<Grid>;

    fn evaluate(&self, image: &GrayImage) -> Result<(DetectionSet, Grid)> {
        Ok((self.score(image)?, self.grad_top1(image)?))
    }
}

/// Attack loss: the maximum candidate confidence, with its subgradient
/// flowing through the top-1 candidate only.
pub fn loss_attack(model: &dyn VictimModel, x_adv: &GrayImage) -> Result<(f64, Grid)> {
    let (dets, grad) = model.evaluate(x_adv)?;
    Ok((dets.top1_score(), grad))
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
