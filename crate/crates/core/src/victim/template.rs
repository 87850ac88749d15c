use super::{sigmoid, BoxRect, Detection, DetectionSet, Scorer, VictimModel};
use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, Grid};

/// Sliding-window linear template followed by a sigmoid:
/// `s_i = sigmoid(<template, window_i> + bias)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateDetector {
    template: Grid,
    bias: f64,
    stride: usize,
}

impl TemplateDetector {
    pub fn new(template: Grid, bias: f64, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Parameter("stride must be at least 1".into()));
        }
        if template.is_empty() {
            return Err(Error::Parameter("template is empty".into()));
        }
        if !bias.is_finite() {
            return Err(Error::Parameter(format!("bias must be finite, got {bias}")));
        }
        Ok(TemplateDetector {
            template,
            bias,
            stride,
        })
    }

    pub fn template(&self) -> &Grid {
        &self.template
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Fails with a dimension error when the template does not fit the frame.
    pub fn check_frame(&self, height: usize, width: usize) -> Result<()> {
        let (th, tw) = self.template.shape();
        if th > height || tw > width {
            return Err(Error::dims((th, tw), (height, width)));
        }
        Ok(())
    }

    fn windows(&self, height: usize, width: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (th, tw) = self.template.shape();
        let stride = self.stride;
        (0..=height - th)
            .step_by(stride)
            .flat_map(move |r| (0..=width - tw).step_by(stride).map(move |c| (r, c)))
    }

    fn logit_at(&self, img: &Grid, r0: usize, c0: usize) -> f64 {
        let (th, tw) = self.template.shape();
        let w = img.width();
        let mut acc = self.bias;
        for i in 0..th {
            let t_row = &self.template.data()[i * tw..(i + 1) * tw];
            let start = (r0 + i) * w + c0;
            let i_row = &img.data()[start..start + tw];
            acc += t_row.iter().zip(i_row).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    fn gradient_for(&self, shape: (usize, usize), top: &Detection) -> Grid {
        let s = top.score;
        let ds = s * (1.0 - s);
        let (th, tw) = self.template.shape();
        let mut grad = Grid::zeros(shape.0, shape.1);
        if ds == 0.0 {
            return grad;
        }
        for i in 0..th {
            for j in 0..tw {
                grad.set(
                    top.bbox.row + i,
                    top.bbox.col + j,
                    ds * self.template.get(i, j),
                );
            }
        }
        grad
    }
}

impl Scorer for TemplateDetector {
    fn score(&self, image: &GrayImage) -> Result<DetectionSet> {
        let (h, w) = image.shape();
        self.check_frame(h, w)?;
        let (th, tw) = self.template.shape();
        let dets = self
            .windows(h, w)
            .map(|(r, c)| Detection {
                bbox: BoxRect {
                    row: r,
                    col: c,
                    height: th,
                    width: tw,
                },
                score: sigmoid(self.logit_at(image.grid(), r, c)),
            })
            .collect();
        DetectionSet::new(dets)
    }
}

impl VictimModel for TemplateDetector {
    fn grad_top1(&self, image: &GrayImage) -> Result<Grid> {
        Ok(self.evaluate(image)?.1)
    }

    fn evaluate(&self, image: &GrayImage) -> Result<(DetectionSet, Grid)> {
        let dets = self.score(image)?;
        let grad = self.gradient_for(image.shape(), dets.top1());
        Ok((dets, grad))
    }
}

/// Procedural template: an elliptical body footprint with a Gaussian profile
/// peaked at the window center, modulated by a checkerboard of "hot spots".
/// Pixels outside the footprint carry a negative weight so that only windows
/// aligned with a whole body respond.
///
/// Inside the footprint the weight is `amplitude * (p * spot - spot_offset)`
/// where `p` is the profile and `spot` is 1 on hot spots and 0 elsewhere;
/// outside it is `-amplitude * surround`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSpec {
    pub height: usize,
    pub width: usize,
    pub sigma_rows: f64,
    pub sigma_cols: f64,
    pub amplitude: f64,
    pub spot_offset: f64,
    pub surround: f64,
    pub body_rows: f64,
    pub body_cols: f64,
    pub bias: f64,
    pub stride: usize,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        TemplateSpec {
            height: 32,
            width: 16,
            sigma_rows: 4.0,
            sigma_cols: 2.0,
            amplitude: 0.8,
            spot_offset: 0.02,
            surround: 0.25,
            body_rows: 14.0,
            body_cols: 7.0,
            bias: -1.4,
            stride: 2,
        }
    }
}

impl TemplateSpec {
    pub fn weights(&self) -> Grid {
        let rc = (self.height as f64 - 1.0) / 2.0;
        let cc = (self.width as f64 - 1.0) / 2.0;
        Grid::from_fn(self.height, self.width, |r, c| {
            let dr = (r as f64 - rc) / self.sigma_rows;
            let dc = (c as f64 - cc) / self.sigma_cols;
            let p = (-0.5 * (dr * dr + dc * dc)).exp();
            let spot = if (r + c) % 2 == 0 { 1.0 } else { 0.0 };
            let er = (r as f64 - rc) / self.body_rows;
            let ec = (c as f64 - cc) / self.body_cols;
            if er * er + ec * ec <= 1.0 {
                self.amplitude * (p * spot - self.spot_offset)
            } else {
                -self.amplitude * self.surround
            }
        })
    }

    pub fn build(&self) -> Result<TemplateDetector> {
        TemplateDetector::new(self.weights(), self.bias, self.stride)
    }
}

/// The calibrated detector paired with [`super::SceneSpec::fixture`].
pub fn fixture_detector() -> TemplateDetector {
    TemplateSpec::default()
        .build()
        .expect("default template spec is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(h: usize, w: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        GrayImage::new(Grid::from_fn(h, w, |_, _| rng.gen::<f64>())).unwrap()
    }

    #[test]
    fn zero_template_scores_half() {
        let det = TemplateDetector::new(Grid::zeros(3, 3), 0.0, 1).unwrap();
        let set = det.score(&scene(8, 8)).unwrap();
        assert_eq!(set.detections().len(), 36);
        assert!(set.detections().iter().all(|d| d.score == 0.5));
        assert_eq!(set.top1_index(), 0);
    }

    #[test]
    fn saturated_bias_kills_score_and_gradient() {
        let det = TemplateDetector::new(Grid::filled(3, 3, 1.0), -1e4, 1).unwrap();
        let (set, grad) = det.evaluate(&scene(8, 8)).unwrap();
        assert!(set.top1_score() < 1e-300);
        assert!(grad.l1_norm() < 1e-300);
    }

    #[test]
    fn oversized_template_is_dimension_error() {
        let det = TemplateDetector::new(Grid::zeros(9, 3), 0.0, 1).unwrap();
        assert!(matches!(
            det.score(&scene(8, 8)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = TemplateSpec {
            height: 8,
            width: 6,
            sigma_rows: 3.0,
            sigma_cols: 2.0,
            bias: -1.0,
            ..TemplateSpec::default()
        };
        let det = spec.build().unwrap();
        let img = scene(32, 32);
        let (set, grad) = det.evaluate(&img).unwrap();
        let top = set.top1_index();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for r in 0..32 {
            for c in 0..32 {
                let v = img.get(r, c);
                let (lo, hi) = ((v - h).max(0.0), (v + h).min(1.0));
                let sp = det
                    .score(&img.with_pixel(r, c, hi).unwrap())
                    .unwrap()
                    .detections()[top]
                    .score;
                let sm = det
                    .score(&img.with_pixel(r, c, lo).unwrap())
                    .unwrap()
                    .detections()[top]
                    .score;
                let fd = (sp - sm) / (hi - lo);
                let a = grad.get(r, c);
                let rel = (fd - a).abs() / a.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        assert!(worst <= 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn stride_controls_window_count() {
        let det = TemplateDetector::new(Grid::zeros(4, 4), 0.0, 3).unwrap();
        // rows 0,3,6 (max start 6), cols 0,3,6
        assert_eq!(det.score(&scene(10, 10)).unwrap().detections().len(), 9);
        assert!(TemplateDetector::new(Grid::zeros(4, 4), 0.0, 0).is_err());
    }
}
