//! Average precision and the median-smoothing defense.

use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, Grid};

/// One scored image for AP: its top-1 score, whether a target is present,
/// and whether the top-1 box matched the target at the IoU threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApRecord {
    pub score: f64,
    pub positive: bool,
    pub matched: bool,
}

/// Area under the precision-recall curve with all-point interpolation.
///
/// Records are swept in decreasing score; equal scores form a single
/// threshold. A record is a true positive when its target is present and
/// matched. Returns `None` when no record has a target.
pub fn compute_ap(records: &[ApRecord]) -> Option<f64> {
    let n_pos = records.iter().filter(|r| r.positive).count();
    if n_pos == 0 {
        return None;
    }
    let mut sorted: Vec<&ApRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    // (true positives, precision) at each distinct threshold
    let mut points: Vec<(usize, f64)> = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].positive && sorted[i].matched {
                tp += 1;
            }
            seen += 1;
            i += 1;
        }
        points.push((tp, tp as f64 / seen as f64));
    }

    // precision envelope: running max from the right
    let mut envelope = vec![0.0f64; points.len()];
    let mut best = 0.0f64;
    for (k, &(_, p)) in points.iter().enumerate().rev() {
        best = best.max(p);
        envelope[k] = best;
    }
    // summing recall steps as true-positive counts keeps the separable case exact
    let mut area = 0.0;
    let mut prev_tp = 0;
    for (&(tp_k, _), &p) in points.iter().zip(&envelope) {
        area += (tp_k - prev_tp) as f64 * p;
        prev_tp = tp_k;
    }
    Some(area / n_pos as f64)
}

/// Median filter with a `k x k` window, edges replicated.
pub fn median_filter(img: &GrayImage, k: usize) -> Result<GrayImage> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::Parameter(format!(
            "median kernel must be odd and at least 3, got {k}"
        )));
    }
    let (h, w) = img.shape();
    let half = (k / 2) as isize;
    let mut window = Vec::with_capacity(k * k);
    let g = Grid::from_fn(h, w, |r, c| {
        window.clear();
        for dr in -half..=half {
            let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
            for dc in -half..=half {
                let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                window.push(img.get(rr, cc));
            }
        }
        let mid = window.len() / 2;
        *window.select_nth_unstable_by(mid, f64::total_cmp).1
    });
    GrayImage::new(g)
}
