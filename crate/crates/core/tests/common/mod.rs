#![allow(dead_code)]

use irpatch::aggreg::{aggregation_map, aggregation_oracle, decay_matrix, loss_agg, ring_edge_sum};
use irpatch::binreg::{loss_binary, BinRegConfig};
use irpatch::imgcore::{CoverSpec, GrayImage, Grid, Mask, AGGREGATION_KERNEL};
use irpatch::optim::{evaluate_losses, OptimConfig};
use irpatch::victim::{Scorer, TemplateDetector, TemplateSpec, VictimModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative error with both sides treated as zero below 1e-10.
pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Values drawn from `[0.05, 0.95]`, kept at least `gap` away from `avoid`.
pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, avoid: Option<(f64, f64)>) -> Grid {
    Grid::from_fn(h, w, |_, _| loop {
        let v: f64 = rng.gen_range(0.05..0.95);
        match avoid {
            Some((center, gap)) if (v - center).abs() < gap => continue,
            _ => return v,
        }
    })
}

pub fn random_binary(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> Mask {
    Mask::binary_from_fn(h, w, |_, _| rng.gen_bool(p))
}

/// Central difference of `f` in every coordinate of `at`.
pub fn central_diff(f: impl Fn(&Grid) -> f64, at: &Grid) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut up = at.clone();
            up.data_mut()[i] += FD_STEP;
            let mut down = at.clone();
            down.data_mut()[i] -= FD_STEP;
            (f(&up) - f(&down)) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn worst(analytic: &Grid, numeric: &[f64]) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// A detector small enough for 16x16 frames.
pub fn small_detector() -> TemplateDetector {
    TemplateSpec {
        height: 8,
        width: 6,
        sigma_rows: 2.0,
        sigma_cols: 1.5,
        body_rows: 3.5,
        body_cols: 2.5,
        bias: -1.0,
        ..TemplateSpec::default()
    }
    .build()
    .unwrap()
}

fn mask(g: &Grid) -> Mask {
    Mask::continuous(g.clone()).unwrap()
}

pub fn agg_gradient_error(seed: u64) -> f64 {
    let g = random_grid(&mut rng(seed), 16, 16, None);
    let (_, grad) = loss_agg(&mask(&g));
    worst(&grad, &central_diff(|p| loss_agg(&mask(p)).0, &g))
}

pub fn binary_gradient_error(seed: u64) -> f64 {
    let cfg = BinRegConfig::default();
    let g = random_grid(&mut rng(seed), 16, 16, Some((cfg.v_thre, 1e-3)));
    let (_, grad) = loss_binary(&mask(&g), &cfg);
    worst(&grad, &central_diff(|p| loss_binary(&mask(p), &cfg).0, &g))
}

/// `None` when a perturbation switches the top-1 window.
pub fn attack_gradient_error(seed: u64) -> Option<f64> {
    let det = small_detector();
    let g = random_grid(&mut rng(seed), 16, 16, None);
    let img = |p: &Grid| GrayImage::new(p.clone()).unwrap();
    let top = det.score(&img(&g)).unwrap().top1_index();
    let stable = (0..g.len()).all(|i| {
        [FD_STEP, -FD_STEP].iter().all(|d| {
            let mut p = g.clone();
            p.data_mut()[i] += d;
            det.score(&img(&p)).unwrap().top1_index() == top
        })
    });
    if !stable {
        return None;
    }
    let grad = det.grad_top1(&img(&g)).unwrap();
    Some(worst(
        &grad,
        &central_diff(|p| det.score(&img(p)).unwrap().top1_score(), &g),
    ))
}

/// Total loss with respect to the mask, chained through the composition.
pub fn total_gradient_error(seed: u64) -> Option<f64> {
    let det = small_detector();
    let mut r = rng(seed);
    let x = GrayImage::new(random_grid(&mut r, 16, 16, None)).unwrap();
    let cfg = OptimConfig::default();
    let m = random_grid(&mut r, 16, 16, Some((cfg.binary.v_thre, 1e-3)));
    let cover = CoverSpec::new(0.4).unwrap();
    let eval = |p: &Grid| evaluate_losses(&det, &x, cover, &mask(p), &cfg).unwrap();
    let base = eval(&m);
    let top = base.detections.top1_index();
    let stable = (0..m.len()).all(|i| {
        [FD_STEP, -FD_STEP].iter().all(|d| {
            let mut p = m.clone();
            p.data_mut()[i] += d;
            eval(&p).detections.top1_index() == top
        })
    });
    if !stable {
        return None;
    }
    Some(worst(&base.grad, &central_diff(|p| eval(p).total, &m)))
}

/// Largest |map - oracle| over every pixel of `n` random 12x12 masks.
pub fn aggregation_oracle_gap(n: u64) -> f64 {
    let mut gap = 0.0f64;
    for seed in 0..n {
        let mut r = rng(1000 + seed);
        let p = r.gen_range(0.2..0.8);
        let m = random_binary(&mut r, 12, 12, p);
        let map = aggregation_map(&m, None).unwrap();
        for row in 0..12 {
            for col in 0..12 {
                let exact = aggregation_oracle(&m, row, col).unwrap().to_f64();
                gap = gap.max((map.c.get(row, col) - exact).abs());
            }
        }
    }
    gap
}

/// Largest |K * A - 2 * ring edge sum| over `n` random 3x3 windows.
pub fn ring_identity_gap(n: u64) -> f64 {
    let mut r = rng(77);
    (0..n)
        .map(|_| {
            let mut w = [[0.0; 3]; 3];
            for v in w.iter_mut().flatten() {
                *v = r.gen::<f64>();
            }
            (AGGREGATION_KERNEL.apply(&decay_matrix(&w)) - 2.0 * ring_edge_sum(&w)).abs()
        })
        .fold(0.0, f64::max)
}
