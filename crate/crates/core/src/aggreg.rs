//! Aggregation regularizer: a soft local clustering coefficient per pixel.
//!
//! Each pixel's 8 neighbours form a ring graph whose edges join ring
//! positions that are 8-adjacent to each other (12 edges in total). For a
//! binary mask the clustering coefficient of a pixel is
//! `2 * |edges among value-1 ring pixels| / (8 * 7)`. The soft version
//! replaces each ring vertex by its decay factor
//! `alpha_j = V_j * mean(V_k for k adjacent to j)` and weights it by the
//! vertex degree, which collapses to `sum over ring edges of V_p * V_q / 28`.
//! The denominator stays 56 at the image border; out-of-frame neighbours
//! count as 0.

use crate::error::{Error, Result};
use crate::imgcore::{Grid, Mask, AGGREGATION_KERNEL};

/// `k_i (k_i - 1)` for the full 8-neighbourhood.
pub const PAIR_DENOMINATOR: f64 = 56.0;

/// Largest attainable per-pixel coefficient (all-ones neighbourhood).
pub const MAX_COEFFICIENT: f64 = 3.0 / 7.0;

/// Ring offsets `(dr, dc)` around a pixel, row-major, center excluded.
pub const RING: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Pairs of 8-adjacent ring positions, as offsets.
pub const RING_EDGES: [((isize, isize), (isize, isize)); 12] = [
    ((-1, -1), (-1, 0)),
    ((-1, 0), (-1, 1)),
    ((1, -1), (1, 0)),
    ((1, 0), (1, 1)),
    ((-1, -1), (0, -1)),
    ((0, -1), (1, -1)),
    ((-1, 1), (0, 1)),
    ((0, 1), (1, 1)),
    ((-1, 0), (0, -1)),
    ((-1, 0), (0, 1)),
    ((1, 0), (0, -1)),
    ((1, 0), (0, 1)),
];

#[inline]
fn ring_adjacent(a: (isize, isize), b: (isize, isize)) -> bool {
    a != b && (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1
}

/// Decay factors of a 3x3 window. The center entry is ignored and left 0.
pub fn decay_matrix(window: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let value = |p: (isize, isize)| window[(p.0 + 1) as usize][(p.1 + 1) as usize];
    let mut out = [[0.0; 3]; 3];
    for &j in &RING {
        let neighbours: Vec<(isize, isize)> = RING
            .iter()
            .copied()
            .filter(|&k| ring_adjacent(j, k))
            .collect();
        let mean = neighbours.iter().map(|&k| value(k)).sum::<f64>() / neighbours.len() as f64;
        out[(j.0 + 1) as usize][(j.1 + 1) as usize] = value(j) * mean;
    }
    out
}

/// `sum over ring edges of V_p * V_q`.
pub fn ring_edge_sum(window: &[[f64; 3]; 3]) -> f64 {
    RING_EDGES
        .iter()
        .map(|&(p, q)| {
            window[(p.0 + 1) as usize][(p.1 + 1) as usize]
                * window[(q.0 + 1) as usize][(q.1 + 1) as usize]
        })
        .sum()
}

fn window_at(g: &Grid, r: usize, c: usize) -> [[f64; 3]; 3] {
    let mut w = [[0.0; 3]; 3];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = g.get_or_zero(r as isize + i as isize - 1, c as isize + j as isize - 1);
        }
    }
    w
}

/// Per-pixel coefficients via decay factors and the edge-count kernel,
/// one window at a time. Slow reference for [`aggregation_map`].
pub fn coefficient_map_literal(m: &Mask) -> Grid {
    let g = m.grid();
    Grid::from_fn(g.height(), g.width(), |r, c| {
        AGGREGATION_KERNEL.apply(&decay_matrix(&window_at(g, r, c))) / PAIR_DENOMINATOR
    })
}

fn coefficient_map(g: &Grid) -> Grid {
    Grid::from_fn(g.height(), g.width(), |r, c| {
        let (r, c) = (r as isize, c as isize);
        let mut acc = 0.0;
        for &((pr, pc), (qr, qc)) in &RING_EDGES {
            acc += g.get_or_zero(r + pr, c + pc) * g.get_or_zero(r + qr, c + qc);
        }
        2.0 * acc / PAIR_DENOMINATOR
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationMap {
    /// Per-pixel coefficients, each in `[0, 3/7]`.
    pub c: Grid,
    /// `(1 / hw) * sum C * M` over the whole frame.
    pub mean_literal: f64,
    /// Mean of `C * M` over the support pixels.
    pub mean_support: f64,
}

/// Aggregation map of `m`. `support` selects the pixels averaged into
/// `mean_support` (typically the object mask); `None` means the full frame.
pub fn aggregation_map(m: &Mask, support: Option<&Mask>) -> Result<AggregationMap> {
    let c = coefficient_map(m.grid());
    let weighted = c.hadamard(m.grid())?;
    let mean_literal = weighted.sum() / weighted.len().max(1) as f64;
    let mean_support = match support {
        None => mean_literal,
        Some(s) => {
            s.grid().check_same_shape(m.grid())?;
            let (mut acc, mut n) = (0.0, 0usize);
            for (&w, &sv) in weighted.data().iter().zip(s.data()) {
                if sv == 1.0 {
                    acc += w;
                    n += 1;
                }
            }
            if n == 0 {
                0.0
            } else {
                acc / n as f64
            }
        }
    };
    Ok(AggregationMap {
        c,
        mean_literal,
        mean_support,
    })
}

/// Exact clustering coefficient as a fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClusteringRatio {
    pub numerator: u32,
    pub denominator: u32,
}

impl ClusteringRatio {
    pub fn to_f64(self) -> f64 {
        f64::from(self.numerator) / f64::from(self.denominator)
    }
}

/// Graph-theoretic local clustering coefficient of one pixel of a binary
/// mask, by enumerating every pair of value-1 ring pixels and testing
/// 8-adjacency. Denominator fixed at 56.
pub fn aggregation_oracle(m: &Mask, r: usize, c: usize) -> Result<ClusteringRatio> {
    if !m.is_binary() {
        return Err(Error::Precondition(
            "aggregation oracle needs a binary mask".into(),
        ));
    }
    let (h, w) = m.shape();
    if r >= h || c >= w {
        return Err(Error::Parameter(format!(
            "pixel ({r}, {c}) outside {h}x{w} mask"
        )));
    }
    let mut lit = Vec::with_capacity(8);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if (dr, dc) == (0, 0) {
                continue;
            }
            if m.grid().get_or_zero(r as isize + dr, c as isize + dc) == 1.0 {
                lit.push((dr, dc));
            }
        }
    }
    let mut edges = 0;
    for i in 0..lit.len() {
        for j in i + 1..lit.len() {
            if ring_adjacent(lit[i], lit[j]) {
                edges += 1;
            }
        }
    }
    Ok(ClusteringRatio {
        numerator: 2 * edges,
        denominator: PAIR_DENOMINATOR as u32,
    })
}

/// `L_agg = -(1/hw) * sum C * M` and its full derivative with respect to
/// every mask entry, including the dependence of neighbouring coefficients
/// on that entry.
pub fn loss_agg(m: &Mask) -> (f64, Grid) {
    let g = m.grid();
    let (h, w) = g.shape();
    let n = (h * w).max(1) as f64;
    let c = coefficient_map(g);
    let value = -c
        .data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n;

    // d/dM_x sum_i C_i M_i = C_x + sum_i M_i dC_i/dM_x
    let mut grad = c.clone();
    let k = 2.0 / PAIR_DENOMINATOR;
    for r in 0..h as isize {
        for col in 0..w as isize {
            let mi = g.get(r as usize, col as usize);
            if mi == 0.0 {
                continue;
            }
            for &((pr, pc), (qr, qc)) in &RING_EDGES {
                let (ar, ac) = (r + pr, col + pc);
                let (br, bc) = (r + qr, col + qc);
                let va = g.get_or_zero(ar, ac);
                let vb = g.get_or_zero(br, bc);
                if in_bounds(ar, ac, h, w) {
                    let i = ar as usize * w + ac as usize;
                    grad.data_mut()[i] += k * mi * vb;
                }
                if in_bounds(br, bc, h, w) {
                    let i = br as usize * w + bc as usize;
                    grad.data_mut()[i] += k * mi * va;
                }
            }
        }
    }
    (value, grad.scale(-1.0 / n))
}

#[inline]
fn in_bounds(r: isize, c: isize, h: usize, w: usize) -> bool {
    r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w
}
