use super::Grid;
use crate::error::{Error, Result};

/// 3x3 weights, indexed `[row][col]` with the center at `[1][1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel3x3(pub [[f64; 3]; 3]);

/// Edge count of each ring position among the 8 neighbours of a pixel:
/// corners touch two ring positions, edge-centers touch four.
pub const AGGREGATION_KERNEL: Kernel3x3 =
    Kernel3x3([[2.0, 4.0, 2.0], [4.0, 0.0, 4.0], [2.0, 4.0, 2.0]]);

impl Kernel3x3 {
    pub fn sum(&self) -> f64 {
        self.0.iter().flatten().sum()
    }

    /// Weighted sum of a 3x3 window against this kernel.
    pub fn apply(&self, window: &[[f64; 3]; 3]) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += self.0[i][j] * window[i][j];
            }
        }
        acc
    }
}

/// Same-shape 3x3 filtering with zero padding.
///
/// The kernel is applied un-flipped (cross-correlation); every kernel used
/// in this crate is point-symmetric, where the two coincide.
pub fn convolve3x3(img: &Grid, k: &Kernel3x3) -> Grid {
    let (h, w) = img.shape();
    Grid::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for (i, row) in k.0.iter().enumerate() {
            for (j, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += kv
                        * img.get_or_zero(r as isize + i as isize - 1, c as isize + j as isize - 1);
                }
            }
        }
        acc
    })
}

/// Same-shape filtering by an odd-sized square kernel with zero padding.
pub fn convolve(img: &Grid, kernel: &Grid) -> Result<Grid> {
    let (kh, kw) = kernel.shape();
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Parameter(format!(
            "kernel must have odd size, got {kh}x{kw}"
        )));
    }
    let (h, w) = img.shape();
    let (rh, rw) = ((kh / 2) as isize, (kw / 2) as isize);
    Ok(Grid::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for i in 0..kh {
            let rr = r as isize + i as isize - rh;
            if rr < 0 || rr >= h as isize {
                continue;
            }
            for j in 0..kw {
                let cc = c as isize + j as isize - rw;
                if cc < 0 || cc >= w as isize {
                    continue;
                }
                acc += kernel.get(i, j) * img.get(rr as usize, cc as usize);
            }
        }
        acc
    }))
}

/// Normalized isotropic Gaussian kernel of odd `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Grid> {
    if size % 2 == 0 {
        return Err(Error::Parameter(format!(
            "gaussian kernel size must be odd, got {size}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let half = (size / 2) as f64;
    let raw = Grid::from_fn(size, size, |r, c| {
        let dr = r as f64 - half;
        let dc = c as f64 - half;
        (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
    });
    let total = raw.sum();
    Ok(raw.scale(1.0 / total))
}

/// Min-max rescale to `[0, 1]`. A constant grid maps to all ones, the
/// neutral element of the Hadamard product it feeds.
pub fn minmax_normalize(g: &Grid) -> Grid {
    let (lo, hi) = (g.min(), g.max());
    let span = hi - lo;
    if !(span > 0.0) {
        return Grid::filled(g.height(), g.width(), 1.0);
    }
    g.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregation_kernel_on_ones_interior_is_24() {
        let out = convolve3x3(&Grid::filled(5, 5, 1.0), &AGGREGATION_KERNEL);
        assert_eq!(out.get(2, 2), 24.0);
        // corner sees 3 neighbours: two edge-centers (4 each) and one corner (2)
        assert_eq!(out.get(0, 0), 10.0);
    }

    #[test]
    fn zeros_stay_zero() {
        let out = convolve3x3(&Grid::zeros(4, 4), &AGGREGATION_KERNEL);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_weight_is_zero() {
        let mut g = Grid::zeros(4, 4);
        g.set(0, 0, 1.0);
        let out = convolve3x3(&g, &AGGREGATION_KERNEL);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(0, 1), 4.0);
        assert_eq!(out.get(1, 1), 2.0);
    }

    #[test]
    fn gaussian_kernel_cases() {
        let k1 = gaussian_kernel(1, 0.7).unwrap();
        assert_eq!(k1.data(), &[1.0]);

        let k3 = gaussian_kernel(3, 1.0).unwrap();
        assert!((k3.sum() - 1.0).abs() < 1e-12);
        let center = k3.get(1, 1);
        assert!(k3.data().iter().all(|&v| v <= center && v > 0.0));
        assert_eq!(k3.get(0, 0), k3.get(2, 2));
        assert_eq!(k3.get(0, 1), k3.get(1, 0));

        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_kernel(3, 0.0).is_err());
        assert!(gaussian_kernel(3, -1.0).is_err());
    }

    #[test]
    fn minmax_cases() {
        let g = Grid::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(minmax_normalize(&g).data(), &[0.0, 0.5, 1.0]);
        let g = Grid::new(1, 2, vec![0.0, 4.0]).unwrap();
        assert_eq!(minmax_normalize(&g).data(), &[0.0, 1.0]);
        let g = Grid::filled(2, 2, 0.3);
        assert!(minmax_normalize(&g).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn general_convolve_matches_3x3() {
        let img = Grid::from_fn(6, 7, |r, c| ((r * 7 + c) % 5) as f64 * 0.2);
        let k = Grid::from_fn(3, 3, |r, c| AGGREGATION_KERNEL.0[r][c]);
        let a = convolve(&img, &k).unwrap();
        let b = convolve3x3(&img, &AGGREGATION_KERNEL);
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn convolve3x3_is_linear(
            a in proptest::collection::vec(-1.0f64..1.0, 48),
            b in proptest::collection::vec(-1.0f64..1.0, 48),
            s in -3.0f64..3.0,
            t in -3.0f64..3.0,
        ) {
            let ga = Grid::new(6, 8, a).unwrap();
            let gb = Grid::new(6, 8, b).unwrap();
            let mut combo = ga.scale(s);
            combo.add_scaled(t, &gb).unwrap();
            let lhs = convolve3x3(&combo, &AGGREGATION_KERNEL);
            let mut rhs = convolve3x3(&ga, &AGGREGATION_KERNEL).scale(s);
            rhs.add_scaled(t, &convolve3x3(&gb, &AGGREGATION_KERNEL)).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }
    }
}
