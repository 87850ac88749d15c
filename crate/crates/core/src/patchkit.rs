//! Turning a converged continuous mask into something that can be cut out
//! of material: a hard threshold, 8-connected components and a stencil
//! (PBM bitmap plus a run-length manifest).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::aggreg::aggregation_map;
use crate::error::{Error, Result};
use crate::imgcore::{pnm, Mask};
use crate::victim::BoxRect;

/// `1` where `m >= threshold`, else `0`.
pub fn binarize(m: &Mask, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "binarization threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (h, w) = m.shape();
    Ok(Mask::binary_from_fn(h, w, |r, c| m.get(r, c) >= threshold))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// Row-major sorted pixel coordinates.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoxRect,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Per-row inclusive column spans, rows ascending.
    pub fn row_spans(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        let mut rows: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
        for &(r, c) in &self.pixels {
            match rows.last_mut() {
                Some((row, spans)) if *row == r => match spans.last_mut() {
                    Some(span) if span.1 + 1 == c => span.1 = c,
                    _ => spans.push((c, c)),
                },
                _ => rows.push((r, vec![(c, c)])),
            }
        }
        rows
    }
}

/// 8-connected components of a binary mask, ordered by their first pixel
/// in row-major order.
pub fn connected_components(m: &Mask) -> Result<Vec<Component>> {
    if !m.is_binary() {
        return Err(Error::Precondition(
            "connected components need a binary mask".into(),
        ));
    }
    let (h, w) = m.shape();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if seen[start] || m.data()[start] != 1.0 {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            pixels.push((r, c));
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if !seen[j] && m.data()[j] == 1.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let r0 = pixels.iter().map(|p| p.0).min().unwrap_or(0);
        let r1 = pixels.iter().map(|p| p.0).max().unwrap_or(0);
        let c0 = pixels.iter().map(|p| p.1).min().unwrap_or(0);
        let c1 = pixels.iter().map(|p| p.1).max().unwrap_or(0);
        out.push(Component {
            pixels,
            bbox: BoxRect {
                row: r0,
                col: c0,
                height: r1 - r0 + 1,
                width: c1 - c0 + 1,
            },
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchStencil {
    pub grid: Mask,
    pub components: Vec<Component>,
    pub total_area: usize,
    /// Support-averaged aggregation of the binary mask.
    pub aggregation_final: f64,
}

impl PatchStencil {
    /// `support` is the region the aggregation is averaged over (the object
    /// mask); `None` averages over the whole frame.
    pub fn new(binary: Mask, support: Option<&Mask>) -> Result<Self> {
        let components = connected_components(&binary)?;
        let total_area = components.iter().map(Component::area).sum();
        let aggregation_final = aggregation_map(&binary, support)?.mean_support;
        Ok(PatchStencil {
            grid: binary,
            components,
            total_area,
            aggregation_final,
        })
    }

    pub fn from_continuous(m: &Mask, threshold: f64, support: Option<&Mask>) -> Result<Self> {
        Self::new(binarize(m, threshold)?, support)
    }

    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for (id, comp) in self.components.iter().enumerate() {
            let b = comp.bbox;
            let _ = writeln!(
                out,
                "component {id} bbox {} {} {} {} area {}",
                b.row,
                b.col,
                b.height,
                b.width,
                comp.area()
            );
            for (row, spans) in comp.row_spans() {
                let spans: Vec<String> = spans.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                let _ = writeln!(out, "row {row}: {}", spans.join(","));
            }
        }
        out
    }
}

/// Manifest path paired with a stencil bitmap path.
pub fn manifest_path(bitmap: &Path) -> PathBuf {
    bitmap.with_extension("manifest.txt")
}

/// Writes the P4 bitmap at `path` and the component manifest next to it.
pub fn export_stencil(stencil: &PatchStencil, path: &Path) -> Result<()> {
    pnm::write_pbm(path, &stencil.grid)?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, stencil.manifest()).map_err(|e| Error::io(mpath, e))
}

/// Reads a stencil back, re-rasterizing the manifest spans and checking
/// they reproduce the bitmap exactly.
pub fn import_stencil(path: &Path, support: Option<&Mask>) -> Result<PatchStencil> {
    let bitmap = pnm::read_pbm(path)?;
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let (h, w) = bitmap.shape();
    let raster = rasterize_manifest(&text, h, w).map_err(|message| Error::Format {
        path: mpath.clone(),
        message,
    })?;
    if raster != bitmap {
        return Err(Error::Format {
            path: mpath,
            message: "manifest spans do not reproduce the bitmap".into(),
        });
    }
    PatchStencil::new(bitmap, support)
}

pub fn rasterize_manifest(
    text: &str,
    height: usize,
    width: usize,
) -> std::result::Result<Mask, String> {
    let mut on = vec![false; height * width];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("component ") {
            continue;
        }
        let rest = line
            .strip_prefix("row ")
            .ok_or_else(|| format!("line {}: unexpected `{line}`", n + 1))?;
        let (row, spans) = rest
            .split_once(':')
            .ok_or_else(|| format!("line {}: missing `:`", n + 1))?;
        let row: usize = row
            .trim()
            .parse()
            .map_err(|e| format!("line {}: {e}", n + 1))?;
        for span in spans.trim().split(',') {
            let (a, b) = span
                .split_once('-')
                .ok_or_else(|| format!("line {}: bad span `{span}`", n + 1))?;
            let a: usize = a
                .trim()
                .parse()
                .map_err(|e| format!("line {}: {e}", n + 1))?;
            let b: usize = b
                .trim()
                .parse()
                .map_err(|e| format!("line {}: {e}", n + 1))?;
            if row >= height || b >= width || a > b {
                return Err(format!("line {}: span out of range", n + 1));
            }
            for c in a..=b {
                on[row * width + c] = true;
            }
        }
    }
    Ok(Mask::binary_from_fn(height, width, |r, c| {
        on[r * width + c]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Grid;
    use proptest::prelude::*;

    #[test]
    fn binarize_rules() {
        let m = Mask::binary_from_fn(3, 3, |r, c| r == c);
        assert_eq!(binarize(&m.as_continuous(), 0.5).unwrap(), m);
        let m = Mask::continuous(Grid::filled(2, 2, 0.49)).unwrap();
        assert_eq!(binarize(&m, 0.5).unwrap().count_ones(), 0);
        assert!(binarize(&m, 1.0).is_err());
    }

    #[test]
    fn component_cases() {
        let rect = Mask::binary_from_fn(6, 6, |r, c| (1..4).contains(&r) && (2..5).contains(&c));
        let comps = connected_components(&rect).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(
            comps[0].bbox,
            BoxRect {
                row: 1,
                col: 2,
                height: 3,
                width: 3
            }
        );

        let diag = Mask::binary_from_fn(3, 3, |r, c| (r, c) == (0, 0) || (r, c) == (1, 1));
        assert_eq!(connected_components(&diag).unwrap().len(), 1);

        let checker = Mask::binary_from_fn(4, 4, |r, c| (r + c) % 2 == 0);
        assert_eq!(connected_components(&checker).unwrap().len(), 1);

        let two = Mask::binary_from_fn(5, 5, |r, c| (r, c) == (4, 0) || (r, c) == (0, 4));
        let comps = connected_components(&two).unwrap();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pixels, vec![(0, 4)]);

        let soft = Mask::continuous(Grid::filled(2, 2, 0.5)).unwrap();
        assert!(connected_components(&soft).is_err());
    }

    #[test]
    fn manifest_format() {
        let m = Mask::binary_from_fn(4, 6, |r, c| {
            (r == 1 && c != 2 && c < 5) || (r == 2 && c == 2)
        });
        let st = PatchStencil::new(m, None).unwrap();
        assert_eq!(st.components.len(), 1);
        assert_eq!(
            st.manifest(),
            "component 0 bbox 1 0 2 5 area 5\nrow 1: 0-1,3-4\nrow 2: 2-2\n"
        );
        assert_eq!(st.total_area, 5);
    }

    #[test]
    fn empty_mask_has_empty_manifest() {
        let st = PatchStencil::new(Mask::zeros(3, 3), None).unwrap();
        assert!(st.manifest().is_empty());
        assert_eq!(st.total_area, 0);
    }

    proptest! {
        #[test]
        fn components_partition_the_ones(bits in proptest::collection::vec(any::<bool>(), 7 * 9)) {
            let m = Mask::binary_from_fn(7, 9, |r, c| bits[r * 9 + c]);
            let st = PatchStencil::new(m.clone(), None).unwrap();
            prop_assert_eq!(st.total_area, m.count_ones());
            let mut all: Vec<_> = st.components.iter().flat_map(|c| c.pixels.clone()).collect();
            let n = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(rasterize_manifest(&st.manifest(), 7, 9).unwrap(), m);
        }

        #[test]
        fn binarize_is_monotone(vals in proptest::collection::vec(0.0f64..=1.0, 30), t1 in 0.01f64..0.99, dt in 0.0f64..0.5) {
            let m = Mask::continuous(Grid::new(5, 6, vals).unwrap()).unwrap();
            let t2 = (t1 + dt).min(0.99);
            let lo = binarize(&m, t1).unwrap();
            let hi = binarize(&m, t2).unwrap();
            for (a, b) in lo.data().iter().zip(hi.data()) {
                prop_assert!(b <= a);
            }
        }
    }
}
