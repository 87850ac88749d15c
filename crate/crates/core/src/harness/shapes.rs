//! Patch constructions for the placement ablation: translated copies of an
//! optimized stencil and canonical shapes of matched area.

use crate::error::{Error, Result};
use crate::imgcore::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanonicalShape {
    Square,
    HorizontalRect,
    VerticalRect,
    Triangle,
    Rhombus,
}

impl CanonicalShape {
    pub const ALL: [CanonicalShape; 5] = [
        CanonicalShape::Square,
        CanonicalShape::HorizontalRect,
        CanonicalShape::VerticalRect,
        CanonicalShape::Triangle,
        CanonicalShape::Rhombus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CanonicalShape::Square => "square",
            CanonicalShape::HorizontalRect => "h_rect",
            CanonicalShape::VerticalRect => "v_rect",
            CanonicalShape::Triangle => "triangle",
            CanonicalShape::Rhombus => "rhombus",
        }
    }

    /// Shape gauge at offset `(dr, dc)` from the center: the sublevel sets
    /// are nested copies of the shape. Rectangles have a 2:1 aspect; the
    /// triangle points up with its centroid at the origin.
    pub fn gauge(&self, dr: f64, dc: f64) -> f64 {
        let (ar, ac) = (dr.abs(), dc.abs());
        match self {
            CanonicalShape::Square => ar.max(ac),
            CanonicalShape::HorizontalRect => (2.0 * ar).max(ac),
            CanonicalShape::VerticalRect => ar.max(2.0 * ac),
            CanonicalShape::Triangle => (2.0 * dr).max(ac - dr),
            CanonicalShape::Rhombus => ar + ac,
        }
    }
}

/// Mean position of the nonzero pixels.
pub fn centroid(m: &Mask) -> Option<(f64, f64)> {
    let (h, w) = m.shape();
    let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if m.get(r, c) != 0.0 {
                sr += r as f64;
                sc += c as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sr / n as f64, sc / n as f64))
}

/// The `area` pixels of `support` with the smallest gauge around `center`,
/// ties broken by distance and then row-major order.
pub fn canonical_patch(
    shape: CanonicalShape,
    center: (f64, f64),
    area: usize,
    support: &Mask,
) -> Result<Mask> {
    let (h, w) = support.shape();
    let mut cand: Vec<(f64, f64, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if support.get(r, c) != 0.0 {
                let dr = r as f64 - center.0;
                let dc = c as f64 - center.1;
                cand.push((shape.gauge(dr, dc), dr * dr + dc * dc, r * w + c));
            }
        }
    }
    if cand.len() < area {
        return Err(Error::Precondition(format!(
            "support has {} pixels, fewer than the requested area {area}",
            cand.len()
        )));
    }
    cand.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut on = vec![false; h * w];
    for &(_, _, idx) in &cand[..area] {
        on[idx] = true;
    }
    Ok(Mask::binary_from_fn(h, w, |r, c| on[r * w + c]))
}

/// Every shift `(dr, dc)` that keeps all nonzero pixels of `patch` inside
/// `support`, in row-major order of the shift.
pub fn valid_offsets(patch: &Mask, support: &Mask) -> Result<Vec<(isize, isize)>> {
    patch.grid().check_same_shape(support.grid())?;
    let (h, w) = patch.shape();
    let pixels: Vec<(isize, isize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| patch.get(r, c) != 0.0)
        .map(|(r, c)| (r as isize, c as isize))
        .collect();
    let (hi, wi) = (h as isize, w as isize);
    let mut out = Vec::new();
    if pixels.is_empty() {
        return Ok(out);
    }
    for dr in -hi + 1..hi {
        for dc in -wi + 1..wi {
            let fits = pixels.iter().all(|&(r, c)| {
                let (rr, cc) = (r + dr, c + dc);
                rr >= 0
                    && rr < hi
                    && cc >= 0
                    && cc < wi
                    && support.get(rr as usize, cc as usize) != 0.0
            });
            if fits {
                out.push((dr, dc));
            }
        }
    }
    Ok(out)
}

/// `patch` shifted by `(dr, dc)`; pixels leaving the frame are dropped.
pub fn translate(patch: &Mask, dr: isize, dc: isize) -> Mask {
    let (h, w) = patch.shape();
    Mask::binary_from_fn(h, w, |r, c| {
        let (sr, sc) = (r as isize - dr, c as isize - dc);
        sr >= 0
            && sc >= 0
            && (sr as usize) < h
            && (sc as usize) < w
            && patch.get(sr as usize, sc as usize) != 0.0
    })
}
