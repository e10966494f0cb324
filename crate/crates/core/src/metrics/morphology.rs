use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::Mask;

// One 1-D pass of a (2r+1) window along rows (`horizontal`) or columns.
// `any = true` is dilation, `any = false` erosion; outside the image is background.
fn pass(src: &[bool], h: usize, w: usize, r: usize, horizontal: bool, any: bool) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let at = |line: usize, k: usize| if horizontal { line * w + k } else { k * w + line };
    for line in 0..lines {
        // Prefix counts of foreground along the line.
        let mut prefix = vec![0usize; len + 1];
        for k in 0..len {
            prefix[k + 1] = prefix[k] + src[at(line, k)] as usize;
        }
        for k in 0..len {
            let lo = k.saturating_sub(r);
            let hi = (k + r + 1).min(len);
            let count = prefix[hi] - prefix[lo];
            out[at(line, k)] = if any {
                count > 0
            } else {
                // Window cells outside the image count as background.
                count == 2 * r + 1
            };
        }
    }
    out
}

fn morph(m: &Mask, r: usize, any: bool) -> Mask {
    let (h, w) = (m.height(), m.width());
    let rows = pass(m.values(), h, w, r, true, any);
    let both = pass(&rows, h, w, r, false, any);
    Mask::new(h, w, both).expect("dims preserved")
}

/// Dilation by a `(2r+1) x (2r+1)` square.
pub fn dilate(m: &Mask, r: usize) -> Mask {
    morph(m, r, true)
}

/// Erosion by a `(2r+1) x (2r+1)` square, with background outside the image.
pub fn erode(m: &Mask, r: usize) -> Mask {
    morph(m, r, false)
}

/// Boundary band `dilate(m, r) & !erode(m, r)`.
pub fn ring_band(m: &Mask, r: usize) -> Result<Mask> {
    if r == 0 {
        return Err(CoreError::Usage("ring radius must be >= 1".into()));
    }
    Ok(dilate(m, r).and(&erode(m, r).not()))
}
