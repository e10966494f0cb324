//! Gated residual refinement of a frozen base pointmap.
//!
//! The refined mean is `base + sigmoid(gate) * delta`, with the residual and the
//! gate optionally passed through an identity-initialized depthwise-separable
//! smoothing operator after token-to-pixel upsampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{Grid, PointMap, ScalarMap};
use crate::special::sigmoid;

/// Additive mean correction, one 3-vector per pixel.
pub type ResidualField = PointMap;
/// Pre-sigmoid gate logits, one per pixel.
pub type GateLogits = ScalarMap;

/// `base + sigmoid(gate) * delta`, broadcast over the three coordinates.
pub fn gated_refine(base: &PointMap, delta: &ResidualField, gate: &GateLogits) -> Result<PointMap> {
    let (h, w) = (base.height(), base.width());
    if !delta.same_dims(h, w) || gate.height() != h || gate.width() != w {
        return Err(CoreError::Usage(format!(
            "gated_refine: base {h}x{w}, delta {}x{}, gate {}x{}",
            delta.height(),
            delta.width(),
            gate.height(),
            gate.width()
        )));
    }
    let points = base
        .points()
        .iter()
        .zip(delta.points())
        .zip(gate.values())
        .map(|((x0, d), &g)| x0 + d * sigmoid(g))
        .collect();
    PointMap::new(h, w, points)
}

/// Depthwise 3x3 convolution followed by a 1x1 channel mix and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingKernel {
    channels: usize,
    /// Per-channel 3x3 taps, row-major, centre at index 4.
    pub depthwise: Vec<[f64; 9]>,
    /// `C x C` mixing matrix, row-major `[out][in]`.
    pub pointwise: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SmoothingKernel {
    /// Exact no-op: centre tap 1, identity mixing, zero bias.
    pub fn identity(channels: usize) -> Self {
        let mut tap = [0.0; 9];
        tap[4] = 1.0;
        let mut pointwise = vec![0.0; channels * channels];
        for c in 0..channels {
            pointwise[c * channels + c] = 1.0;
        }
        Self {
            channels,
            depthwise: vec![tap; channels],
            pointwise,
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of scalar parameters.
    pub fn param_count(channels: usize) -> usize {
        9 * channels + channels * channels + channels
    }

    /// Parameters flattened as depthwise taps, pointwise matrix, bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::param_count(self.channels));
        for t in &self.depthwise {
            v.extend_from_slice(t);
        }
        v.extend_from_slice(&self.pointwise);
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn from_flat(channels: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != Self::param_count(channels) {
            return Err(CoreError::Usage(format!(
                "smoothing kernel with {channels} channels needs {} parameters, got {}",
                Self::param_count(channels),
                flat.len()
            )));
        }
        let depthwise = flat[..9 * channels]
            .chunks_exact(9)
            .map(|c| {
                let mut t = [0.0; 9];
                t.copy_from_slice(c);
                t
            })
            .collect();
        let p0 = 9 * channels;
        let p1 = p0 + channels * channels;
        Ok(Self {
            channels,
            depthwise,
            pointwise: flat[p0..p1].to_vec(),
            bias: flat[p1..].to_vec(),
        })
    }

    fn zeros(channels: usize) -> Self {
        Self {
            channels,
            depthwise: vec![[0.0; 9]; channels],
            pointwise: vec![0.0; channels * channels],
            bias: vec![0.0; channels],
        }
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn depthwise(field: &Grid, kernel: &SmoothingKernel) -> Grid {
    let (h, w, ch) = (field.height(), field.width(), field.channels());
    let mut out = Grid::zeros(h, w, ch);
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let taps = &kernel.depthwise[k];
                let mut acc = 0.0;
                for dr in 0..3 {
                    let rr = clamp_index(r as isize + dr as isize - 1, h);
                    for dc in 0..3 {
                        let cc = clamp_index(c as isize + dc as isize - 1, w);
                        acc += taps[dr * 3 + dc] * field.get(rr, cc, k);
                    }
                }
                out.set(r, c, k, acc);
            }
        }
    }
    out
}

fn check_channels(field: &Grid, kernel: &SmoothingKernel) -> Result<()> {
    if field.channels() != kernel.channels {
        return Err(CoreError::Usage(format!(
            "field has {} channels, smoothing kernel expects {}",
            field.channels(),
            kernel.channels
        )));
    }
    Ok(())
}

/// Depthwise 3x3 convolution (replicate padding), then pointwise mixing and bias.
pub fn smooth(field: &Grid, kernel: &SmoothingKernel) -> Result<Grid> {
    check_channels(field, kernel)?;
    let ch = field.channels();
    let dw = depthwise(field, kernel);
    let mut out = Grid::zeros(field.height(), field.width(), ch);
    for i in 0..field.len_pixels() {
        let src = dw.pixel(i);
        let dst = out.pixel_mut(i);
        for o in 0..ch {
            let row = &kernel.pointwise[o * ch..(o + 1) * ch];
            dst[o] = row.iter().zip(src).map(|(p, v)| p * v).sum::<f64>() + kernel.bias[o];
        }
    }
    Ok(out)
}

/// Adjoint of [`smooth`]: gradients with respect to the input field and to the
/// kernel parameters, given the gradient of the output.
pub fn smooth_backward(field: &Grid, kernel: &SmoothingKernel, grad_out: &Grid) -> Result<(Grid, SmoothingKernel)> {
    check_channels(field, kernel)?;
    let (h, w, ch) = (field.height(), field.width(), field.channels());
    if !grad_out.same_dims(h, w) || grad_out.channels() != ch {
        return Err(CoreError::Usage("smooth_backward: gradient shape mismatch".into()));
    }
    let dw = depthwise(field, kernel);
    let mut gk = SmoothingKernel::zeros(ch);
    let mut grad_dw = Grid::zeros(h, w, ch);
    for i in 0..field.len_pixels() {
        let g = grad_out.pixel(i);
        let d = dw.pixel(i);
        for o in 0..ch {
            gk.bias[o] += g[o];
            for c in 0..ch {
                gk.pointwise[o * ch + c] += g[o] * d[c];
            }
        }
        let gd = grad_dw.pixel_mut(i);
        for c in 0..ch {
            gd[c] = (0..ch).map(|o| kernel.pointwise[o * ch + c] * g[o]).sum();
        }
    }
    let mut grad_in = Grid::zeros(h, w, ch);
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let g = grad_dw.get(r, c, k);
                if g == 0.0 {
                    continue;
                }
                for dr in 0..3 {
                    let rr = clamp_index(r as isize + dr as isize - 1, h);
                    for dc in 0..3 {
                        let cc = clamp_index(c as isize + dc as isize - 1, w);
                        let t = dr * 3 + dc;
                        gk.depthwise[k][t] += g * field.get(rr, cc, k);
                        let cur = grad_in.get(rr, cc, k);
                        grad_in.set(rr, cc, k, cur + g * kernel.depthwise[k][t]);
                    }
                }
            }
        }
    }
    Ok((grad_in, gk))
}

/// Mean anisotropic total variation of the activated gate over all horizontal
/// and vertical neighbour pairs; 0 for a 1x1 gate.
pub fn tv_penalty(gate: &GateLogits) -> f64 {
    let (h, w) = (gate.height(), gate.width());
    let s: Vec<f64> = gate.values().iter().map(|&g| sigmoid(g)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for r in 0..h {
        for c in 0..w {
            let v = s[r * w + c];
            if c + 1 < w {
                total += (v - s[r * w + c + 1]).abs();
                pairs += 1;
            }
            if r + 1 < h {
                total += (v - s[(r + 1) * w + c]).abs();
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Subgradient of [`tv_penalty`] with respect to the logits (0 at ties).
pub fn tv_penalty_grad(gate: &GateLogits) -> ScalarMap {
    let (h, w) = (gate.height(), gate.width());
    let s: Vec<f64> = gate.values().iter().map(|&g| sigmoid(g)).collect();
    let pairs = h * w.saturating_sub(1) + h.saturating_sub(1) * w;
    let mut g = vec![0.0; h * w];
    if pairs == 0 {
        return ScalarMap::filled(h, w, 0.0);
    }
    let scale = 1.0 / pairs as f64;
    let sign = |x: f64| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                let sg = sign(s[i] - s[i + 1]) * scale;
                g[i] += sg;
                g[i + 1] -= sg;
            }
            if r + 1 < h {
                let sg = sign(s[i] - s[i + w]) * scale;
                g[i] += sg;
                g[i + w] -= sg;
            }
        }
    }
    for (gi, si) in g.iter_mut().zip(&s) {
        *gi *= si * (1.0 - si);
    }
    ScalarMap::new(h, w, g).expect("dims match by construction")
}

/// Nearest-neighbour replication of an `h x w x C` token grid by `factor` in both axes.
pub fn upsample_tokens(tokens: &Grid, factor: usize) -> Result<Grid> {
    if factor < 1 {
        return Err(CoreError::Usage("upsampling factor must be >= 1".into()));
    }
    let (h, w, ch) = (tokens.height(), tokens.width(), tokens.channels());
    let (hh, ww) = (h * factor, w * factor);
    let mut out = Grid::zeros(hh, ww, ch);
    for r in 0..hh {
        for c in 0..ww {
            let src = tokens.pixel((r / factor) * w + c / factor);
            out.pixel_mut(r * ww + c).copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Token-resolution residual and gate to a refined pixel-resolution pointmap:
/// upsample, smooth each branch, then apply the gate.
pub fn refine_from_tokens(
    base: &PointMap,
    delta_tokens: &Grid,
    gate_tokens: &Grid,
    factor: usize,
    delta_kernel: &SmoothingKernel,
    gate_kernel: &SmoothingKernel,
) -> Result<PointMap> {
    let delta = smooth(&upsample_tokens(delta_tokens, factor)?, delta_kernel)?;
    let gate = smooth(&upsample_tokens(gate_tokens, factor)?, gate_kernel)?;
    gated_refine(base, &PointMap::from_grid(&delta)?, &ScalarMap::from_grid(&gate)?)
}
