//! A minimal reverse-mode tape for a per-pixel MLP: affine maps, `tanh` and
//! inverted dropout over a batch of `n` rows.
//!
//! Affine weights are stored `[in][out]` so the forward pass is a sequence of
//! contiguous axpy updates.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four fixed accumulators (order is deterministic).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `out[r] = b + x[r] W` for `n` rows.
pub fn affine_forward(x: &[f64], n: usize, n_in: usize, n_out: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), n * n_in);
    debug_assert_eq!(w.len(), n_in * n_out);
    let mut out = vec![0.0; n * n_out];
    for r in 0..n {
        let row = &mut out[r * n_out..(r + 1) * n_out];
        row.copy_from_slice(b);
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &w[i * n_out..(i + 1) * n_out], row);
            }
        }
    }
    out
}

/// Accumulates `dW`, `db` and (optionally) returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn affine_backward(
    x: &[f64],
    n: usize,
    n_in: usize,
    n_out: usize,
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let mut dx = want_dx.then(|| vec![0.0; n * n_in]);
    for r in 0..n {
        let g = &dout[r * n_out..(r + 1) * n_out];
        axpy(1.0, g, db);
        let xr = &x[r * n_in..(r + 1) * n_in];
        for (i, &xi) in xr.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, g, &mut dw[i * n_out..(i + 1) * n_out]);
            }
        }
        if let Some(dx) = dx.as_mut() {
            for i in 0..n_in {
                dx[r * n_in + i] = dot(&w[i * n_out..(i + 1) * n_out], g);
            }
        }
    }
    dx
}

pub fn tanh_forward(x: &mut [f64]) {
    for v in x {
        *v = v.tanh();
    }
}

/// `dy *= 1 - y^2`, with `y` the forward output.
pub fn tanh_backward(y: &[f64], dy: &mut [f64]) {
    for (d, &t) in dy.iter_mut().zip(y) {
        *d *= 1.0 - t * t;
    }
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(rng: &mut R, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Layer widths of an MLP and the offsets of its parameters in a flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

impl MlpLayout {
    /// `dims = [in, hidden..., out]`; parameters start at `base` in the flat vector.
    pub fn new(dims: &[usize], base: usize) -> Self {
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut at = base;
        for k in 0..dims.len() - 1 {
            offsets.push(at);
            at += dims[k] * dims[k + 1] + dims[k + 1];
        }
        Self {
            dims: dims.to_vec(),
            offsets,
            len: at - base,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(weight range, bias range)` of layer `k` in the flat vector.
    pub fn layer(&self, k: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let (a, b) = (self.dims[k], self.dims[k + 1]);
        let o = self.offsets[k];
        (o..o + a * b, o + a * b..o + a * b + b)
    }
}

enum Record {
    Affine { layer: usize, input: Vec<f64> },
    Tanh { output: Vec<f64> },
    Dropout { mask: Vec<f64> },
}

/// Operations recorded by [`mlp_forward`], replayed backwards by [`mlp_backward`].
pub struct Tape {
    rows: usize,
    records: Vec<Record>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Forward pass `affine -> tanh -> [dropout]` per hidden layer and a final
/// affine output layer. Dropout is applied only when `dropout` is given.
pub fn mlp_forward<R: Rng>(
    layout: &MlpLayout,
    params: &[f64],
    x: &[f64],
    rows: usize,
    mut dropout: Option<(f64, &mut R)>,
) -> (Vec<f64>, Tape) {
    let mut tape = Tape {
        rows,
        records: Vec::with_capacity(3 * layout.n_layers()),
    };
    let mut act = x.to_vec();
    let last = layout.n_layers() - 1;
    for k in 0..layout.n_layers() {
        let (wr, br) = layout.layer(k);
        let (n_in, n_out) = (layout.dims[k], layout.dims[k + 1]);
        let out = affine_forward(&act, rows, n_in, n_out, &params[wr], &params[br]);
        tape.records.push(Record::Affine { layer: k, input: act });
        act = out;
        if k < last {
            tanh_forward(&mut act);
            tape.records.push(Record::Tanh { output: act.clone() });
            if let Some((rate, rng)) = dropout.as_mut() {
                if *rate > 0.0 {
                    let mask = dropout_mask(*rng, act.len(), *rate);
                    for (a, m) in act.iter_mut().zip(&mask) {
                        *a *= m;
                    }
                    tape.records.push(Record::Dropout { mask });
                }
            }
        }
    }
    (act, tape)
}

/// Accumulates parameter gradients into `grad` (same layout as `params`).
pub fn mlp_backward(layout: &MlpLayout, params: &[f64], tape: &Tape, dout: &[f64], grad: &mut [f64]) {
    let mut g = dout.to_vec();
    for rec in tape.records.iter().rev() {
        match rec {
            Record::Affine { layer, input } => {
                let (wr, br) = layout.layer(*layer);
                let (n_in, n_out) = (layout.dims[*layer], layout.dims[*layer + 1]);
                let (gw, gb) = {
                    // wr and br are adjacent and ordered.
                    let (lo, hi) = grad.split_at_mut(br.start);
                    (&mut lo[wr.clone()], &mut hi[..br.len()])
                };
                let dx = affine_backward(input, tape.rows, n_in, n_out, &params[wr], &g, gw, gb, *layer > 0);
                match dx {
                    Some(dx) => g = dx,
                    None => return,
                }
            }
            Record::Tanh { output } => tanh_backward(output, &mut g),
            Record::Dropout { mask } => {
                for (d, m) in g.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
        }
    }
}
