//! A small per-pixel dense predictor standing in for the head stack on top of a
//! frozen backbone: a shared MLP trunk, an uncertainty head, and the gated
//! residual branch (residual + gate heads followed by identity-initialized
//! smoothing).
//!
//! Parameters live in one flat vector:
//! `[feature shift (F) | feature scale (F) | MLP | residual smoothing | gate smoothing]`.
//! The feature normalization block is fixed during training.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use nalgebra::Matrix3;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::evidential::{
    niw_decompose, niw_loss_and_grad, raw_to_nig, raw_to_niw, uncertainty_readout, xyz_nig_decompose,
    xyz_nig_loss_and_grad, LossConfig, RawNig, RawNiw, ReadoutMode, ReadoutSource, UncertaintyDecomposition,
};
use crate::grid::{Grid, PointMap, ScalarMap, UncertaintyMap, Vec3};
use crate::metrics::{PixelPredictive, PredictiveSource};
use crate::refinement::{
    smooth, smooth_backward, tv_penalty, tv_penalty_grad, GateLogits, ResidualField, SmoothingKernel,
};
use crate::special::{sigmoid, softplus, softplus_inv};

mod baselines;
mod hetero;
pub mod nn;
mod optim;
mod train;

pub use baselines::{
    dropout_sample, ensemble_sample, gaussian_predictives, moment_match, select_sigma0_sq, BaselineConfig,
    BaselineMode, MomentMatched, SIGMA0_GRID,
};
pub use hetero::{hetero_loss, hetero_loss_grad};
pub use optim::{cosine_lr, AdamW};
pub use train::{
    fit_feature_normalization, output_error_scale, train, train_ensemble, EpochRecord, TrainConfig, TrainHistory,
};

use nn::{mlp_backward, mlp_forward, MlpLayout, Tape};

/// Which predictive family the uncertainty head parameterizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum HeadKind {
    Niw,
    Nig,
    Hetero,
}

impl HeadKind {
    /// Uncertainty channels; the mean always comes from the refined pointmap.
    pub fn uq_channels(&self) -> usize {
        match self {
            HeadKind::Niw => 8,
            HeadKind::Nig => 9,
            HeadKind::Hetero => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Niw => "niw",
            HeadKind::Nig => "nig",
            HeadKind::Hetero => "hetero",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            HeadKind::Niw => 0,
            HeadKind::Nig => 1,
            HeadKind::Hetero => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Self::Niw),
            1 => Ok(Self::Nig),
            2 => Ok(Self::Hetero),
            _ => Err(CoreError::Usage(format!("unknown head code {c}"))),
        }
    }

    /// Readout used when none is requested.
    pub fn default_readout(&self) -> ReadoutMode {
        match self {
            HeadKind::Hetero => ReadoutMode::Total,
            _ => ReadoutMode::Epi,
        }
    }
}

impl FromStr for HeadKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "niw" => Ok(Self::Niw),
            "nig" => Ok(Self::Nig),
            "hetero" => Ok(Self::Hetero),
            other => Err(CoreError::Usage(format!("unknown head kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Architecture {
    pub feature_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Dropout after each hidden layer; 0 disables it.
    pub dropout: f64,
    pub head: HeadKind,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            feature_dim: 8,
            hidden_width: 64,
            hidden_layers: 2,
            dropout: 0.0,
            head: HeadKind::Niw,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 1 || self.hidden_width < 1 || self.hidden_layers < 1 {
            return Err(CoreError::Config(format!("invalid architecture {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Channels of the final affine layer: uncertainty, residual (3), gate (1).
    pub fn head_outputs(&self) -> usize {
        self.head.uq_channels() + 4
    }

    fn mlp_dims(&self) -> Vec<usize> {
        let mut d = vec![self.feature_dim];
        d.extend(core::iter::repeat_n(self.hidden_width, self.hidden_layers));
        d.push(self.head_outputs());
        d
    }

    pub(crate) fn mlp_layout(&self) -> MlpLayout {
        MlpLayout::new(&self.mlp_dims(), 2 * self.feature_dim)
    }

    /// Start of the trainable parameters.
    pub fn trainable_start(&self) -> usize {
        2 * self.feature_dim
    }

    fn smoothing_offsets(&self) -> (usize, usize) {
        let a = self.trainable_start() + self.mlp_layout().len();
        (a, a + SmoothingKernel::param_count(3))
    }

    pub fn param_count(&self) -> usize {
        self.smoothing_offsets().1 + SmoothingKernel::param_count(1)
    }
}

/// How dropout behaves in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Deterministic,
    /// Dropout masks drawn from a generator seeded with `seed`.
    Stochastic {
        seed: u64,
    },
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn snap_f32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensePredictor {
    arch: Architecture,
    weights: Vec<f64>,
}

/// Per-pixel head outputs of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs {
    pub kind: HeadKind,
    /// Raw uncertainty channels (`H x W x uq_channels`).
    pub uq_raw: Grid,
    /// Smoothed residual.
    pub delta: ResidualField,
    /// Smoothed gate logits.
    pub gate: GateLogits,
    /// `base + sigmoid(gate) * delta`.
    pub refined: PointMap,
}

struct ForwardCache {
    tape: Tape,
    delta_raw: Grid,
    gate_raw: Grid,
    delta_kernel: SmoothingKernel,
    gate_kernel: SmoothingKernel,
}

impl DensePredictor {
    /// Random trunk (Xavier-uniform), zero residual and gate heads, identity
    /// smoothing, identity feature normalization. Weights are f32-representable.
    pub fn new(mut arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        // Checkpoints store the rate as f32.
        arch.dropout = arch.dropout as f32 as f64;
        let mut w = vec![0.0; arch.param_count()];
        let f = arch.feature_dim;
        for s in &mut w[f..2 * f] {
            *s = 1.0;
        }
        let layout = arch.mlp_layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..layout.n_layers() {
            let (wr, _) = layout.layer(k);
            let (n_in, n_out) = (layout.dims()[k], layout.dims()[k + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for (j, x) in w[wr].iter_mut().enumerate() {
                let out_ch = j % n_out;
                let is_refine_head = k + 1 == layout.n_layers() && out_ch >= arch.head.uq_channels();
                let v = rng.random_range(-limit..limit);
                *x = if is_refine_head { 0.0 } else { v };
            }
        }
        let (sd, sg) = arch.smoothing_offsets();
        w[sd..sg].copy_from_slice(&SmoothingKernel::identity(3).to_flat());
        w[sg..].copy_from_slice(&SmoothingKernel::identity(1).to_flat());
        let mut p = Self { arch, weights: w };
        p.calibrate_output_scale(1.0)?;
        snap_f32(&mut p.weights);
        Ok(p)
    }

    pub fn from_weights(arch: Architecture, weights: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if weights.len() != arch.param_count() {
            return Err(CoreError::Usage(format!(
                "architecture needs {} weights, got {}",
                arch.param_count(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(CoreError::InvalidInput("non-finite weight".into()));
        }
        Ok(Self { arch, weights })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn snap_weights(&mut self) {
        snap_f32(&mut self.weights);
    }

    /// Sets `x' = (x - shift) * scale` applied to input features.
    pub fn set_feature_normalization(&mut self, shift: &[f64], scale: &[f64]) -> Result<()> {
        let f = self.arch.feature_dim;
        if shift.len() != f || scale.len() != f {
            return Err(CoreError::Usage(format!("normalization needs {f} channels")));
        }
        if shift.iter().chain(scale).any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput("non-finite normalization".into()));
        }
        self.weights[..f].copy_from_slice(shift);
        self.weights[f..2 * f].copy_from_slice(scale);
        snap_f32(&mut self.weights[..2 * f]);
        Ok(())
    }

    /// Sets the uncertainty-head biases so that the initial predictive standard
    /// deviation per axis is about `err_scale`.
    pub fn calibrate_output_scale(&mut self, err_scale: f64) -> Result<()> {
        if !(err_scale > 0.0 && err_scale.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "error scale must be positive, got {err_scale}"
            )));
        }
        let layout = self.arch.mlp_layout();
        let (_, br) = layout.layer(layout.n_layers() - 1);
        let b = &mut self.weights[br];
        let eps = crate::evidential::DEFAULT_EPS;
        let ln2 = core::f64::consts::LN_2;
        match self.arch.head {
            HeadKind::Niw => {
                let (kappa, nu) = (ln2 + eps, 4.0 + ln2 + eps);
                let c = (kappa + 1.0) / (kappa * (nu - 2.0));
                b[..8].fill(0.0);
                let d = softplus_inv(err_scale / c.sqrt() - eps);
                // l11, l22, l33 sit at packed positions 0, 2, 5.
                for k in [0, 2, 5] {
                    b[2 + k] = d;
                }
            }
            HeadKind::Nig => {
                let (nu, am1) = (ln2 + eps, ln2 + eps);
                let beta = err_scale * err_scale * nu * am1 / (1.0 + nu);
                for c in 0..3 {
                    b[3 * c] = 0.0;
                    b[3 * c + 1] = 0.0;
                    b[3 * c + 2] = softplus_inv(beta - eps);
                }
            }
            HeadKind::Hetero => b[..3].fill((err_scale * err_scale).ln()),
        }
        snap_f32(b);
        Ok(())
    }

    fn check_inputs(&self, features: &Grid, base: &PointMap) -> Result<()> {
        if features.channels() != self.arch.feature_dim {
            return Err(CoreError::Usage(format!(
                "model expects {} feature channels, got {}",
                self.arch.feature_dim,
                features.channels()
            )));
        }
        if !base.same_dims(features.height(), features.width()) {
            return Err(CoreError::Usage(format!(
                "features are {}x{} but the base pointmap is {}x{}",
                features.height(),
                features.width(),
                base.height(),
                base.width()
            )));
        }
        Ok(())
    }

    fn forward_cached(
        &self,
        features: &Grid,
        base: &PointMap,
        mode: ForwardMode,
    ) -> Result<(HeadOutputs, ForwardCache)> {
        self.check_inputs(features, base)?;
        let (h, w) = (features.height(), features.width());
        let n = h * w;
        let f = self.arch.feature_dim;
        let (shift, scale) = (&self.weights[..f], &self.weights[f..2 * f]);
        let x: Vec<f64> = features
            .as_slice()
            .chunks_exact(f)
            .flat_map(|px| px.iter().zip(shift).zip(scale).map(|((v, s), k)| (v - s) * k))
            .collect();
        let layout = self.arch.mlp_layout();
        let (out, tape) = match mode {
            ForwardMode::Stochastic { seed } if self.arch.dropout > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                mlp_forward(&layout, &self.weights, &x, n, Some((self.arch.dropout, &mut rng)))
            }
            _ => mlp_forward::<ChaCha8Rng>(&layout, &self.weights, &x, n, None),
        };
        let uq = self.arch.head.uq_channels();
        let ho = self.arch.head_outputs();
        let mut uq_raw = Vec::with_capacity(n * uq);
        let mut delta_raw = Vec::with_capacity(n * 3);
        let mut gate_raw = Vec::with_capacity(n);
        for px in out.chunks_exact(ho) {
            uq_raw.extend_from_slice(&px[..uq]);
            delta_raw.extend_from_slice(&px[uq..uq + 3]);
            gate_raw.push(px[uq + 3]);
        }
        let delta_raw = Grid::from_vec(h, w, 3, delta_raw)?;
        let gate_raw = Grid::from_vec(h, w, 1, gate_raw)?;
        let (sd, sg) = self.arch.smoothing_offsets();
        let delta_kernel = SmoothingKernel::from_flat(3, &self.weights[sd..sg])?;
        let gate_kernel = SmoothingKernel::from_flat(1, &self.weights[sg..])?;
        let delta = PointMap::from_grid(&smooth(&delta_raw, &delta_kernel)?)?;
        let gate = ScalarMap::from_grid(&smooth(&gate_raw, &gate_kernel)?)?;
        let refined = crate::refinement::gated_refine(base, &delta, &gate)?;
        Ok((
            HeadOutputs {
                kind: self.arch.head,
                uq_raw: Grid::from_vec(h, w, uq, uq_raw)?,
                delta,
                gate,
                refined,
            },
            ForwardCache {
                tape,
                delta_raw,
                gate_raw,
                delta_kernel,
                gate_kernel,
            },
        ))
    }

    /// Head outputs for one image. Deterministic mode never applies dropout.
    pub fn forward(&self, features: &Grid, base: &PointMap, mode: ForwardMode) -> Result<HeadOutputs> {
        Ok(self.forward_cached(features, base, mode)?.0)
    }

    /// Training objective of one image and its gradient over all weights:
    /// `lambda_uq * mean_valid(pixel loss) + tv_weight * tv(sigmoid(gate))`.
    /// The pixel loss is the regularized NIW / XYZ-NIG loss or the Gaussian NLL.
    pub fn image_loss_and_grad(
        &self,
        sample: &crate::datagen::SceneSample,
        loss: &LossConfig,
        tv_weight: f64,
        mode: ForwardMode,
    ) -> Result<(f64, Vec<f64>)> {
        let (outs, cache) = self.forward_cached(&sample.features, &sample.base_pred, mode)?;
        let (h, w) = (sample.height(), sample.width());
        let n = h * w;
        let idx = sample.mask.indices();
        if idx.is_empty() {
            return Err(CoreError::EmptyInput("training sample has no valid pixels".into()));
        }
        let uq = self.arch.head.uq_channels();
        let ho = self.arch.head_outputs();
        let scale = loss.lambda_uq / idx.len() as f64;
        let mut d_out = vec![0.0; n * ho];
        let mut d_ref = vec![Vec3::zeros(); n];
        let mut total = 0.0;
        for &i in &idx {
            let raw = outs.uq_raw.pixel(i);
            let mean = outs.refined.points()[i];
            let gt = sample.gt.points()[i];
            let g = &mut d_out[i * ho..i * ho + uq];
            let (l, dm) = match self.arch.head {
                HeadKind::Niw => {
                    let r = RawNiw::from_array(&niw_raw_array(&mean, raw));
                    let (l, gr) = niw_loss_and_grad(&r, &gt, loss)?;
                    let a = gr.to_array();
                    g.copy_from_slice(&a[3..]);
                    (l, gr.m_raw)
                }
                HeadKind::Nig => {
                    let r = nig_raws(&mean, raw);
                    let (l, gr) = xyz_nig_loss_and_grad(&r, &gt, loss)?;
                    let mut dm = Vec3::zeros();
                    for c in 0..3 {
                        g[3 * c] = gr[c].nu_raw;
                        g[3 * c + 1] = gr[c].alpha_raw;
                        g[3 * c + 2] = gr[c].beta_raw;
                        dm[c] = gr[c].gamma_raw;
                    }
                    (l, dm)
                }
                HeadKind::Hetero => {
                    let lv = Vec3::new(raw[0], raw[1], raw[2]);
                    let (l, dm, dlv) = hetero_loss_grad(&mean, &lv, &gt);
                    g.copy_from_slice(dlv.as_slice());
                    (l, dm)
                }
            };
            for v in g.iter_mut() {
                *v *= scale;
            }
            d_ref[i] = dm * scale;
            total += l;
        }
        let mut value = scale * total;

        // Refinement branch: refined = base + sigmoid(gate) * delta.
        let mut d_delta = Grid::zeros(h, w, 3);
        let mut d_gate = Grid::zeros(h, w, 1);
        let tv_grad = (tv_weight != 0.0).then(|| {
            value += tv_weight * tv_penalty(&outs.gate);
            tv_penalty_grad(&outs.gate)
        });
        for i in 0..n {
            let gl = outs.gate.values()[i];
            let s = sigmoid(gl);
            let dr = d_ref[i];
            d_delta.pixel_mut(i).copy_from_slice((dr * s).as_slice());
            let mut dg = s * (1.0 - s) * outs.delta.points()[i].dot(&dr);
            if let Some(t) = &tv_grad {
                dg += tv_weight * t.values()[i];
            }
            d_gate.pixel_mut(i)[0] = dg;
        }
        let (d_delta_raw, d_dk) = smooth_backward(&cache.delta_raw, &cache.delta_kernel, &d_delta)?;
        let (d_gate_raw, d_gk) = smooth_backward(&cache.gate_raw, &cache.gate_kernel, &d_gate)?;
        for i in 0..n {
            let row = &mut d_out[i * ho..(i + 1) * ho];
            row[uq..uq + 3].copy_from_slice(d_delta_raw.pixel(i));
            row[uq + 3] = d_gate_raw.pixel(i)[0];
        }

        let mut grad = vec![0.0; self.weights.len()];
        mlp_backward(&self.arch.mlp_layout(), &self.weights, &cache.tape, &d_out, &mut grad);
        let (sd, sg) = self.arch.smoothing_offsets();
        grad[sd..sg].copy_from_slice(&d_dk.to_flat());
        grad[sg..].copy_from_slice(&d_gk.to_flat());
        Ok((value, grad))
    }
}

fn niw_raw_array(mean: &Vec3, raw: &[f64]) -> [f64; 11] {
    let mut a = [0.0; 11];
    a[..3].copy_from_slice(mean.as_slice());
    a[3..].copy_from_slice(raw);
    a
}

fn nig_raws(mean: &Vec3, raw: &[f64]) -> [RawNig; 3] {
    core::array::from_fn(|c| RawNig {
        gamma_raw: mean[c],
        nu_raw: raw[3 * c],
        alpha_raw: raw[3 * c + 1],
        beta_raw: raw[3 * c + 2],
    })
}

impl HeadOutputs {
    pub fn height(&self) -> usize {
        self.refined.height()
    }

    pub fn width(&self) -> usize {
        self.refined.width()
    }

    /// The full eleven-channel raw NIW map (mean channels = refined pointmap).
    pub fn raw_niw_map(&self) -> Result<Grid> {
        if self.kind != HeadKind::Niw {
            return Err(CoreError::Usage("raw NIW map requested from a non-NIW head".into()));
        }
        let n = self.refined.len();
        let mut v = Vec::with_capacity(n * 11);
        for i in 0..n {
            v.extend_from_slice(&niw_raw_array(&self.refined.points()[i], self.uq_raw.pixel(i)));
        }
        Grid::from_vec(self.height(), self.width(), 11, v)
    }

    /// Predictive distribution at pixel `i`.
    pub fn predictive(&self, i: usize, eps: f64) -> Result<PixelPredictive> {
        let mean = self.refined.points()[i];
        let raw = self.uq_raw.pixel(i);
        Ok(match self.kind {
            HeadKind::Niw => PixelPredictive::Niw(raw_to_niw(&RawNiw::from_array(&niw_raw_array(&mean, raw)), eps)?),
            HeadKind::Nig => {
                let r = nig_raws(&mean, raw);
                PixelPredictive::Nig([
                    raw_to_nig(&r[0], eps)?,
                    raw_to_nig(&r[1], eps)?,
                    raw_to_nig(&r[2], eps)?,
                ])
            }
            HeadKind::Hetero => PixelPredictive::DiagGaussian {
                mean,
                var: Vec3::new(raw[0].exp(), raw[1].exp(), raw[2].exp()),
            },
        })
    }

    pub fn predictive_source(&self, eps: f64) -> Result<PredictiveSource> {
        (0..self.refined.len())
            .map(|i| self.predictive(i, eps))
            .collect::<Result<Vec<_>>>()
            .map(PredictiveSource::Dists)
    }

    /// Aleatoric / epistemic split at pixel `i`. The Gaussian head has no
    /// epistemic part (reported as zero).
    pub fn decomposition(&self, i: usize, eps: f64) -> Result<UncertaintyDecomposition> {
        match self.predictive(i, eps)? {
            PixelPredictive::Niw(p) => niw_decompose(&p),
            PixelPredictive::Nig(ps) => xyz_nig_decompose(&ps),
            PixelPredictive::DiagGaussian { var, .. } => {
                let alea = Matrix3::from_diagonal(&var);
                Ok(UncertaintyDecomposition {
                    alea,
                    epi: Matrix3::zeros(),
                    total: alea,
                })
            }
        }
    }

    /// Scalar uncertainty per pixel under `mode`.
    pub fn uncertainty_map(&self, mode: ReadoutMode, eps: f64) -> Result<UncertaintyMap> {
        if self.kind == HeadKind::Hetero && mode == ReadoutMode::Epi {
            return Err(CoreError::Usage("the Gaussian head has no epistemic readout".into()));
        }
        let v = (0..self.refined.len())
            .map(|i| {
                let d = self.decomposition(i, eps)?;
                uncertainty_readout(ReadoutSource::Decomposition(&d), mode, eps)
            })
            .collect::<Result<Vec<_>>>()?;
        ScalarMap::new(self.height(), self.width(), v)
    }
}

/// Softplus helper re-exported for callers computing raw-space inits.
pub fn softplus_raw(x: f64) -> f64 {
    softplus(x)
}
