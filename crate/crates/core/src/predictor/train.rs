//! Mini-batch training loop.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cosine_lr, mix_seed, AdamW, Architecture, DensePredictor, ForwardMode};
use crate::datagen::SceneSample;
use crate::error::{CoreError, Result};
use crate::evidential::LossConfig;
use crate::exec::Executor;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    /// Learning rate at batch size 10; scaled linearly with the batch size.
    pub base_lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossConfig,
    /// Total-variation weight on the activated gate (0 disables it).
    pub tv_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 3e-4,
            weight_decay: 0.05,
            epochs: 10,
            batch_size: 10,
            loss: LossConfig::default(),
            tv_weight: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(CoreError::Config(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if !(self.weight_decay >= 0.0) || !(self.tv_weight >= 0.0) {
            return Err(CoreError::Config(
                "weight_decay and tv_weight must be non-negative".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::Config("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Peak learning rate after linear batch scaling.
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 10.0
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate of the last step in the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

/// Per-channel shift and inverse standard deviation over every pixel of
/// `data`. Constant channels get scale 1.
pub fn fit_feature_normalization(data: &[SceneSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = data
        .first()
        .ok_or_else(|| CoreError::EmptyInput("no training samples".into()))?;
    let f = first.features.channels();
    let mut sum = vec![0.0; f];
    let mut sq = vec![0.0; f];
    let mut n = 0usize;
    for s in data {
        if s.features.channels() != f {
            return Err(CoreError::Usage("feature channel count differs between samples".into()));
        }
        for px in s.features.as_slice().chunks_exact(f) {
            for c in 0..f {
                sum[c] += px[c];
                sq[c] += px[c] * px[c];
            }
        }
        n += s.features.len_pixels();
    }
    let n = n as f64;
    let shift: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let scale = (0..f)
        .map(|c| {
            let var = (sq[c] / n - shift[c] * shift[c]).max(0.0);
            if var > 1e-24 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Ok((shift, scale))
}

/// Root-mean-square per-axis error of the base prediction over valid pixels.
pub fn output_error_scale(data: &[SceneSample]) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for s in data {
        for i in s.mask.indices() {
            acc += (s.gt.points()[i] - s.base_pred.points()[i]).norm_squared();
            n += 3;
        }
    }
    if n == 0 {
        return Err(CoreError::EmptyInput("no valid pixels in the training set".into()));
    }
    let r = (acc / n as f64).sqrt();
    Ok(if r > 0.0 { r } else { 1e-3 })
}

impl DensePredictor {
    /// Fresh predictor with feature normalization and the uncertainty-head
    /// bias fitted to `data`.
    pub fn initialized_for(arch: Architecture, data: &[SceneSample], seed: u64) -> Result<Self> {
        let mut p = Self::new(arch, seed)?;
        let (shift, scale) = fit_feature_normalization(data)?;
        p.set_feature_normalization(&shift, &scale)?;
        p.calibrate_output_scale(output_error_scale(data)?)?;
        Ok(p)
    }
}

fn divergence(epoch: usize, detail: impl ToString) -> CoreError {
    CoreError::Divergence {
        epoch,
        detail: detail.to_string(),
    }
}

/// Trains every weight except the feature normalization with AdamW and a
/// cosine schedule. Per-image gradients may be computed concurrently by
/// `exec`; they are summed in index order, so the result does not depend on
/// the executor. Final weights are rounded to `f32`.
pub fn train<E: Executor>(
    init: &DensePredictor,
    data: &[SceneSample],
    cfg: &TrainConfig,
    exec: &E,
) -> Result<(DensePredictor, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(CoreError::EmptyInput("no training samples".into()));
    }
    // With validated inputs, any later numeric failure is the model's doing.
    for s in data {
        s.validate()?;
    }
    let mut p = init.clone();
    let n_params = p.weights().len();
    let trainable = p.arch().trainable_start()..n_params;
    let mut opt = AdamW::new(n_params, cfg.weight_decay);
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let lr0 = cfg.peak_lr();
    let stochastic = p.arch().dropout > 0.0;

    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        let mut lr = lr0;
        for batch in order.chunks(cfg.batch_size) {
            let model = &p;
            let results = exec.map(batch.len(), |j| {
                let img = batch[j];
                let mode = if stochastic {
                    ForwardMode::Stochastic {
                        seed: mix_seed(mix_seed(cfg.seed, step as u64), img as u64),
                    }
                } else {
                    ForwardMode::Deterministic
                };
                model.image_loss_and_grad(&data[img], &cfg.loss, cfg.tv_weight, mode)
            });
            let mut grad = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r.map_err(|e| match e {
                    CoreError::Numeric(d) | CoreError::Domain(d) | CoreError::InvalidInput(d) => divergence(epoch, d),
                    other => other,
                })?;
                if !l.is_finite() {
                    return Err(divergence(epoch, format!("non-finite loss {l}")));
                }
                batch_loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grad {
                *g *= inv;
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(divergence(epoch, "non-finite gradient"));
            }
            lr = cosine_lr(lr0, step, total_steps);
            opt.step(p.weights_mut(), &grad, lr, trainable.clone());
            if p.weights().iter().any(|w| !w.is_finite()) {
                return Err(divergence(epoch, "non-finite weights after update"));
            }
            epoch_loss += batch_loss;
            step += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / data.len() as f64,
            lr,
        });
    }
    p.snap_weights();
    Ok((p, history))
}

/// `k` independently initialized and trained members; member `j` uses seed
/// `seed + j` for both initialization and data order.
pub fn train_ensemble<E: Executor>(
    arch: &Architecture,
    data: &[SceneSample],
    cfg: &TrainConfig,
    k: usize,
    exec: &E,
) -> Result<Vec<DensePredictor>> {
    if k == 0 {
        return Err(CoreError::Config("ensemble size must be at least 1".into()));
    }
    (0..k as u64)
        .map(|j| {
            let seed = cfg.seed.wrapping_add(j);
            let init = DensePredictor::initialized_for(arch.clone(), data, seed)?;
            let member_cfg = TrainConfig { seed, ..cfg.clone() };
            train(&init, data, &member_cfg, exec).map(|(m, _)| m)
        })
        .collect()
}
