//! Sampling baselines: MC dropout and deep ensembles, reduced to a diagonal
//! Gaussian by moment matching.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::{mix_seed, DensePredictor, ForwardMode};
use crate::error::{CoreError, Result};
use crate::grid::{Grid, Mask, PointMap, ScalarMap, UncertaintyMap, Vec3};
use crate::metrics::{PixelPredictive, PredictiveSource};
use crate::special::LN_2PI;

/// Candidate variance floors searched on validation data.
pub const SIGMA0_GRID: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BaselineMode {
    McDropout,
    Ensemble,
    /// Single heteroscedastic Gaussian head; no sampling.
    Hetero,
}

impl BaselineMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMode::McDropout => "mc-dropout",
            BaselineMode::Ensemble => "ensemble",
            BaselineMode::Hetero => "hetero",
        }
    }
}

impl FromStr for BaselineMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc-dropout" | "mcdropout" | "dropout" => Ok(Self::McDropout),
            "ensemble" => Ok(Self::Ensemble),
            "hetero" => Ok(Self::Hetero),
            other => Err(CoreError::Usage(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineConfig {
    pub mode: BaselineMode,
    /// Stochastic passes for MC dropout.
    pub t: usize,
    /// Ensemble members.
    pub k: usize,
    /// Variance floor added to the sample variance; `None` selects it from
    /// [`SIGMA0_GRID`] on validation data.
    pub sigma0_sq: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mode: BaselineMode::McDropout,
            t: 16,
            k: 5,
            sigma0_sq: None,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.k == 0 {
            return Err(CoreError::Config("baseline sample counts must be at least 1".into()));
        }
        if let Some(s) = self.sigma0_sq {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CoreError::Config(format!("sigma0^2 must be non-negative, got {s}")));
            }
        }
        Ok(())
    }
}

/// `t` refined pointmaps from independent dropout masks.
pub fn dropout_sample(
    p: &DensePredictor,
    features: &Grid,
    base: &PointMap,
    t: usize,
    seed: u64,
) -> Result<Vec<PointMap>> {
    if !(p.arch().dropout > 0.0) {
        return Err(CoreError::Config(
            "MC dropout needs a model trained with dropout > 0".into(),
        ));
    }
    (0..t as u64)
        .map(|k| {
            p.forward(
                features,
                base,
                ForwardMode::Stochastic {
                    seed: mix_seed(seed, k),
                },
            )
            .map(|o| o.refined)
        })
        .collect()
}

/// One deterministic refined pointmap per member.
pub fn ensemble_sample(members: &[DensePredictor], features: &Grid, base: &PointMap) -> Result<Vec<PointMap>> {
    members
        .iter()
        .map(|m| m.forward(features, base, ForwardMode::Deterministic).map(|o| o.refined))
        .collect()
}

/// Per-pixel mean and diagonal variance of a sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatched {
    pub mean: PointMap,
    pub var: Vec<Vec3>,
}

impl MomentMatched {
    /// Trace of the diagonal covariance.
    pub fn uncertainty_map(&self) -> Result<UncertaintyMap> {
        ScalarMap::new(
            self.mean.height(),
            self.mean.width(),
            self.var.iter().map(|v| v.sum()).collect(),
        )
    }

    pub fn predictive_source(&self) -> PredictiveSource {
        PredictiveSource::Dists(gaussian_predictives(&self.mean, &self.var))
    }
}

pub fn gaussian_predictives(mean: &PointMap, var: &[Vec3]) -> Vec<PixelPredictive> {
    mean.points()
        .iter()
        .zip(var)
        .map(|(m, v)| PixelPredictive::DiagGaussian { mean: *m, var: *v })
        .collect()
}

fn raw_moments(samples: &[PointMap]) -> Result<(PointMap, Vec<Vec3>)> {
    let first = samples
        .first()
        .ok_or_else(|| CoreError::EmptyInput("no samples to moment-match".into()))?;
    let (h, w) = (first.height(), first.width());
    if samples.iter().any(|s| !s.same_dims(h, w)) {
        return Err(CoreError::Usage("samples differ in size".into()));
    }
    let n = samples.len() as f64;
    let mut mean = PointMap::zeros(h, w);
    for s in samples {
        for (m, x) in mean.points_mut().iter_mut().zip(s.points()) {
            *m += x;
        }
    }
    for m in mean.points_mut() {
        *m /= n;
    }
    let mut var = alloc::vec![Vec3::zeros(); h * w];
    if samples.len() > 1 {
        for s in samples {
            for ((v, x), m) in var.iter_mut().zip(s.points()).zip(mean.points()) {
                let d = x - m;
                *v += d.component_mul(&d);
            }
        }
        for v in &mut var {
            *v /= n - 1.0;
        }
    }
    Ok((mean, var))
}

/// Sample mean and unbiased sample variance plus `sigma0_sq` on each axis. A
/// single sample only works with a positive floor.
pub fn moment_match(samples: &[PointMap], sigma0_sq: f64) -> Result<MomentMatched> {
    if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "sigma0^2 must be non-negative, got {sigma0_sq}"
        )));
    }
    let (mean, mut var) = raw_moments(samples)?;
    if samples.len() == 1 && sigma0_sq == 0.0 {
        return Err(CoreError::Domain(
            "variance of a single sample needs a positive floor".into(),
        ));
    }
    for v in &mut var {
        v.add_scalar_mut(sigma0_sq);
    }
    Ok(MomentMatched { mean, var })
}

/// Picks the floor from [`SIGMA0_GRID`] with the lowest mean Gaussian NLL over
/// the valid pixels of the validation images (ties go to the smaller value).
/// Each entry is `(samples, ground truth, mask)`.
pub fn select_sigma0_sq(validation: &[(Vec<PointMap>, PointMap, Mask)]) -> Result<f64> {
    let mut moments = Vec::with_capacity(validation.len());
    for (samples, gt, mask) in validation {
        let (mean, var) = raw_moments(samples)?;
        if !gt.same_dims(mean.height(), mean.width()) || mask.height() != mean.height() || mask.width() != mean.width()
        {
            return Err(CoreError::Usage(
                "validation ground truth does not match the samples".into(),
            ));
        }
        moments.push((mean, var, gt, mask));
    }
    let mut best: Option<(f64, f64)> = None;
    for &s0 in &SIGMA0_GRID {
        let mut total = 0.0;
        let mut n = 0usize;
        for (mean, var, gt, mask) in &moments {
            for i in mask.indices() {
                let (m, v, x) = (mean.points()[i], var[i], gt.points()[i]);
                for c in 0..3 {
                    let vc = v[c] + s0;
                    let r = x[c] - m[c];
                    total += 0.5 * (LN_2PI + vc.ln() + r * r / vc);
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(CoreError::EmptyInput("no valid validation pixels".into()));
        }
        let nll = total / n as f64;
        if best.is_none_or(|(b, _)| nll < b) {
            best = Some((nll, s0));
        }
    }
    Ok(best.map(|(_, s)| s).unwrap_or(SIGMA0_GRID[0]))
}
