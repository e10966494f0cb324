use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::evidential::{nig_nll, niw_predictive, studentt_logpdf, NigParams, NiwParams};
use crate::grid::{Mask, PointMap, Vec3};
use crate::special::LN_2PI;

/// Per-pixel predictive distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum PixelPredictive {
    /// Multivariate Student-t marginal of an NIW.
    Niw(NiwParams),
    /// Independent per-axis Student-t marginals of three NIGs.
    Nig([NigParams; 3]),
    /// Diagonal Gaussian (heteroscedastic head or moment-matched samples).
    DiagGaussian { mean: Vec3, var: Vec3 },
}

impl PixelPredictive {
    /// Negative log-density of `x`.
    pub fn nll(&self, x: &Vec3) -> Result<f64> {
        match self {
            PixelPredictive::Niw(p) => Ok(-studentt_logpdf(&niw_predictive(p), x)?),
            PixelPredictive::Nig(ps) => Ok(ps.iter().zip(x.iter()).map(|(p, &y)| nig_nll(p, y)).sum()),
            PixelPredictive::DiagGaussian { mean, var } => {
                if !var.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    return Err(CoreError::Domain(format!(
                        "Gaussian variance must be positive, got {var:?}"
                    )));
                }
                Ok(0.5
                    * (0..3)
                        .map(|c| {
                            let r = x[c] - mean[c];
                            var[c].ln() + r * r / var[c] + LN_2PI
                        })
                        .sum::<f64>())
            }
        }
    }
}

/// What an uncertainty method provides for likelihood evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictiveSource {
    /// One predictive per pixel, row-major.
    Dists(Vec<PixelPredictive>),
    /// Heuristic confidences define no likelihood.
    ConfidenceOnly,
}

/// Mean negative log-likelihood of `gt` over valid pixels (no alignment).
pub fn eval_nll(source: &PredictiveSource, gt: &PointMap, mask: &Mask) -> Result<f64> {
    let dists = match source {
        PredictiveSource::Dists(d) => d,
        PredictiveSource::ConfidenceOnly => {
            return Err(CoreError::UnsupportedLikelihood(
                "confidence scores do not define a predictive likelihood".into(),
            ))
        }
    };
    if dists.len() != gt.len() || !gt.same_dims(mask.height(), mask.width()) {
        return Err(CoreError::Usage(format!(
            "{} predictives for a {}x{} pointmap",
            dists.len(),
            gt.height(),
            gt.width()
        )));
    }
    let idx = mask.indices();
    if idx.is_empty() {
        return Err(CoreError::EmptyInput("no valid pixels".into()));
    }
    let mut total = 0.0;
    for &i in &idx {
        total += dists[i].nll(&gt.points()[i])?;
    }
    Ok(total / idx.len() as f64)
}
