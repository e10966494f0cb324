use alloc::vec::Vec;

use super::curves::{aurc, ause, risk_coverage, sparsification, CurveSeries};
use super::mae_rmse;
use super::pointcloud::PointcloudMetrics;
use super::ranking::spearman_rho;
use crate::error::{CoreError, Result};
use crate::grid::{ErrorMap, UncertaintyMap};

/// Metrics of one image.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the ranking on either side is constant.
    pub spearman_rho: Option<f64>,
    pub aurc: f64,
    pub ause: f64,
    pub nll: Option<f64>,
    pub n_valid: usize,
}

/// Arithmetic means of the per-image records. Optional fields average over
/// the images where they are defined and count the rest as missing.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetMetrics {
    pub n_images: usize,
    pub mae: f64,
    pub rmse: f64,
    pub spearman_rho: Option<f64>,
    pub spearman_missing: usize,
    pub aurc: f64,
    pub ause: f64,
    pub nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RingMetrics {
    pub auroc: f64,
    pub fpr_at_95tpr: f64,
    pub ring_radius: usize,
    pub n_scored: usize,
    pub n_skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub per_image: Vec<ImageMetrics>,
    pub dataset: DatasetMetrics,
    pub pointcloud: Option<PointcloudMetrics>,
    pub ring: Option<RingMetrics>,
}

fn mean_of<I: Iterator<Item = f64>>(it: I) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in it {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl DatasetMetrics {
    pub fn from_images(per_image: &[ImageMetrics]) -> Result<Self> {
        if per_image.is_empty() {
            return Err(CoreError::EmptyInput("no per-image metrics".into()));
        }
        let n = per_image.len() as f64;
        let sum = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        let rhos = per_image.iter().filter_map(|m| m.spearman_rho);
        // NLL is reported only when every image has one.
        let nll = if per_image.iter().all(|m| m.nll.is_some()) {
            mean_of(per_image.iter().filter_map(|m| m.nll))
        } else {
            None
        };
        Ok(Self {
            n_images: per_image.len(),
            mae: sum(|m| m.mae),
            rmse: sum(|m| m.rmse),
            spearman_rho: mean_of(rhos),
            spearman_missing: per_image.iter().filter(|m| m.spearman_rho.is_none()).count(),
            aurc: sum(|m| m.aurc),
            ause: sum(|m| m.ause),
            nll,
        })
    }
}

impl MetricReport {
    pub fn from_images(per_image: Vec<ImageMetrics>) -> Result<Self> {
        let dataset = DatasetMetrics::from_images(&per_image)?;
        Ok(Self {
            per_image,
            dataset,
            pointcloud: None,
            ring: None,
        })
    }
}

/// Per-image ranking and error metrics plus the two curves they come from
/// (risk-coverage, sparsification). `nll` is left `None` for the caller.
pub fn image_metrics(
    u: &UncertaintyMap,
    e: &ErrorMap,
    grid_size: usize,
) -> Result<(ImageMetrics, CurveSeries, CurveSeries)> {
    let (mae, rmse) = mae_rmse(e)?;
    let rc = risk_coverage(u, e, grid_size)?;
    let sp = sparsification(u, e, grid_size)?;
    let spearman_rho = match spearman_rho(u, e) {
        Ok(r) => Some(r),
        Err(CoreError::UndefinedMetric(_)) => None,
        Err(err) => return Err(err),
    };
    let m = ImageMetrics {
        mae,
        rmse,
        spearman_rho,
        aurc: aurc(&rc),
        ause: ause(&sp),
        nll: None,
        n_valid: e.mask.count(),
    };
    Ok((m, rc, sp))
}
