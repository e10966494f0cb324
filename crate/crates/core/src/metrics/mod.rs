//! Geometry and uncertainty-quality metrics.
//!
//! Rankings are ascending in `(value, pixel index)`, so every curve and rank
//! statistic is deterministic under ties.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::grid::{ErrorMap, UncertaintyMap};

mod curves;
mod morphology;
mod nll;
mod pointcloud;
mod ranking;
mod report;

pub use curves::{
    aurc, ause, mean_curves, risk_coverage, risk_coverage_values, sparsification, sparsification_values, CurveSeries,
    DEFAULT_GRID_SIZE,
};
pub use morphology::{dilate, erode, ring_band};
pub use nll::{eval_nll, PixelPredictive, PredictiveSource};
pub use pointcloud::{pointcloud_metrics, KdTree, PointcloudMetrics, DEFAULT_F1_THRESHOLD};
pub use ranking::{auroc_fpr, auroc_fpr_values, average_ranks, spearman_rho, spearman_rho_values, RocSummary};
pub use report::{image_metrics, DatasetMetrics, ImageMetrics, MetricReport, RingMetrics};

/// `(mean, root-mean-square)` of the valid errors.
pub fn mae_rmse(e: &ErrorMap) -> Result<(f64, f64)> {
    let v = e.valid_errors();
    if v.is_empty() {
        return Err(CoreError::EmptyInput("error map has no valid pixels".into()));
    }
    let n = v.len() as f64;
    let mae = v.iter().sum::<f64>() / n;
    let rmse = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    Ok((mae, rmse))
}

/// Uncertainties and errors at the error map's valid pixels, in pixel order.
pub(crate) fn valid_pairs(u: &UncertaintyMap, e: &ErrorMap) -> Result<(Vec<f64>, Vec<f64>)> {
    if u.height() != e.e.height() || u.width() != e.e.width() {
        return Err(CoreError::Usage(format!(
            "uncertainty map {}x{} does not match error map {}x{}",
            u.height(),
            u.width(),
            e.e.height(),
            e.e.width()
        )));
    }
    let uv = u.masked(&e.mask);
    let ev = e.valid_errors();
    if uv.is_empty() {
        return Err(CoreError::EmptyInput("no valid pixels".into()));
    }
    check_finite(&uv, "uncertainty")?;
    check_finite(&ev, "error")?;
    Ok((uv, ev))
}

pub(crate) fn check_finite(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CoreError::InvalidInput(format!("non-finite {what} at valid index {i}"))),
        None => Ok(()),
    }
}

/// Indices sorted ascending by `(keys[i], i)`.
pub(crate) fn ascending_order(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Mask, ScalarMap};
    use alloc::vec;

    fn emap(v: Vec<f64>) -> ErrorMap {
        let n = v.len();
        ErrorMap {
            e: ScalarMap::new(1, n, v).unwrap(),
            mask: Mask::full(1, n),
        }
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae_rmse(&emap(vec![0.25; 7])).unwrap(), (0.25, 0.25));
        let (mae, rmse) = mae_rmse(&emap(vec![0.0, 2.0])).unwrap();
        assert_eq!(mae, 1.0);
        assert_eq!(rmse, 2.0f64.sqrt());
        let mut e = emap(vec![1.0, 2.0]);
        e.mask = Mask::empty(1, 2);
        assert!(matches!(mae_rmse(&e), Err(CoreError::EmptyInput(_))));
    }

    #[test]
    fn mae_ignores_invalid_pixels() {
        let mut e = emap(vec![1.0, 100.0, 3.0]);
        e.mask.set(0, 1, false);
        assert_eq!(mae_rmse(&e).unwrap().0, 2.0);
    }

    #[test]
    fn ascending_order_breaks_ties_by_index() {
        assert_eq!(ascending_order(&[2.0, 1.0, 2.0, 1.0]), vec![1, 3, 0, 2]);
    }
}
