use alloc::format;
use alloc::vec::Vec;

use super::{ascending_order, check_finite, valid_pairs};
use crate::error::{CoreError, Result};
use crate::grid::{ErrorMap, UncertaintyMap};

/// Number of grid points used for coverage / sparsification curves.
pub const DEFAULT_GRID_SIZE: usize = 100;

/// A curve under uncertainty ranking and under the error-ranked oracle.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveSeries {
    pub x: Vec<f64>,
    pub y_unc: Vec<f64>,
    pub y_oracle: Vec<f64>,
}

impl CurveSeries {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn check_inputs(u: &[f64], e: &[f64], grid_size: usize) -> Result<()> {
    if u.len() != e.len() {
        return Err(CoreError::Usage(format!(
            "{} uncertainties vs {} errors",
            u.len(),
            e.len()
        )));
    }
    if u.is_empty() {
        return Err(CoreError::EmptyInput("no valid pixels".into()));
    }
    if grid_size < 2 {
        return Err(CoreError::Usage(format!("grid size must be >= 2, got {grid_size}")));
    }
    check_finite(u, "uncertainty")?;
    check_finite(e, "error")
}

/// `prefix[k]` = sum of the first `k` errors taken in `order`.
fn prefix_sums(e: &[f64], order: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(order.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for &i in order {
        acc += e[i];
        out.push(acc);
    }
    out
}

/// Risk-coverage curve on raw slices. Coverage `k/G` (`k = 1..=G`) keeps the
/// `max(1, floor(k N / G))` lowest-ranked pixels.
pub fn risk_coverage_values(u: &[f64], e: &[f64], grid_size: usize) -> Result<CurveSeries> {
    check_inputs(u, e, grid_size)?;
    let n = u.len();
    let by_u = prefix_sums(e, &ascending_order(u));
    let by_e = prefix_sums(e, &ascending_order(e));
    let mut curve = CurveSeries {
        x: Vec::with_capacity(grid_size),
        y_unc: Vec::with_capacity(grid_size),
        y_oracle: Vec::with_capacity(grid_size),
    };
    for k in 1..=grid_size {
        let keep = (k * n / grid_size).max(1);
        curve.x.push(k as f64 / grid_size as f64);
        curve.y_unc.push(by_u[keep] / keep as f64);
        curve.y_oracle.push(by_e[keep] / keep as f64);
    }
    Ok(curve)
}

pub fn risk_coverage(u: &UncertaintyMap, e: &ErrorMap, grid_size: usize) -> Result<CurveSeries> {
    let (uv, ev) = valid_pairs(u, e)?;
    risk_coverage_values(&uv, &ev, grid_size)
}

/// Area under the uncertainty-ranked risk curve: trapezoids between grid points,
/// plus the first value held constant on `[0, x_1]`.
pub fn aurc(curve: &CurveSeries) -> f64 {
    area(&curve.x, &curve.y_unc)
}

fn area(x: &[f64], y: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut a = x[0] * y[0];
    for k in 1..x.len() {
        a += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
    }
    a
}

/// Sparsification curves on raw slices. Fraction `s = k/G` (`k = 0..G`) removes
/// the `min(ceil(s N), N - 1)` highest-ranked pixels.
pub fn sparsification_values(u: &[f64], e: &[f64], grid_size: usize) -> Result<CurveSeries> {
    check_inputs(u, e, grid_size)?;
    let n = u.len();
    let by_u = prefix_sums(e, &ascending_order(u));
    let by_e = prefix_sums(e, &ascending_order(e));
    let mut curve = CurveSeries {
        x: Vec::with_capacity(grid_size),
        y_unc: Vec::with_capacity(grid_size),
        y_oracle: Vec::with_capacity(grid_size),
    };
    for k in 0..grid_size {
        let removed = (k * n).div_ceil(grid_size).min(n - 1);
        let keep = n - removed;
        curve.x.push(k as f64 / grid_size as f64);
        curve.y_unc.push(by_u[keep] / keep as f64);
        curve.y_oracle.push(by_e[keep] / keep as f64);
    }
    Ok(curve)
}

pub fn sparsification(u: &UncertaintyMap, e: &ErrorMap, grid_size: usize) -> Result<CurveSeries> {
    let (uv, ev) = valid_pairs(u, e)?;
    sparsification_values(&uv, &ev, grid_size)
}

/// Trapezoidal area of `y_unc - y_oracle` over the sparsification grid.
pub fn ause(curve: &CurveSeries) -> f64 {
    let mut a = 0.0;
    for k in 1..curve.len() {
        let g0 = curve.y_unc[k - 1] - curve.y_oracle[k - 1];
        let g1 = curve.y_unc[k] - curve.y_oracle[k];
        a += 0.5 * (curve.x[k] - curve.x[k - 1]) * (g0 + g1);
    }
    a
}

/// Pointwise mean of curves sharing one grid (per-image averaging).
pub fn mean_curves(curves: &[CurveSeries]) -> Result<CurveSeries> {
    let first = curves
        .first()
        .ok_or_else(|| CoreError::EmptyInput("no curves to average".into()))?;
    if curves.iter().any(|c| c.x != first.x) {
        return Err(CoreError::Usage("curves are on different grids".into()));
    }
    let n = curves.len() as f64;
    let mean = |f: fn(&CurveSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..first.len())
            .map(|k| curves.iter().map(|c| f(c)[k]).sum::<f64>() / n)
            .collect()
    };
    Ok(CurveSeries {
        x: first.x.clone(),
        y_unc: mean(|c| &c.y_unc),
        y_oracle: mean(|c| &c.y_oracle),
    })
}
