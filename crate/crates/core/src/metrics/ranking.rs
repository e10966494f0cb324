use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::{ascending_order, check_finite, valid_pairs};
use crate::error::{CoreError, Result};
use crate::grid::{ErrorMap, Mask, UncertaintyMap};

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let order = ascending_order(v);
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation (Pearson on average ranks) of two equal-length slices.
pub fn spearman_rho_values(u: &[f64], e: &[f64]) -> Result<f64> {
    if u.len() != e.len() {
        return Err(CoreError::Usage(format!("{} vs {} values", u.len(), e.len())));
    }
    if u.len() < 2 {
        return Err(CoreError::UndefinedMetric("Spearman needs at least 2 pixels".into()));
    }
    check_finite(u, "uncertainty")?;
    check_finite(e, "error")?;
    let ru = average_ranks(u);
    let re = average_ranks(e);
    // Both rank vectors share the mean (n + 1) / 2.
    let mean = (u.len() + 1) as f64 / 2.0;
    let (mut cov, mut vu, mut ve) = (0.0, 0.0, 0.0);
    for (a, b) in ru.iter().zip(&re) {
        let (da, db) = (a - mean, b - mean);
        cov += da * db;
        vu += da * da;
        ve += db * db;
    }
    if vu == 0.0 || ve == 0.0 {
        return Err(CoreError::UndefinedMetric("constant ranking on one side".into()));
    }
    Ok((cov / (vu.sqrt() * ve.sqrt())).clamp(-1.0, 1.0))
}

pub fn spearman_rho(u: &UncertaintyMap, e: &ErrorMap) -> Result<f64> {
    let (uv, ev) = valid_pairs(u, e)?;
    spearman_rho_values(&uv, &ev)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocSummary {
    pub auroc: f64,
    pub fpr_at_95tpr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// AUROC (Mann-Whitney, ties count 1/2) and the smallest FPR among thresholds
/// reaching TPR >= 0.95, for higher-score-is-positive.
pub fn auroc_fpr_values(scores: &[f64], labels: &[bool]) -> Result<RocSummary> {
    if scores.len() != labels.len() {
        return Err(CoreError::Usage(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_finite(scores, "score")?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::UndefinedMetric(format!(
            "need both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    let auroc = (rank_sum - p * (p + 1.0) / 2.0) / (p * q);

    // Sweep thresholds from high to low; tied scores enter together.
    let order = ascending_order(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut end = order.len();
    let mut fpr = 1.0;
    while end > 0 {
        let s = scores[order[end - 1]];
        while end > 0 && scores[order[end - 1]] == s {
            if labels[order[end - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end -= 1;
        }
        if tp * 100 >= 95 * n_pos {
            fpr = fp as f64 / q;
            break;
        }
    }
    Ok(RocSummary {
        auroc,
        fpr_at_95tpr: fpr,
        n_pos,
        n_neg,
    })
}

/// ROC summary over the pixels of `region`, with `labels` marking positives.
pub fn auroc_fpr(scores: &UncertaintyMap, labels: &Mask, region: &Mask) -> Result<RocSummary> {
    let dims = (scores.height(), scores.width());
    if (labels.height(), labels.width()) != dims || (region.height(), region.width()) != dims {
        return Err(CoreError::Usage("scores, labels and region differ in size".into()));
    }
    let s = scores.masked(region);
    let l: Vec<bool> = region.indices().into_iter().map(|i| labels.values()[i]).collect();
    auroc_fpr_values(&s, &l)
}
