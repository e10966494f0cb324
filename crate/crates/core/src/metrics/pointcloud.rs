use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::grid::{Mask, PointMap, Vec3};

pub const DEFAULT_F1_THRESHOLD: f64 = 0.05;

/// Static 3-D k-d tree for exact nearest-neighbour queries.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Clone, Debug)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build_rec(&mut idx);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize]) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        // Split on the axis of largest extent.
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = idx.len() / 2;
        let pts = &self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let node = self.nodes.len();
        self.nodes.push(Node {
            point: idx[mid],
            axis,
            left: None,
            right: None,
        });
        let (left, rest) = idx.split_at_mut(mid);
        let left = self.build_rec(left);
        let right = self.build_rec(&mut rest[1..]);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(index, squared distance)` of the nearest stored point; `None` when empty.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, q, &mut best);
        self.root.map(|_| best)
    }

    fn search(&self, node: Option<usize>, q: &Vec3, best: &mut (usize, f64)) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let p = &self.points[node.point];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && node.point < best.0) {
            *best = (node.point, d2);
        }
        let diff = q[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, q, best);
        if diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointcloudMetrics {
    /// Mean distance from predicted points to their nearest ground-truth point.
    pub accuracy: f64,
    /// Mean distance from ground-truth points to their nearest prediction.
    pub completeness: f64,
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

/// Nearest-neighbour distances of every `query` point into `tree`.
fn nn_distances(tree: &KdTree, query: &[Vec3]) -> Vec<f64> {
    query
        .iter()
        .map(|q| tree.nearest(q).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .collect()
}

/// Accuracy / completeness / Chamfer and F1 at `threshold` between the valid
/// pixels of two pointmaps (treated as unordered clouds). A point counts as a
/// match when its nearest neighbour is strictly closer than `threshold`.
pub fn pointcloud_metrics(pred: &PointMap, gt: &PointMap, mask: &Mask, threshold: f64) -> Result<PointcloudMetrics> {
    if !(threshold > 0.0) {
        return Err(CoreError::Usage(format!("threshold must be positive, got {threshold}")));
    }
    if !pred.same_dims(gt.height(), gt.width()) || !pred.same_dims(mask.height(), mask.width()) {
        return Err(CoreError::Usage("pointmaps and mask differ in size".into()));
    }
    let idx = mask.indices();
    if idx.is_empty() {
        return Err(CoreError::EmptyInput("no valid points".into()));
    }
    let p: Vec<Vec3> = idx.iter().map(|&i| pred.points()[i]).collect();
    let g: Vec<Vec3> = idx.iter().map(|&i| gt.points()[i]).collect();
    if p.iter().chain(&g).any(|x| !x.iter().all(|v| v.is_finite())) {
        return Err(CoreError::InvalidInput("non-finite point".into()));
    }
    Ok(cloud_metrics(&p, &g, threshold))
}

pub(crate) fn cloud_metrics(p: &[Vec3], g: &[Vec3], threshold: f64) -> PointcloudMetrics {
    let d_pg = nn_distances(&KdTree::build(g), p);
    let d_gp = nn_distances(&KdTree::build(p), g);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let frac = |v: &[f64]| v.iter().filter(|&&d| d < threshold).count() as f64 / v.len() as f64;
    let (accuracy, completeness) = (mean(&d_pg), mean(&d_gp));
    let (precision, recall) = (frac(&d_pg), frac(&d_gp));
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PointcloudMetrics {
        accuracy,
        completeness,
        chamfer: 0.5 * (accuracy + completeness),
        precision,
        recall,
        f1,
        threshold,
    }
}
