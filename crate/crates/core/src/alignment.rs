//! Similarity (Sim(3)) alignment of pointmaps and per-pixel 3D errors.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Matrix3;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::grid::{ErrorMap, Mask, PointMap, ScalarMap, Vec3};

/// Ratio below which the second singular value of the cross-covariance marks
/// the correspondences as collinear.
pub const COLLINEAR_RTOL: f64 = 1e-10;

/// `x -> scale * rotation * x + translation`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sim3Transform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for Sim3Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let t = Self {
            scale,
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    /// Checks `scale > 0`, `R^T R = I` and `det R = +1` to 1e-9.
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(CoreError::InvalidInput(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidInput("non-finite translation".into()));
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max();
        let det = self.rotation.determinant();
        if !(ortho <= 1e-9) || !((det - 1.0).abs() <= 1e-9) {
            return Err(CoreError::InvalidInput(format!(
                "rotation is not in SO(3) (|R^T R - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x * self.scale + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Sim3Transform) -> Sim3Transform {
        Sim3Transform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> Sim3Transform {
        let rt = self.rotation.transpose();
        Sim3Transform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }
}

fn check_dims(a: &PointMap, b: &PointMap, mask: &Mask) -> Result<()> {
    if !a.same_dims(b.height(), b.width()) || !a.same_dims(mask.height(), mask.width()) {
        return Err(CoreError::Usage(format!(
            "dimension mismatch: {}x{} vs {}x{} (mask {}x{})",
            a.height(),
            a.width(),
            b.height(),
            b.width(),
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

/// Closed-form least-squares similarity mapping `src` onto `dst` over the valid
/// pixels (Umeyama), with the reflection correction that keeps `det R = +1`.
pub fn umeyama_sim3(src: &PointMap, dst: &PointMap, mask: &Mask) -> Result<Sim3Transform> {
    check_dims(src, dst, mask)?;
    let idx = mask.indices();
    let (sp, dp) = (src.points(), dst.points());
    if idx.len() < 3 {
        return Err(CoreError::DegenerateGeometry(format!(
            "need at least 3 valid correspondences, got {}",
            idx.len()
        )));
    }
    if idx
        .iter()
        .any(|&i| !sp[i].iter().chain(dp[i].iter()).all(|v| v.is_finite()))
    {
        return Err(CoreError::InvalidInput("non-finite point among valid pixels".into()));
    }
    let n = idx.len() as f64;
    let mu_s = idx.iter().fold(Vec3::zeros(), |acc, &i| acc + sp[i]) / n;
    let mu_d = idx.iter().fold(Vec3::zeros(), |acc, &i| acc + dp[i]) / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for &i in &idx {
        let a = sp[i] - mu_s;
        let b = dp[i] - mu_d;
        cov += b * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(CoreError::Numeric("SVD did not converge".into())),
    };
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || !(var_s > 0.0) || sv[1] < COLLINEAR_RTOL * sv[0] {
        return Err(CoreError::DegenerateGeometry(format!(
            "rank-deficient correspondences (singular values {:e}, {:e}, {:e})",
            sv[0], sv[1], sv[2]
        )));
    }

    // Reflection correction flips the axis of the smallest singular value
    // (nalgebra does not order them).
    let mut flip = Vec3::repeat(1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        flip[svd.singular_values.imin()] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&flip) * v_t;
    let scale = svd.singular_values.dot(&flip) / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Sim3Transform {
        scale,
        rotation,
        translation,
    })
}

/// Transforms valid pixels (all pixels when `mask` is `None`); others pass through.
pub fn apply_sim3(t: &Sim3Transform, pm: &PointMap, mask: Option<&Mask>) -> Result<PointMap> {
    if let Some(m) = mask {
        if !pm.same_dims(m.height(), m.width()) {
            return Err(CoreError::Usage("mask does not match pointmap".into()));
        }
    }
    let points: Vec<Vec3> = pm
        .points()
        .iter()
        .enumerate()
        .map(|(i, x)| match mask {
            Some(m) if !m.values()[i] => *x,
            _ => t.apply(x),
        })
        .collect();
    PointMap::new(pm.height(), pm.width(), points)
}

/// Per-pixel `||pred - gt||`, optionally after fitting a Sim(3) from `pred` to `gt`
/// on the valid pixels. Invalid pixels carry 0.
pub fn point_errors(pred: &PointMap, gt: &PointMap, mask: &Mask, align: bool) -> Result<ErrorMap> {
    check_dims(pred, gt, mask)?;
    let aligned;
    let pred = if align {
        let t = umeyama_sim3(pred, gt, mask)?;
        aligned = apply_sim3(&t, pred, Some(mask))?;
        &aligned
    } else {
        pred
    };
    let e: Vec<f64> = pred
        .points()
        .iter()
        .zip(gt.points())
        .zip(mask.values())
        .map(|((p, g), &ok)| if ok { (p - g).norm() } else { 0.0 })
        .collect();
    Ok(ErrorMap {
        e: ScalarMap::new(pred.height(), pred.width(), e)?,
        mask: mask.clone(),
    })
}
