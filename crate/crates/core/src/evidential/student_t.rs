use alloc::format;

use nalgebra::{Cholesky, Matrix3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::grid::Vec3;
use crate::special::{ln_gamma, LN_PI};

/// Multivariate Student-t over 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentTMv {
    pub location: Vec3,
    /// Scale matrix (not the covariance).
    pub scale: Matrix3<f64>,
    pub dof: f64,
}

impl StudentTMv {
    /// `dof / (dof - 2) * scale`; `None` when `dof <= 2`.
    pub fn covariance(&self) -> Option<Matrix3<f64>> {
        (self.dof > 2.0).then(|| self.scale * (self.dof / (self.dof - 2.0)))
    }
}

/// Lower Cholesky factor of a symmetric 3x3 matrix.
pub(crate) fn cholesky_lower(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(CoreError::Numeric(format!("non-finite matrix {m:?}")));
    }
    let sym = (m + m.transpose()) * 0.5;
    if (sym - m).abs().max() > 1e-9 * m.abs().max().max(1.0) {
        return Err(CoreError::Numeric("matrix is not symmetric".into()));
    }
    Cholesky::new(sym)
        .map(|c| c.l())
        .ok_or_else(|| CoreError::Numeric("matrix is not positive definite".into()))
}

/// Log-density of a 3D Student-t, evaluated through the Cholesky factor of the
/// scale (log-determinant from its diagonal, Mahalanobis term by a triangular solve).
pub fn studentt_logpdf(dist: &StudentTMv, x: &Vec3) -> Result<f64> {
    if !(dist.dof > 0.0) || !dist.dof.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "dof must be positive, got {}",
            dist.dof
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(CoreError::InvalidInput("non-finite evaluation point".into()));
    }
    let l = cholesky_lower(&dist.scale)?;
    let r = x - dist.location;
    let z = l
        .solve_lower_triangular(&r)
        .ok_or_else(|| CoreError::Numeric("singular scale factor".into()))?;
    let delta = z.norm_squared();
    let log_det = 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln() + l[(2, 2)].ln());
    let d = 3.0;
    let nu = dist.dof;
    Ok(ln_gamma(0.5 * (nu + d))
        - ln_gamma(0.5 * nu)
        - 0.5 * (d * (nu.ln() + LN_PI) + log_det)
        - 0.5 * (nu + d) * (delta / nu).ln_1p())
}

/// Log-density of a univariate Student-t with location `mu`, scale parameter
/// `lambda` (variance-like, so the density uses `sqrt(lambda)`) and `df` degrees of freedom.
pub fn studentt1_logpdf(y: f64, mu: f64, lambda: f64, df: f64) -> f64 {
    let t = (y - mu) * (y - mu) / lambda;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df.ln() + LN_PI + lambda.ln())
        - 0.5 * (df + 1.0) * (t / df).ln_1p()
}
